"""Piecewise-deterministic jump process on pure states of the total system.

Between events the (unnormalized) state follows

    phi(t) = exp((-i H_a - Lambda_a / 2) t) psi,

and ``|phi(t)|^2`` is the probability that no event has happened yet.  An
event time is drawn by inverting that survival function against a uniform
variate; the target sector ``b`` is then picked with probability
``|g_ba psi|^2 / lambda`` and the state jumps to ``g_ba psi / |g_ba psi|``.

The same engine runs any model exposing ``channels``, which is how the
quantum-jump unraveling of a plain Lindblad model reuses it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import brentq

from .errors import InputError, InvalidState, ZeroIntensity
from .model import HybridPureState, Model
from .numerics import DEFAULT_TOL, RngStream, ToleranceConfig, matexp

DEFAULT_FLOW_STEP = 1e-2
WAIT_XTOL = 1e-12


@dataclass(frozen=True)
class SimulationConfig:
    horizon: float
    grid: tuple = ()
    max_flow_step: float = DEFAULT_FLOW_STEP
    seed: int = 0
    n_trajectories: int = 1

    def __post_init__(self):
        grid = tuple(float(t) for t in self.grid)
        object.__setattr__(self, "grid", grid)
        if self.horizon < 0:
            raise InputError(f"horizon must be non-negative, got {self.horizon!r}")
        if not self.max_flow_step > 0:
            raise InputError(f"max_flow_step must be positive, got {self.max_flow_step!r}")
        if any(t < 0 or t > self.horizon for t in grid):
            raise InputError("grid times must lie in [0, horizon]")
        if list(grid) != sorted(set(grid)):
            raise InputError("grid times must be strictly increasing")
        if self.n_trajectories < 1:
            raise InputError("n_trajectories must be at least 1")


def uniform_grid(horizon: float, count: int = 9) -> tuple:
    if count < 1:
        raise InputError("grid needs at least one point")
    if count == 1:
        return (float(horizon),)
    return tuple(float(t) for t in np.linspace(0.0, horizon, count))


@dataclass(frozen=True)
class JumpEvent:
    t: float
    from_sector: int
    to_sector: int
    psi: np.ndarray
    channel: int = -1


@dataclass
class TrajectoryRecord:
    initial: HybridPureState
    horizon: float
    stream_index: int
    events: list = field(default_factory=list)
    grid_states: list = field(default_factory=list)  # (t, HybridPureState)

    @property
    def jump_count(self) -> int:
        return len(self.events)

    def jumps_before(self, t: float) -> int:
        """Number of events at times <= t (paths are right-continuous)."""
        return sum(1 for e in self.events if e.t <= t)


# -- single-step building blocks ----------------------------------------------

def effective_flow(model: Model, sector: int, psi, dt: float) -> np.ndarray:
    """Unnormalized no-jump evolution of ``psi`` in ``sector`` for time ``dt``."""
    if dt < 0:
        raise InputError(f"dt must be non-negative, got {dt!r}")
    if not 0 <= sector < model.m:
        raise IndexError(f"sector {sector} out of range")
    psi = np.asarray(psi, dtype=complex)
    if dt == 0:
        return psi.copy()
    return matexp(model.effective_generator(sector) * dt) @ psi


def _check_unit(psi, tol):
    norm2 = np.vdot(psi, psi).real
    if abs(norm2 - 1.0) > tol:
        raise InvalidState(f"state is not normalized (|psi|^2 = {norm2!r})")


def channel_weights(model: Model, sector: int, psi) -> list[tuple[int, float, np.ndarray]]:
    """``(to, |g psi|^2, g psi)`` for every channel leaving ``sector``."""
    out = []
    for to, g in model.outgoing(sector):
        image = g @ psi
        out.append((to, float(np.vdot(image, image).real), image))
    return out


def jump_intensity(model: Model, sector: int, psi, tol: ToleranceConfig = DEFAULT_TOL) -> float:
    """Total event rate <psi|Lambda_a|psi> of a unit vector."""
    psi = np.asarray(psi, dtype=complex)
    _check_unit(psi, tol.normalization)
    return float(sum(w for _, w, _ in channel_weights(model, sector, psi)))


class FlowCache:
    """Per-sector no-jump generators and cached step propagators.

    ``_powers[a][k]`` is the flow over ``(k + 1)`` steps, so a block of steps
    costs one batched matrix-vector product.
    """

    block = 32

    def __init__(self, model: Model, step: float = DEFAULT_FLOW_STEP):
        self.model = model
        self.step = float(step)
        self._gen = [model.effective_generator(a) for a in range(model.m)]
        self._silent = [not np.any(model.lambda_op(a)) for a in range(model.m)]
        self._powers = [None] * model.m

    def generator(self, sector):
        return self._gen[sector]

    def _block(self, sector):
        if self._powers[sector] is None:
            gen = self._gen[sector]
            self._powers[sector] = np.stack([matexp(gen * (self.step * (k + 1)))
                                             for k in range(self.block)])
        return self._powers[sector]

    def propagate(self, sector, psi, dt):
        if dt == 0:
            return psi
        return matexp(self._gen[sector] * dt) @ psi

    def first_passage(self, sector, psi, r, horizon):
        """Smallest t <= horizon with |phi(t)|^2 = r, or None if the state survives.

        Steps of ``self.step`` bracket the crossing (the survival function is
        nonincreasing) and Brent's method refines it inside the bracket.
        """
        if self._silent[sector] or horizon <= 0:
            return None
        gen, h = self._gen[sector], self.step
        powers = self._block(sector)
        full = int(np.floor(horizon / h * (1 + 1e-14)))
        j, phi = 0, psi
        while j < full:
            k = min(self.block, full - j)
            path = powers[:k] @ phi
            surv = np.einsum("ki,ki->k", path.conj(), path).real
            hit = np.flatnonzero(surv <= r)
            if hit.size:
                i = int(hit[0])
                start = phi if i == 0 else path[i - 1]
                return self._refine(gen, start, r, (j + i) * h, h, surv[i])
            j += k
            phi = path[-1]
        rest = horizon - full * h
        if rest > 0:
            nxt = matexp(gen * rest) @ phi
            surv = np.vdot(nxt, nxt).real
            if surv <= r:
                return self._refine(gen, phi, r, full * h, rest, surv)
        return None

    @staticmethod
    def _refine(gen, start, r, t0, dt, surv_end):
        if surv_end == r:
            return t0 + dt

        def excess(s):
            p = matexp(gen * s) @ start
            return np.vdot(p, p).real - r

        if excess(0.0) <= 0.0:
            return t0
        return t0 + brentq(excess, 0.0, dt, xtol=WAIT_XTOL, rtol=4 * np.finfo(float).eps)


def sample_waiting_time(model: Model, sector: int, psi, r: float, horizon: float,
                        max_flow_step: float = DEFAULT_FLOW_STEP):
    """Time of the next event for survival level ``r``; ``None`` if it falls after ``horizon``."""
    if not 0.0 < r < 1.0:
        raise InputError(f"r must lie in (0, 1), got {r!r}")
    psi = np.asarray(psi, dtype=complex)
    return FlowCache(model, max_flow_step).first_passage(sector, psi, r, horizon)


def sample_jump_target(model: Model, sector: int, psi, u: float):
    """Choose the event target by a cumulative scan over ascending target sectors.

    Returns ``(to_sector, new_psi, channel_index)``.
    """
    psi = np.asarray(psi, dtype=complex)
    weights = channel_weights(model, sector, psi)
    total = sum(w for _, w, _ in weights)
    if not total > 0.0:
        raise ZeroIntensity(f"no open channel out of sector {sector}")
    acc = 0.0
    chosen = None
    for k, (to, w, image) in enumerate(weights):
        if w <= 0.0:
            continue
        acc += w / total
        chosen = (to, image, k)
        if u < acc:
            break
    to, image, k = chosen
    return to, image / np.sqrt(np.vdot(image, image).real), k


# -- trajectories ---------------------------------------------------------------

JumpMap = Callable[[Model, int, np.ndarray, float], tuple]


def run_jump_trajectory(model: Model, x0: HybridPureState, config: SimulationConfig,
                        stream: RngStream, jump_map: JumpMap = sample_jump_target,
                        flows: FlowCache | None = None) -> TrajectoryRecord:
    """Alternate survival-inverted flows and jumps until the horizon.

    Each segment consumes one uniform for the survival level and, if an
    event occurs, one uniform for the channel choice.
    """
    flows = flows or FlowCache(model, config.max_flow_step)
    rec = TrajectoryRecord(initial=x0, horizon=config.horizon, stream_index=stream.stream_index)
    grid = config.grid
    gi = 0
    t, sector, psi = 0.0, x0.sector, np.array(x0.psi, dtype=complex)
    while True:
        r = stream.open_uniform()
        wait = flows.first_passage(sector, psi, r, config.horizon - t)
        t_next = np.inf if wait is None else t + wait
        while gi < len(grid) and grid[gi] < t_next:
            phi = flows.propagate(sector, psi, grid[gi] - t)
            rec.grid_states.append((grid[gi], HybridPureState(sector, phi / np.linalg.norm(phi))))
            gi += 1
        if wait is None:
            break
        phi = flows.propagate(sector, psi, wait)
        phi = phi / np.linalg.norm(phi)
        to, new_psi, channel = jump_map(model, sector, phi, stream.uniform())
        rec.events.append(JumpEvent(t_next, sector, to, new_psi, channel))
        t, sector, psi = t_next, to, new_psi
    return rec


def simulate_trajectory(model: Model, x0: HybridPureState, config: SimulationConfig,
                        stream: RngStream, flows: FlowCache | None = None) -> TrajectoryRecord:
    """One history of the hybrid jump process, deterministic given ``stream``."""
    x0.check(model)
    return run_jump_trajectory(model, x0, config, stream, sample_jump_target, flows)


def ensemble_density(model: Model, x0: HybridPureState, config: SimulationConfig, workers: int = 1):
    """Monte Carlo estimate of the block density on ``config.grid``."""
    from .ensemble import parallel_ensemble

    return parallel_ensemble("pdp", model, x0, config, workers=workers)
