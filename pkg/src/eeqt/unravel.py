"""Two unravelings of one Lindblad equation on a single quantum system.

* Quantum state diffusion: a Brownian-driven SDE whose norm is conserved
  exactly in continuous time, integrated with Euler-Maruyama and
  renormalized after every step.
* Quantum jumps (MCWF): a point process with intensity <a*a>, deterministic
  flow exp((-iH - a*a/2) t) between jumps and the jump map psi -> a psi.

Both average to the same density matrix, but their paths differ.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import DarkState, InputError, StepCollapse, ZeroIntensity
from .model import HybridPureState, PureLindbladModel, SIGMA_X
from .numerics import RngStream, as_matrix, as_vector, projector
from .pdp import (
    FlowCache,
    SimulationConfig,
    TrajectoryRecord,
    channel_weights,
    run_jump_trajectory,
)

DARK_TOL = 1e-300


class JumpPhase(str, Enum):
    """Global phase given to the post-jump state.

    ``ZERO``: the phase is fixed so that the largest component of ``a psi`` is
    real and positive (h = 0 for the lowering operator).  ``PAPER_H``: the
    literal image ``a psi / |a psi|``, i.e. e^{ih} = psi_2 / |psi_2| for the
    lowering operator.
    """

    ZERO = "zero"
    PAPER_H = "paper_h"


def _expect(a, psi):
    norm2 = np.vdot(psi, psi).real
    if norm2 == 0.0:
        raise InputError("expectation value of the zero vector")
    return np.vdot(psi, a @ psi) / norm2


def _nonzero(psi):
    psi = as_vector(psi, "psi")
    if not np.any(psi):
        raise InputError("psi must be nonzero")
    return psi


# -- quantum state diffusion --------------------------------------------------

def qsd_drift(a, psi) -> np.ndarray:
    """(<a*> a - a*a / 2) psi - <a*><a> psi / 2."""
    a, psi = as_matrix(a, "a"), _nonzero(psi)
    ea = _expect(a, psi)
    return np.conj(ea) * (a @ psi) - 0.5 * (a.conj().T @ (a @ psi)) - 0.5 * abs(ea) ** 2 * psi


def qsd_diffusion(a, psi) -> np.ndarray:
    """a psi - <a> psi."""
    a, psi = as_matrix(a, "a"), _nonzero(psi)
    return a @ psi - _expect(a, psi) * psi


@dataclass(frozen=True)
class DiffusionConfig:
    dt: float
    horizon: float
    grid: tuple = ()
    seed: int = 0
    n_trajectories: int = 1
    renormalize_each_step: bool = True

    def __post_init__(self):
        grid = tuple(float(t) for t in self.grid)
        object.__setattr__(self, "grid", grid)
        if not self.dt > 0:
            raise InputError(f"dt must be positive, got {self.dt!r}")
        if self.horizon < 0:
            raise InputError("horizon must be non-negative")
        if any(t < 0 or t > self.horizon for t in grid):
            raise InputError("grid times must lie in [0, horizon]")
        if list(grid) != sorted(set(grid)):
            raise InputError("grid times must be strictly increasing")
        if self.n_trajectories < 1:
            raise InputError("n_trajectories must be at least 1")

    def mesh(self, refine: int = 0) -> np.ndarray:
        """Time points: multiples of dt merged with the grid, each interval split 2**refine times."""
        n = int(np.floor(self.horizon / self.dt + 1e-9))
        pts = [k * self.dt for k in range(n + 1)]
        snap = 1e-6 * self.dt
        for g in self.grid:
            pts = [p for p in pts if abs(p - g) > snap]
            pts.append(g)
        if self.horizon - max(pts) > snap:
            pts.append(self.horizon)
        coarse = np.array(sorted(pts))
        if refine == 0:
            return coarse
        parts = 2 ** refine
        fine = [coarse[0]]
        for lo, hi in zip(coarse[:-1], coarse[1:]):
            fine.extend(lo + (hi - lo) * np.arange(1, parts) / parts)
            fine.append(hi)
        return np.array(fine)


def _apply(op, psis):
    """Row-wise ``op @ psi`` with a fixed summation order, independent of batch size."""
    out = np.zeros((psis.shape[0], op.shape[0]), dtype=complex)
    for j in range(op.shape[1]):
        out += psis[:, j:j + 1] * op[:, j][None, :]
    return out


def _rowdot(x, y):
    """Row-wise <x, y>, summed in a fixed order."""
    acc = np.zeros(x.shape[0], dtype=complex)
    for j in range(x.shape[1]):
        acc += np.conj(x[:, j]) * y[:, j]
    return acc


def _qsd_integrate(model: PureLindbladModel, psi0, mesh, increments, grid, renormalize=True):
    """Euler-Maruyama over ``mesh`` for a batch of Brownian paths.

    ``increments`` has shape (batch, len(mesh) - 1, n_ops).  Returns the
    normalized states at ``grid`` times, shape (batch, len(grid), dim).
    """
    batch = increments.shape[0]
    ops = model.lindblad_ops
    ops_dag_ops = [v.conj().T @ v for v in ops]
    h = model.hamiltonian
    has_h = bool(np.any(h))
    psi = np.tile(np.asarray(psi0, dtype=complex), (batch, 1))
    grid_idx = {float(g): i for i, g in enumerate(grid)}
    out = np.empty((batch, len(grid), psi.shape[1]), dtype=complex)

    def record(t, state):
        i = grid_idx.get(float(t))
        if i is not None:
            nrm = np.sqrt(_rowdot(state, state).real)
            out[:, i, :] = state / nrm[:, None]

    record(mesh[0], psi)
    for s in range(len(mesh) - 1):
        dt = mesh[s + 1] - mesh[s]
        norm2 = _rowdot(psi, psi).real
        drift = _apply(-1j * h, psi) if has_h else np.zeros_like(psi)
        noise = np.zeros_like(psi)
        for k, (v, vdv) in enumerate(zip(ops, ops_dag_ops)):
            vpsi = _apply(v, psi)
            ev = _rowdot(psi, vpsi) / norm2
            drift += (np.conj(ev)[:, None] * vpsi - 0.5 * _apply(vdv, psi)
                      - 0.5 * (np.abs(ev) ** 2)[:, None] * psi)
            noise += (vpsi - ev[:, None] * psi) * increments[:, s, k][:, None]
        psi = psi + drift * dt + noise
        if renormalize:
            nrm = np.sqrt(_rowdot(psi, psi).real)
            if np.any(nrm == 0.0):
                raise StepCollapse(f"Euler-Maruyama step at t={mesh[s]:g} produced the zero vector")
            psi = psi / nrm[:, None]
        record(mesh[s + 1], psi)
    return out


def _check_pure(model, psi0):
    if not isinstance(model, PureLindbladModel):
        raise InputError("pure-state unravelings need a PureLindbladModel")
    psi0 = as_vector(psi0.psi if isinstance(psi0, HybridPureState) else psi0, "psi0")
    HybridPureState(0, psi0).check(model)
    return psi0


def qsd_increments(streams, mesh, n_ops):
    """Brownian increments on ``mesh``, one row of normals per stream."""
    intervals = np.diff(mesh)
    out = np.empty((len(streams), len(intervals), n_ops))
    for b, stream in enumerate(streams):
        out[b] = stream.normal((len(intervals), n_ops)) * np.sqrt(intervals)[:, None]
    return out


def qsd_batch(model, psi0, config: DiffusionConfig, indices, chunk=512):
    """Grid states for trajectories ``indices``, shape (len(indices), len(grid), dim)."""
    psi0 = _check_pure(model, psi0)
    mesh = config.mesh()
    n_ops = len(model.lindblad_ops)
    parts = []
    indices = list(indices)
    for lo in range(0, len(indices), chunk):
        streams = [RngStream(config.seed, i) for i in indices[lo:lo + chunk]]
        incs = qsd_increments(streams, mesh, n_ops)
        parts.append(_qsd_integrate(model, psi0, mesh, incs, config.grid,
                                    config.renormalize_each_step))
    if not parts:
        return np.empty((0, len(config.grid), len(psi0)), dtype=complex)
    return np.concatenate(parts)


def qsd_simulate(model: PureLindbladModel, psi0, config: DiffusionConfig,
                 stream: RngStream) -> TrajectoryRecord:
    """One diffusive trajectory sampled on ``config.grid``."""
    psi0 = _check_pure(model, psi0)
    mesh = config.mesh()
    incs = qsd_increments([stream], mesh, len(model.lindblad_ops))
    states = _qsd_integrate(model, psi0, mesh, incs, config.grid, config.renormalize_each_step)[0]
    rec = TrajectoryRecord(initial=HybridPureState(0, psi0), horizon=config.horizon,
                           stream_index=stream.stream_index)
    rec.grid_states = [(t, HybridPureState(0, s)) for t, s in zip(config.grid, states)]
    return rec


def qsd_refinement_study(model, psi0, config: DiffusionConfig, levels: int = 3, chunk: int = 512):
    """Ensemble means of projectors at dt, dt/2, ... driven by shared Brownian paths.

    Returns an array of shape (levels, len(grid), dim, dim).  Because every
    level integrates the same Brownian paths, differences between levels
    isolate the discretization bias from the sampling noise.
    """
    psi0 = _check_pure(model, psi0)
    finest = levels - 1
    n_ops = len(model.lindblad_ops)
    meshes = [config.mesh(refine=l) for l in range(levels)]
    dim = len(psi0)
    sums = np.zeros((levels, len(config.grid), dim, dim), dtype=complex)
    n = config.n_trajectories
    for lo in range(0, n, chunk):
        streams = [RngStream(config.seed, i) for i in range(lo, min(n, lo + chunk))]
        fine = qsd_increments(streams, meshes[finest], n_ops)
        for level in range(levels):
            group = 2 ** (finest - level)
            incs = fine.reshape(fine.shape[0], -1, group, n_ops).sum(axis=2)
            states = _qsd_integrate(model, psi0, meshes[level], incs, config.grid,
                                    config.renormalize_each_step)
            sums[level] += np.einsum("bti,btj->tij", states, states.conj())
    return sums / n


# -- quantum jumps ---------------------------------------------------------------

def mcwf_rate(a, psi) -> float:
    """Jump intensity <a*a> of a (not necessarily normalized) state."""
    a, psi = as_matrix(a, "a"), _nonzero(psi)
    ap = a @ psi
    return float(np.vdot(ap, ap).real / np.vdot(psi, psi).real)


def mcwf_deterministic_drift(a, psi) -> np.ndarray:
    """(-a*a + <a*a>) psi / 2: derivative of the renormalized no-jump flow."""
    a, psi = as_matrix(a, "a"), _nonzero(psi)
    ada = a.conj().T @ a
    return 0.5 * (-(ada @ psi) + _expect(ada, psi) * psi)


def mcwf_jump(a, psi, phase: JumpPhase | str = JumpPhase.ZERO) -> np.ndarray:
    """Post-jump unit vector a psi / |a psi| with the chosen global phase."""
    a, psi = as_matrix(a, "a"), _nonzero(psi)
    phase = JumpPhase(phase)
    image = a @ psi
    norm = np.linalg.norm(image)
    if norm <= DARK_TOL:
        raise DarkState("jump operator annihilates the state")
    out = image / norm
    if phase is JumpPhase.ZERO:
        lead = out[int(np.argmax(np.abs(out)))]
        out = out * (abs(lead) / lead)
    return out


def _mcwf_jump_map(phase):
    def jump(model, sector, psi, u):
        weights = channel_weights(model, sector, psi)
        total = sum(w for _, w, _ in weights)
        if not total > 0.0:
            raise ZeroIntensity("no Lindblad operator can act on the current state")
        acc, chosen = 0.0, None
        for k, (_, w, _) in enumerate(weights):
            if w <= 0.0:
                continue
            acc += w / total
            chosen = k
            if u < acc:
                break
        return 0, mcwf_jump(model.lindblad_ops[chosen], psi, phase), chosen

    return jump


def mcwf_simulate(model: PureLindbladModel, psi0, config: SimulationConfig, stream: RngStream,
                  phase: JumpPhase | str = JumpPhase.ZERO,
                  flows: FlowCache | None = None) -> TrajectoryRecord:
    """One quantum-jump trajectory; event times and projectors do not depend on ``phase``."""
    psi0 = _check_pure(model, psi0)
    x0 = HybridPureState(0, psi0)
    return run_jump_trajectory(model, x0, config, stream, _mcwf_jump_map(JumpPhase(phase)), flows)


def waiting_times(record: TrajectoryRecord) -> list[float]:
    """Gaps between consecutive jumps (first gap measured from t = 0)."""
    times = [0.0] + [e.t for e in record.events]
    return [b - a for a, b in zip(times[:-1], times[1:])]


def sigma_x_closed_form(psi0, jump_count: int) -> np.ndarray:
    """Projector after ``jump_count`` applications of sigma_x to psi0."""
    psi0 = as_vector(psi0, "psi0")
    if jump_count < 0:
        raise InputError("jump count must be non-negative")
    if jump_count % 2 == 0:
        return projector(psi0)
    return projector(SIGMA_X @ psi0)
