"""Ensemble execution and reduction.

Trajectory ``k`` always draws from ``RngStream(seed, k)``.  Workers receive
contiguous index ranges and return per-trajectory samples; the reducer
concatenates them in ascending index order before averaging, so the
estimate does not depend on the number of workers.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import InputError, NumericalError
from .model import BlockDensity, HybridPureState, Model, _offsets
from .numerics import RngStream
from .pdp import FlowCache, SimulationConfig, simulate_trajectory
from .unravel import DiffusionConfig, JumpPhase, mcwf_simulate, qsd_batch

log = logging.getLogger(__name__)

METHODS = ("pdp", "qsd", "mcwf")


@dataclass
class EnsembleEstimate:
    grid: tuple
    mean_blocks: list          # BlockDensity per grid time
    stderr: list               # per grid time, list of real arrays shaped like the blocks
    n: int
    method: str = "pdp"

    def aggregate_stderr(self, k: int) -> float:
        """Root-sum-square of the per-entry standard errors at grid index ``k``."""
        return float(np.sqrt(sum(np.sum(s ** 2) for s in self.stderr[k])))

    @classmethod
    def exact(cls, grid, densities, method="exact"):
        """Zero-variance estimate wrapping known densities."""
        return cls(tuple(grid), list(densities),
                   [[np.zeros(b.shape) for b in d.blocks] for d in densities], 0, method)


def grid_samples(record, dims) -> np.ndarray:
    """Stacked ``vec`` of the projector at each grid time, shape (len(grid), sum n_a^2)."""
    off = _offsets(dims)
    out = np.zeros((len(record.grid_states), off[-1]), dtype=complex)
    for i, (_, x) in enumerate(record.grid_states):
        out[i, off[x.sector]:off[x.sector + 1]] = np.outer(x.psi, x.psi.conj()).reshape(-1)
    return out


def reduce_samples(samples: np.ndarray, grid, dims, method="pdp") -> EnsembleEstimate:
    """Mean and standard error of per-trajectory samples shaped (n, len(grid), D).

    Moments are taken about the first trajectory, which makes the mean exact
    when all trajectories agree.
    """
    n = samples.shape[0]
    if n < 2:
        raise InputError("an ensemble estimate needs at least two trajectories")
    ref = samples[0]
    dev = samples - ref
    mean_dev = dev.mean(axis=0)
    mean = ref + mean_dev
    spread = np.abs(dev - mean_dev) ** 2
    stderr = np.sqrt(spread.sum(axis=0) / (n - 1) / n)
    means, errs = [], []
    off = _offsets(dims)
    for k in range(len(grid)):
        blocks, eblocks = [], []
        for a, d in enumerate(dims):
            blocks.append(mean[k, off[a]:off[a + 1]].reshape(d, d))
            eblocks.append(stderr[k, off[a]:off[a + 1]].reshape(d, d))
        means.append(BlockDensity(tuple(blocks)))
        errs.append(eblocks)
    return EnsembleEstimate(tuple(grid), means, errs, n, method)


def _chunk_worker(method, model, x0, config, lo, hi, keep_records, phase):
    if method == "qsd":
        states = qsd_batch(model, x0.psi, config, range(lo, hi))
        samples = np.einsum("bti,btj->btij", states, states.conj()).reshape(hi - lo, len(config.grid), -1)
        records = None
        if keep_records:
            from .unravel import qsd_simulate  # only needed for event output

            records = [qsd_simulate(model, x0.psi, config, RngStream(config.seed, i))
                       for i in range(lo, hi)]
        return samples, records
    flows = FlowCache(model, config.max_flow_step)
    samples = np.empty((hi - lo, len(config.grid), sum(d * d for d in model.dims)), dtype=complex)
    records = [] if keep_records else None
    for j, i in enumerate(range(lo, hi)):
        stream = RngStream(config.seed, i)
        if method == "pdp":
            rec = simulate_trajectory(model, x0, config, stream, flows)
        else:
            rec = mcwf_simulate(model, x0.psi, config, stream, phase, flows)
        samples[j] = grid_samples(rec, model.dims)
        if keep_records:
            records.append(rec)
    return samples, records


def _partition(n, workers):
    bounds = np.linspace(0, n, workers + 1).round().astype(int)
    return [(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def run_ensemble(method: str, model: Model, x0: HybridPureState,
                 config: SimulationConfig | DiffusionConfig, workers: int = 1,
                 keep_records: bool = False, phase: JumpPhase | str = JumpPhase.ZERO):
    """Simulate ``config.n_trajectories`` histories; returns (estimate, records or None)."""
    if method not in METHODS:
        raise InputError(f"unknown method {method!r}")
    if workers < 1:
        raise InputError("workers must be at least 1")
    if method == "qsd" and not isinstance(config, DiffusionConfig):
        raise InputError("the qsd method needs a DiffusionConfig")
    if method != "qsd" and not isinstance(config, SimulationConfig):
        raise InputError(f"the {method} method needs a SimulationConfig")
    if method == "pdp" and model.kind != "hybrid":
        raise InputError("the pdp method needs a hybrid model")
    if method in ("qsd", "mcwf") and model.kind != "pure":
        raise InputError(f"the {method} method needs a pure Lindblad model")
    n = config.n_trajectories
    if n < 2:
        raise InputError("an ensemble needs at least two trajectories")
    x0.check(model)
    chunks = _partition(n, workers)
    args = [(method, model, x0, config, lo, hi, keep_records, JumpPhase(phase)) for lo, hi in chunks]
    if workers == 1:
        results = [_chunk_worker(*a) for a in args]
    else:
        try:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                futures = [pool.submit(_chunk_worker, *a) for a in args]
                results = [f.result() for f in futures]
        except (InputError, NumericalError):
            raise
        except Exception as exc:
            raise NumericalError(f"worker failed: {exc}") from exc
    samples = np.concatenate([r[0] for r in results])
    records = None
    if keep_records:
        records = [rec for r in results for rec in r[1]]
    log.debug("reduced %d trajectories from %d chunks", n, len(chunks))
    return reduce_samples(samples, config.grid, model.dims, method), records


def parallel_ensemble(method, model, x0, config, workers=1, phase=JumpPhase.ZERO) -> EnsembleEstimate:
    return run_ensemble(method, model, x0, config, workers=workers, phase=phase)[0]
