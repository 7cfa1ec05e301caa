"""Hybrid (event-enhanced) and plain Lindblad models and their exact dynamics.

Sectors are numbered from 0.  A hybrid coupling is keyed ``(to, from)``: the
operator ``couplings[(b, a)]`` maps the Hilbert space of sector ``a`` into
that of sector ``b`` and drives the event ``a -> b``.

Both model kinds expose the same ``channels`` view, a tuple of
``(to, from, operator)`` triples, so the generators below are written once.
A plain Lindblad model is a single sector whose channels are its Lindblad
operators, all of them "diagonal".
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg

from .errors import (
    DiagonalCouplingPresent,
    DimensionError,
    InvalidState,
    ModelValidationError,
    NonHermitian,
    ShapeMismatch,
)
from .numerics import (
    DEFAULT_TOL,
    ToleranceConfig,
    as_matrix,
    as_vector,
    hermiticity_defect,
    matexp,
    projector,
    trace_distance,
)


def _commutator(a, b):
    return a @ b - b @ a


def _anticommutator(a, b):
    return a @ b + b @ a


class _ChannelModel:
    """Shared generator algebra; subclasses provide ``hamiltonians`` and ``channels``."""

    hamiltonians: tuple
    channels: tuple

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(h.shape[0] for h in self.hamiltonians)

    @property
    def m(self) -> int:
        return len(self.hamiltonians)

    def _lambdas(self):
        lams = [np.zeros((n, n), dtype=complex) for n in self.dims]
        for _, src, op in self.channels:
            lams[src] = lams[src] + op.conj().T @ op
        return tuple(lams)

    def lambda_op(self, sector: int) -> np.ndarray:
        if not 0 <= sector < self.m:
            raise IndexError(f"sector {sector} out of range for {self.m} sectors")
        return self._lambda_cache[sector]

    def effective_generator(self, sector: int) -> np.ndarray:
        """-iH - Lambda/2 of one sector: the no-jump flow generator."""
        return -1j * self.hamiltonians[sector] - 0.5 * self.lambda_op(sector)

    def outgoing(self, sector: int):
        """Channels leaving ``sector`` as ``(to, operator)`` in ascending ``to`` order."""
        return [(dst, op) for dst, src, op in self.channels if src == sector]


def _freeze_lambdas(obj):
    object.__setattr__(obj, "_lambda_cache", obj._lambdas())


@dataclass(frozen=True, eq=False)
class HybridModel(_ChannelModel):
    """Quantum system coupled to an m-state classical system.

    ``hamiltonians[a]`` is the Hamiltonian while the classical system is in
    state ``a``; ``couplings[(b, a)]`` has shape ``(n_b, n_a)``.
    """

    hamiltonians: tuple
    couplings: dict = field(default_factory=dict)

    def __post_init__(self):
        hs = tuple(as_matrix(h, f"hamiltonian {a}") for a, h in enumerate(self.hamiltonians))
        if not hs:
            raise ModelValidationError("a hybrid model needs at least one sector")
        cs = {}
        for key, g in dict(self.couplings).items():
            to, frm = (int(k) for k in key)
            cs[(to, frm)] = as_matrix(g, f"coupling ({to},{frm})")
        object.__setattr__(self, "hamiltonians", hs)
        object.__setattr__(self, "couplings", dict(sorted(cs.items())))
        for a, h in enumerate(hs):
            if h.shape[0] != h.shape[1]:
                raise ShapeMismatch(a, a, f"Hamiltonian has shape {h.shape}")
        for (to, frm), g in self.couplings.items():
            if not (0 <= to < len(hs) and 0 <= frm < len(hs)):
                raise ShapeMismatch(to, frm, "sector index out of range")
            want = (hs[to].shape[0], hs[frm].shape[0])
            if g.shape != want:
                raise ShapeMismatch(to, frm, f"expected {want}, got {g.shape}")
        # sorted by (from, to) so that outgoing() scans targets in ascending order
        chans = sorted(((to, frm, g) for (to, frm), g in self.couplings.items()),
                       key=lambda c: (c[1], c[0]))
        object.__setattr__(self, "channels", tuple(chans))
        _freeze_lambdas(self)

    @property
    def kind(self) -> str:
        return "hybrid"

    def coupling(self, to: int, frm: int):
        return self.couplings.get((to, frm))


@dataclass(frozen=True, eq=False)
class PureLindbladModel(_ChannelModel):
    """Single quantum system with Hamiltonian ``H`` and Lindblad operators ``V_k``."""

    hamiltonian: np.ndarray
    lindblad_ops: tuple = ()

    def __post_init__(self):
        h = as_matrix(self.hamiltonian, "hamiltonian")
        if h.shape[0] != h.shape[1]:
            raise ShapeMismatch(0, 0, f"Hamiltonian has shape {h.shape}")
        ops = tuple(as_matrix(v, f"lindblad op {k}") for k, v in enumerate(self.lindblad_ops))
        for k, v in enumerate(ops):
            if v.shape != h.shape:
                raise ShapeMismatch(0, 0, f"Lindblad operator {k} has shape {v.shape}")
        object.__setattr__(self, "hamiltonian", h)
        object.__setattr__(self, "lindblad_ops", ops)
        object.__setattr__(self, "hamiltonians", (h,))
        object.__setattr__(self, "channels", tuple((0, 0, v) for v in ops))
        _freeze_lambdas(self)

    @property
    def kind(self) -> str:
        return "pure"

    @property
    def dim(self) -> int:
        return self.hamiltonian.shape[0]


Model = HybridModel | PureLindbladModel


def validate(model: Model, tol: ToleranceConfig = DEFAULT_TOL) -> Model:
    """Return ``model`` unchanged if all invariants hold, else raise.

    The raised exception is the first violation found; its ``violations``
    attribute lists all of them.
    """
    problems: list[ModelValidationError] = []
    for a, h in enumerate(model.hamiltonians):
        if hermiticity_defect(h) > tol.hermiticity:
            problems.append(NonHermitian(a))
    if isinstance(model, HybridModel):
        for (to, frm), g in model.couplings.items():
            if to == frm and np.any(g != 0):
                problems.append(DiagonalCouplingPresent(to))
    if problems:
        first = problems[0]
        first.violations = problems
        raise first
    return model


def lambda_op(model: Model, sector: int) -> np.ndarray:
    """Sum over outgoing channels of g* g."""
    return model.lambda_op(sector)


def _blocks(model: Model, rho, name="state"):
    blocks = rho.blocks if isinstance(rho, BlockDensity) else rho
    blocks = [as_matrix(b, f"{name} block {a}") for a, b in enumerate(blocks)]
    if len(blocks) != model.m:
        raise DimensionError(f"{name} has {len(blocks)} blocks, model has {model.m} sectors")
    for a, (b, n) in enumerate(zip(blocks, model.dims)):
        if b.shape != (n, n):
            raise DimensionError(f"{name} block {a} has shape {b.shape}, expected {(n, n)}")
    return blocks


def liouville_rhs(model: Model, rho) -> list[np.ndarray]:
    """Time derivative of a block density (Schrodinger picture)."""
    blocks = _blocks(model, rho)
    out = []
    for a, (h, r) in enumerate(zip(model.hamiltonians, blocks)):
        out.append(-1j * _commutator(h, r) - 0.5 * _anticommutator(model.lambda_op(a), r))
    for to, frm, g in model.channels:
        out[to] = out[to] + g @ blocks[frm] @ g.conj().T
    return out


def heisenberg_rhs(model: Model, obs) -> list[np.ndarray]:
    """Time derivative of a block observable (Heisenberg picture)."""
    blocks = _blocks(model, obs, "observable")
    out = []
    for a, (h, x) in enumerate(zip(model.hamiltonians, blocks)):
        out.append(1j * _commutator(h, x) - 0.5 * _anticommutator(model.lambda_op(a), x))
    for to, frm, g in model.channels:
        out[frm] = out[frm] + g.conj().T @ blocks[to] @ g
    return out


def _offsets(dims):
    sizes = [n * n for n in dims]
    return np.concatenate([[0], np.cumsum(sizes)]).astype(int)


def build_superoperator(model: Model) -> np.ndarray:
    """Matrix of the Liouville generator on stacked row-major ``vec(rho_a)``.

    Uses ``vec(A X B) = kron(A, B.T) vec(X)`` for row-major vectorization.
    """
    dims = model.dims
    off = _offsets(dims)
    sup = np.zeros((off[-1], off[-1]), dtype=complex)
    for a, (h, n) in enumerate(zip(model.hamiltonians, dims)):
        eye = np.eye(n)
        k = -1j * h - 0.5 * model.lambda_op(a)
        # K rho + rho K^dagger
        sup[off[a]:off[a + 1], off[a]:off[a + 1]] += np.kron(k, eye) + np.kron(eye, k.conj())
    for to, frm, g in model.channels:
        sup[off[to]:off[to + 1], off[frm]:off[frm + 1]] += np.kron(g, g.conj())
    return sup


def vectorize(blocks) -> np.ndarray:
    parts = [np.asarray(b, dtype=complex).reshape(-1) for b in blocks]
    return np.concatenate(parts) if parts else np.zeros(0, dtype=complex)


def unvectorize(vec: np.ndarray, dims) -> list[np.ndarray]:
    off = _offsets(dims)
    return [vec[off[a]:off[a + 1]].reshape(n, n) for a, n in enumerate(dims)]


@dataclass(frozen=True)
class HybridPureState:
    """A point of the pure-state space: classical sector plus unit vector."""

    sector: int
    psi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "sector", int(self.sector))
        object.__setattr__(self, "psi", as_vector(self.psi, "psi"))

    def check(self, model: Model, tol: ToleranceConfig = DEFAULT_TOL) -> "HybridPureState":
        if not 0 <= self.sector < model.m:
            raise InvalidState(f"sector {self.sector} out of range for {model.m} sectors")
        if self.psi.shape[0] != model.dims[self.sector]:
            raise InvalidState(
                f"psi has dimension {self.psi.shape[0]}, sector {self.sector} "
                f"has dimension {model.dims[self.sector]}")
        norm2 = np.vdot(self.psi, self.psi).real
        if abs(norm2 - 1.0) > tol.normalization:
            raise InvalidState(f"psi is not normalized (|psi|^2 = {norm2!r})")
        return self

    def projector(self) -> np.ndarray:
        return projector(self.psi)


@dataclass(frozen=True)
class BlockDensity:
    """Block-diagonal density matrix diag(rho_1, ..., rho_m)."""

    blocks: tuple

    def __post_init__(self):
        blocks = tuple(as_matrix(b, f"block {a}") for a, b in enumerate(self.blocks))
        for a, b in enumerate(blocks):
            if b.shape[0] != b.shape[1]:
                raise DimensionError(f"block {a} is not square: {b.shape}")
        object.__setattr__(self, "blocks", blocks)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(b.shape[0] for b in self.blocks)

    def trace(self) -> complex:
        return complex(sum(np.trace(b) for b in self.blocks))

    def probabilities(self) -> np.ndarray:
        """Classical marginal: Tr rho_a per sector."""
        return np.array([np.trace(b).real for b in self.blocks])

    def vec(self) -> np.ndarray:
        return vectorize(self.blocks)

    @classmethod
    def from_vec(cls, vec, dims) -> "BlockDensity":
        return cls(tuple(unvectorize(np.asarray(vec, dtype=complex), dims)))

    def full(self) -> np.ndarray:
        return scipy.linalg.block_diag(*self.blocks) if self.blocks else np.zeros((0, 0))

    def expectation(self, obs) -> complex:
        return complex(sum(np.trace(a @ r) for a, r in zip(obs, self.blocks)))

    def check(self, model: Model | None = None, tol: ToleranceConfig = DEFAULT_TOL) -> "BlockDensity":
        if model is not None and self.dims != model.dims:
            raise InvalidState(f"density dims {self.dims} do not match model dims {model.dims}")
        for a, b in enumerate(self.blocks):
            if hermiticity_defect(b) > tol.hermiticity:
                raise InvalidState(f"block {a} is not Hermitian")
            if b.size and np.linalg.eigvalsh(0.5 * (b + b.conj().T)).min() < -tol.positivity:
                raise InvalidState(f"block {a} is not positive semidefinite")
        if abs(self.trace() - 1.0) > tol.normalization:
            raise InvalidState(f"total trace is {self.trace().real!r}, expected 1")
        return self


def embed_pure_state(x: HybridPureState, dims) -> BlockDensity:
    """Block density carrying |psi><psi| in sector ``x.sector`` and zeros elsewhere."""
    blocks = [np.zeros((n, n), dtype=complex) for n in dims]
    blocks[x.sector] = projector(x.psi)
    return BlockDensity(tuple(blocks))


def block_trace_distance(a: BlockDensity, b: BlockDensity, tol: float = 1e-8) -> float:
    if a.dims != b.dims:
        raise DimensionError(f"dims differ: {a.dims} vs {b.dims}")
    return sum(trace_distance(x, y, tol) for x, y in zip(a.blocks, b.blocks))


class ExactPropagator:
    """exp(t L) applied through the matrix exponential of the superoperator."""

    def __init__(self, model: Model):
        self.model = model
        self.superoperator = build_superoperator(model)

    def __call__(self, rho0: BlockDensity, t: float) -> BlockDensity:
        if t < 0:
            raise ValueError(f"negative propagation time {t!r}")
        if t == 0:
            return BlockDensity(tuple(b.copy() for b in _blocks(self.model, rho0)))
        vec = vectorize(_blocks(self.model, rho0))
        return BlockDensity.from_vec(matexp(t * self.superoperator) @ vec, self.model.dims)

    def on_grid(self, rho0: BlockDensity, grid) -> list[BlockDensity]:
        return [self(rho0, t) for t in grid]


def propagate_exact(model: Model, rho0: BlockDensity, t: float) -> BlockDensity:
    return ExactPropagator(model)(rho0, t)


# -- standard models ---------------------------------------------------------

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
LOWERING = np.array([[0, 1], [0, 0]], dtype=complex)


def detector_model(kappa: float = 1.0, dim: int = 2, hamiltonian=None) -> HybridModel:
    """Two sectors, g[1,0] = sqrt(kappa) I; sector 1 is absorbing."""
    h = np.zeros((dim, dim)) if hamiltonian is None else hamiltonian
    return HybridModel((h, np.zeros((dim, dim))), {(1, 0): np.sqrt(kappa) * np.eye(dim)})


def hybrid_decay_model() -> HybridModel:
    """Two sectors, g[1,0] = lowering operator (0,1;0,0)."""
    z = np.zeros((2, 2))
    return HybridModel((z, z), {(1, 0): LOWERING})


def sigma_x_model() -> PureLindbladModel:
    return PureLindbladModel(np.zeros((2, 2)), (SIGMA_X,))


def decay_model(rate: float = 1.0) -> PureLindbladModel:
    return PureLindbladModel(np.zeros((2, 2)), (np.sqrt(rate) * LOWERING,))


def observable_blocks(obs: Sequence, dims) -> list[np.ndarray]:
    blocks = [as_matrix(o) for o in obs]
    if tuple(b.shape[0] for b in blocks) != tuple(dims):
        raise DimensionError("observable blocks do not match model dims")
    return blocks
