"""Dense complex linear algebra, tolerances and reproducible random streams."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, fields

import numpy as np
import scipy.linalg

from .errors import DimensionError, NonHermitianInput

TOLERANCE_ENV = "EEQT_DEFAULT_TOL"


@dataclass(frozen=True)
class ToleranceConfig:
    """Numerical tolerances shared by validation and simulation.

    ``positivity`` is the magnitude of the smallest admissible eigenvalue of
    a density block, i.e. eigenvalues down to ``-positivity`` are accepted.
    """

    hermiticity: float = 1e-10
    normalization: float = 1e-10
    positivity: float = 1e-10
    ode_step: float = 1e-2

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if not value > 0:
                raise ValueError(f"tolerance {f.name} must be strictly positive, got {value!r}")

    @classmethod
    def from_env(cls, environ=None) -> "ToleranceConfig":
        """Defaults overridden by the JSON object in ``EEQT_DEFAULT_TOL``, if set."""
        environ = os.environ if environ is None else environ
        raw = environ.get(TOLERANCE_ENV)
        if not raw:
            return cls()
        overrides = json.loads(raw)
        if not isinstance(overrides, dict):
            raise ValueError(f"{TOLERANCE_ENV} must hold a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = set(overrides) - known
        if unknown:
            raise ValueError(f"unknown tolerance keys in {TOLERANCE_ENV}: {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in overrides.items()})


DEFAULT_TOL = ToleranceConfig()


def as_matrix(m, name: str = "matrix") -> np.ndarray:
    a = np.asarray(m, dtype=complex)
    if a.ndim != 2:
        raise DimensionError(f"{name} must be two-dimensional, got shape {a.shape}")
    return a


def as_vector(v, name: str = "vector") -> np.ndarray:
    a = np.asarray(v, dtype=complex)
    if a.ndim != 1:
        raise DimensionError(f"{name} must be one-dimensional, got shape {a.shape}")
    return a


def dagger(m: np.ndarray) -> np.ndarray:
    return m.conj().T


def hermiticity_defect(m: np.ndarray) -> float:
    if m.size == 0:
        return 0.0
    return float(np.max(np.abs(m - m.conj().T)))


def is_hermitian(m: np.ndarray, tol: float = DEFAULT_TOL.hermiticity) -> bool:
    return m.shape[0] == m.shape[1] and hermiticity_defect(m) <= tol


def is_normalized(v: np.ndarray, tol: float = DEFAULT_TOL.normalization) -> bool:
    return abs(np.vdot(v, v).real - 1.0) <= tol


def normalize(v: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(v)
    if n == 0.0:
        raise ZeroDivisionError("cannot normalize the zero vector")
    return v / n


def projector(psi: np.ndarray) -> np.ndarray:
    """|psi><psi| for a (not necessarily normalized) vector."""
    return np.outer(psi, psi.conj())


def matexp(m) -> np.ndarray:
    """Matrix exponential of a square complex matrix.

    Delegates to scipy's scaling-and-squaring Pade implementation, which
    meets a 1e-12 relative accuracy target for the small, moderately normed
    matrices used here.
    """
    a = as_matrix(m)
    if a.shape[0] != a.shape[1]:
        raise DimensionError(f"matexp needs a square matrix, got shape {a.shape}")
    if a.shape[0] == 0:
        return a.copy()
    return scipy.linalg.expm(a)


def trace_distance(rho, sigma, tol: float = DEFAULT_TOL.hermiticity) -> float:
    """Half the trace norm of ``rho - sigma``."""
    a, b = as_matrix(rho), as_matrix(sigma)
    if a.shape != b.shape or a.shape[0] != a.shape[1]:
        raise DimensionError(f"shape mismatch: {a.shape} vs {b.shape}")
    for label, x in (("rho", a), ("sigma", b)):
        if hermiticity_defect(x) > tol:
            raise NonHermitianInput(f"{label} is not Hermitian within {tol:g}")
    d = a - b
    d = 0.5 * (d + d.conj().T)
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(d))))


class RngStream:
    """Independent, reproducible random stream keyed by ``(master_seed, stream_index)``.

    Mixing: the pair is fed to numpy's ``SeedSequence(entropy=master_seed,
    spawn_key=(stream_index,))``, whose hash is the documented derivation of
    per-trajectory state; the bit generator is PCG64.  Trajectory ``k`` of an
    ensemble always uses stream index ``k``.
    """

    def __init__(self, master_seed: int, stream_index: int = 0):
        if master_seed < 0 or stream_index < 0:
            raise ValueError("seed and stream index must be non-negative")
        self.master_seed = int(master_seed)
        self.stream_index = int(stream_index)
        seq = np.random.SeedSequence(entropy=self.master_seed, spawn_key=(self.stream_index,))
        self._gen = np.random.Generator(np.random.PCG64(seq))

    def uniform(self) -> float:
        """One draw from [0, 1)."""
        return float(self._gen.random())

    def open_uniform(self) -> float:
        """One draw from the open interval (0, 1)."""
        while True:
            u = self._gen.random()
            if u > 0.0:
                return float(u)

    def normal(self, size=None):
        return self._gen.standard_normal(size)

    def uniforms(self, size):
        return self._gen.random(size)

    def __repr__(self):
        return f"RngStream(master_seed={self.master_seed}, stream_index={self.stream_index})"


def draw(stream: RngStream, kind: str) -> float:
    if kind == "uniform01":
        return stream.uniform()
    if kind == "standard_normal":
        return float(stream.normal())
    raise ValueError(f"unknown draw kind {kind!r}")
