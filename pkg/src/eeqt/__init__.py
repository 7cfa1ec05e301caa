"""Exact and Monte Carlo dynamics of Lindblad and hybrid classical-quantum models."""

from .ensemble import EnsembleEstimate, parallel_ensemble, run_ensemble
from .errors import (
    DarkState,
    DiagonalCouplingPresent,
    EEQTError,
    InputError,
    ModelValidationError,
    NonHermitian,
    NumericalError,
    ShapeMismatch,
    ZeroIntensity,
)
from .model import (
    BlockDensity,
    ExactPropagator,
    HybridModel,
    HybridPureState,
    PureLindbladModel,
    build_superoperator,
    embed_pure_state,
    heisenberg_rhs,
    lambda_op,
    liouville_rhs,
    propagate_exact,
    validate,
)
from .numerics import RngStream, ToleranceConfig, draw, matexp, trace_distance
from .pdp import SimulationConfig, ensemble_density, simulate_trajectory
from .unravel import DiffusionConfig, JumpPhase, mcwf_simulate, qsd_simulate

__version__ = "0.1.0"

__all__ = [
    "BlockDensity", "DarkState", "DiagonalCouplingPresent", "DiffusionConfig", "EEQTError",
    "EnsembleEstimate", "ExactPropagator", "HybridModel", "HybridPureState", "InputError",
    "JumpPhase", "ModelValidationError", "NonHermitian", "NumericalError", "PureLindbladModel",
    "RngStream", "ShapeMismatch", "SimulationConfig", "ToleranceConfig", "ZeroIntensity",
    "build_superoperator", "draw", "embed_pure_state", "ensemble_density", "heisenberg_rhs",
    "lambda_op", "liouville_rhs", "matexp", "mcwf_simulate", "parallel_ensemble",
    "propagate_exact", "qsd_simulate", "run_ensemble", "simulate_trajectory", "trace_distance",
    "validate",
]
