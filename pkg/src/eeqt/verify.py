"""Numerical checks tying the jump process to the Lindblad generator.

The generator of the jump process acts on a function f of pure states as

    (A f)(x) = sum_b c_b(x) f(x_b) - c(x) f(x) + v(x) f

with channel rates ``c_b(x) = |g_ba psi|^2``, jump targets
``x_b = g_ba psi / |g_ba psi|`` and the tangent drift

    v(x) = -i[H_a, P_x] - {P_x, Lambda_a} / 2 + P_x Tr(P_x Lambda_a).

For linear functions f_A(y) = Tr(A P_y) it must reproduce
Tr(A L(P_x)); ``check_theorem4`` measures the mismatch.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError, NonOrthogonal
from .model import (
    BlockDensity,
    ExactPropagator,
    HybridModel,
    HybridPureState,
    Model,
    PureLindbladModel,
    SIGMA_X,
    block_trace_distance,
    detector_model,
    embed_pure_state,
    heisenberg_rhs,
    liouville_rhs,
    observable_blocks,
)
from .numerics import projector, trace_distance
from .unravel import qsd_diffusion, qsd_drift, qsd_refinement_study

ORTHOGONALITY_TOL = 1e-10


@dataclass
class GeneratorTerms:
    rates: dict            # target sector -> c_b(x)
    total_rate: float
    targets: dict          # target sector -> HybridPureState, only where c_b > 0
    drift: np.ndarray      # v(x), an n_a x n_a matrix

    def tangency_defect(self, p: np.ndarray) -> float:
        v = self.drift
        return float(np.max(np.abs(p @ v + v @ p - v)))


@dataclass
class ComparisonReport:
    grid: tuple
    trace_distances: list
    stat_tolerance: list
    passed: bool

    @property
    def verdict(self) -> str:
        return "pass" if self.passed else "fail"

    def as_dict(self) -> dict:
        return {
            "grid": list(self.grid),
            "trace_distances": [float(d) for d in self.trace_distances],
            "tolerances": [float(t) for t in self.stat_tolerance],
            "verdict": self.verdict,
        }


def generator_terms(model: HybridModel, x: HybridPureState) -> GeneratorTerms:
    a = x.sector
    p = projector(x.psi)
    lam = model.lambda_op(a)
    rates, targets = {}, {}
    for to, g in model.outgoing(a):
        image = g @ x.psi
        c = float(np.vdot(image, image).real)
        rates[to] = rates.get(to, 0.0) + c
        if c > 0.0:
            targets[to] = HybridPureState(to, image / np.sqrt(c))
    h = model.hamiltonians[a]
    drift = (-1j * (h @ p - p @ h) - 0.5 * (p @ lam + lam @ p)
             + p * np.trace(p @ lam).real)
    return GeneratorTerms(rates, float(sum(rates.values())), targets, drift)


def generator_apply(model: HybridModel, x: HybridPureState, obs) -> float:
    """(A f_obs)(x) for the linear function f_obs(y) = Tr(obs P_y)."""
    obs = observable_blocks(obs, model.dims)
    terms = generator_terms(model, x)
    a = x.sector
    value = 0.0 + 0.0j
    for to, target in terms.targets.items():
        value += terms.rates[to] * np.vdot(target.psi, obs[to] @ target.psi)
    value -= terms.total_rate * np.vdot(x.psi, obs[a] @ x.psi)
    value += np.trace(obs[a] @ terms.drift)
    return float(value.real)


def _lindblad_expectation(model, obs, rho):
    deriv = liouville_rhs(model, rho)
    return complex(sum(np.trace(o @ d) for o, d in zip(obs, deriv)))


def check_theorem4(model: HybridModel, x: HybridPureState, obs) -> float:
    """|Tr(A L(P_x)) - (A f_A)(x)|."""
    obs = observable_blocks(obs, model.dims)
    lhs = _lindblad_expectation(model, obs, embed_pure_state(x, model.dims))
    return abs(lhs - generator_apply(model, x, obs))


def check_lemma6(model: Model, sector: int, psi, phi) -> float:
    """|Tr(P_phi L(P_psi))| for orthogonal unit vectors in the same sector."""
    psi = np.asarray(psi, dtype=complex)
    phi = np.asarray(phi, dtype=complex)
    overlap = abs(np.vdot(psi, phi))
    if overlap > ORTHOGONALITY_TOL:
        raise NonOrthogonal(f"|<psi, phi>| = {overlap:.3g} exceeds {ORTHOGONALITY_TOL:g}")
    rho = embed_pure_state(HybridPureState(sector, psi), model.dims)
    block = liouville_rhs(model, rho)[sector]
    return abs(np.trace(projector(phi) @ block))


def check_finite_difference_generator(model: HybridModel, x: HybridPureState, obs, dt: float,
                                      propagator: ExactPropagator | None = None) -> float:
    """|(Tr(A T_dt(P_x)) - Tr(A P_x)) / dt - (A f_A)(x)|; O(dt) for small dt."""
    if not 1e-7 <= dt <= 1e-3:
        raise InputError(f"dt must lie in [1e-7, 1e-3], got {dt!r}")
    obs = observable_blocks(obs, model.dims)
    prop = propagator or ExactPropagator(model)
    rho0 = embed_pure_state(x, model.dims)
    later = prop(rho0, dt)
    quotient = (later.expectation(obs) - rho0.expectation(obs)) / dt
    return abs(quotient.real - generator_apply(model, x, obs))


def compare_ensemble_to_oracle(model: Model, x0: HybridPureState, estimate, bias_allowance: float = 0.0,
                               n_sigma: float = 3.0, floor: float = 1e-10) -> ComparisonReport:
    """Trace distance of the ensemble mean to exp(tL) P_x0 at each grid time.

    Tolerance per time: ``n_sigma`` times the aggregate standard error plus
    the method bias allowance; ``floor`` absorbs round-off when the estimate
    has zero variance.
    """
    prop = ExactPropagator(model)
    rho0 = embed_pure_state(x0, model.dims)
    dists, tols = [], []
    for k, (t, mean) in enumerate(zip(estimate.grid, estimate.mean_blocks)):
        exact = prop(rho0, t)
        dists.append(block_trace_distance(mean, exact))
        tols.append(n_sigma * estimate.aggregate_stderr(k) + bias_allowance + floor)
    passed = all(d <= tol for d, tol in zip(dists, tols))
    return ComparisonReport(tuple(estimate.grid), dists, tols, passed)


def qsd_bias_constant(model: PureLindbladModel, psi0, config) -> float:
    """Estimate c in bias(dt) ~ c dt from a coupled dt / dt-halving run.

    For a weak-order-one scheme bias(dt) ~ 2 |E_dt - E_{dt/2}| (Richardson).
    """
    means = qsd_refinement_study(model, psi0, config, levels=2)
    gaps = [trace_distance(means[0, k], means[1, k], tol=1e-8) for k in range(len(config.grid))]
    return 2.0 * max(gaps) / config.dt if gaps else 0.0


# -- random instances ------------------------------------------------------------

def random_matrix(rng, rows, cols, scale=1.0):
    return scale * (rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols))) / np.sqrt(2)


def random_hermitian(rng, n, scale=1.0):
    m = random_matrix(rng, n, n, scale)
    return 0.5 * (m + m.conj().T)


def random_unit(rng, n):
    v = random_matrix(rng, n, 1)[:, 0]
    return v / np.linalg.norm(v)


def random_orthogonal_pair(rng, n):
    """Two orthonormal vectors in C^n (n >= 2)."""
    psi = random_unit(rng, n)
    phi = random_unit(rng, n)
    phi = phi - np.vdot(psi, phi) * psi
    phi = phi / np.linalg.norm(phi)
    phi = phi - np.vdot(psi, phi) * psi
    return psi, phi / np.linalg.norm(phi)


def random_hybrid_model(rng, max_sectors=3, max_dim=3, coupling_prob=0.7) -> HybridModel:
    m = int(rng.integers(1, max_sectors + 1))
    dims = [int(rng.integers(1, max_dim + 1)) for _ in range(m)]
    if max(dims) < 2 and max_dim >= 2:
        dims[int(rng.integers(m))] = 2
    hs = [random_hermitian(rng, n) for n in dims]
    couplings = {}
    for to in range(m):
        for frm in range(m):
            if to != frm and rng.random() < coupling_prob:
                couplings[(to, frm)] = random_matrix(rng, dims[to], dims[frm], 0.8)
    return HybridModel(tuple(hs), couplings)


def random_pure_model(rng, max_dim=3, max_ops=2) -> PureLindbladModel:
    n = int(rng.integers(2, max_dim + 1))
    k = int(rng.integers(1, max_ops + 1))
    return PureLindbladModel(random_hermitian(rng, n), tuple(random_matrix(rng, n, n, 0.8) for _ in range(k)))


def random_state(rng, model: Model) -> HybridPureState:
    a = int(rng.integers(model.m))
    return HybridPureState(a, random_unit(rng, model.dims[a]))


def random_observable(rng, model: Model) -> list:
    return [random_hermitian(rng, n) for n in model.dims]


def random_density(rng, model: Model) -> BlockDensity:
    blocks = []
    for n in model.dims:
        b = random_matrix(rng, n, n)
        blocks.append(b @ b.conj().T)
    total = sum(np.trace(b).real for b in blocks)
    return BlockDensity(tuple(b / total for b in blocks))


# -- check battery used by the CLI -------------------------------------------------

def _result(name, defects, threshold, samples=None, passed=None):
    worst = float(max(defects)) if len(defects) else 0.0
    return {
        "name": name,
        "samples": int(samples if samples is not None else len(defects)),
        "max_defect": worst,
        "threshold": float(threshold),
        "pass": bool(worst < threshold) if passed is None else bool(passed),
    }


def run_checks(seed: int = 0, n_models: int = 100, model: Model | None = None) -> list[dict]:
    """Randomized identity checks; returns one result dict per check."""
    rng = np.random.default_rng(seed)
    results = []

    defects = []
    for _ in range(n_models):
        mdl = random_hybrid_model(rng)
        for _ in range(10):
            defects.append(check_theorem4(mdl, random_state(rng, mdl), random_observable(rng, mdl)))
    results.append(_result("theorem4_generator_identity", defects, 1e-8))

    defects = []
    for _ in range(n_models):
        mdl = random_hybrid_model(rng)
        a = int(np.argmax(mdl.dims))
        psi, phi = random_orthogonal_pair(rng, mdl.dims[a])
        defects.append(check_lemma6(mdl, a, psi, phi))
    results.append(_result("lemma6_orthogonality", defects, 1e-12))

    control = check_lemma6(PureLindbladModel(np.zeros((2, 2)), (SIGMA_X,)), 0, [1, 0], [0, 1])
    results.append(_result("lemma6_diagonal_coupling_control", [abs(control - 1.0)], 1e-12))

    dual, unital, trace = [], [], []
    for k in range(2 * n_models):
        mdl = random_hybrid_model(rng) if k % 2 == 0 else random_pure_model(rng)
        obs = random_observable(rng, mdl)
        rho = random_density(rng, mdl)
        lhs = sum(np.trace(h @ r) for h, r in zip(heisenberg_rhs(mdl, obs), rho.blocks))
        rhs = sum(np.trace(o @ d) for o, d in zip(obs, liouville_rhs(mdl, rho)))
        dual.append(abs(lhs - rhs))
        unital.append(max(np.max(np.abs(b)) for b in heisenberg_rhs(mdl, [np.eye(n) for n in mdl.dims])))
        trace.append(abs(sum(np.trace(d) for d in liouville_rhs(mdl, rho))))
    results.append(_result("duality", dual, 1e-10))
    results.append(_result("unitality", unital, 1e-12))
    results.append(_result("trace_preservation", trace, 1e-12))

    i1, i2 = [], []
    for _ in range(5 * n_models):
        n = int(rng.integers(2, 5))
        a = random_matrix(rng, n, n)
        psi = random_unit(rng, n)
        f, g = qsd_diffusion(a, psi), qsd_drift(a, psi)
        i1.append(abs(np.vdot(psi, f).real))
        i2.append(abs(2 * np.vdot(psi, g).real + np.vdot(f, f).real))
    results.append(_result("qsd_norm_identity_I1", i1, 1e-12))
    results.append(_result("qsd_norm_identity_I2", i2, 1e-12))

    consts, tangency = [], []
    for _ in range(5 * n_models):
        mdl = random_hybrid_model(rng)
        x = random_state(rng, mdl)
        consts.append(abs(generator_apply(mdl, x, [np.eye(n) for n in mdl.dims])))
        terms = generator_terms(mdl, x)
        tangency.append(max(terms.tangency_defect(projector(x.psi)), abs(np.trace(terms.drift))))
    results.append(_result("generator_annihilates_constants", consts, 1e-12))
    results.append(_result("drift_tangency", tangency, 1e-10))

    det = detector_model(1.0)
    x = HybridPureState(0, [1.0, 0.0])
    ind = [np.zeros((2, 2)), np.eye(2)]
    prop = ExactPropagator(det)
    d1 = check_finite_difference_generator(det, x, ind, 1e-5, prop)
    d2 = check_finite_difference_generator(det, x, ind, 5e-6, prop)
    ratio = d1 / d2 if d2 > 0 else float("inf")
    results.append({
        "name": "finite_difference_first_order",
        "samples": 2,
        "max_defect": float(d1),
        "threshold": 1e-4,
        "ratio": float(ratio),
        "pass": bool(d1 < 1e-4 and 1.7 <= ratio <= 2.3),
    })

    if model is not None and isinstance(model, HybridModel):
        t4, l6 = [], []
        for _ in range(10 * n_models):
            t4.append(check_theorem4(model, random_state(rng, model), random_observable(rng, model)))
        for a, n in enumerate(model.dims):
            if n >= 2:
                for _ in range(n_models):
                    psi, phi = random_orthogonal_pair(rng, n)
                    l6.append(check_lemma6(model, a, psi, phi))
        results.append(_result("model_theorem4", t4, 1e-8))
        if l6:
            results.append(_result("model_lemma6", l6, 1e-12))
    return results
