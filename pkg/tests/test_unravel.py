import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from eeqt.errors import DarkState, InputError
from eeqt.model import LOWERING, SIGMA_X, SIGMA_Z, PureLindbladModel, decay_model, sigma_x_model
from eeqt.numerics import RngStream, projector
from eeqt.pdp import SimulationConfig, uniform_grid
from eeqt.unravel import (
    DiffusionConfig,
    JumpPhase,
    mcwf_deterministic_drift,
    mcwf_jump,
    mcwf_rate,
    mcwf_simulate,
    qsd_batch,
    qsd_diffusion,
    qsd_drift,
    qsd_refinement_study,
    qsd_simulate,
    sigma_x_closed_form,
    waiting_times,
)

Z2 = np.zeros((2, 2))
PLUS = np.array([1, 1]) / np.sqrt(2)
UP = np.array([1.0, 0.0])
DOWN = np.array([0.0, 1.0])


def unit(rng, n):
    v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    return v / np.linalg.norm(v)


class TestQsdCoefficients:
    def test_drift_examples(self):
        np.testing.assert_allclose(qsd_drift(SIGMA_X, UP), [-0.5, 0], atol=1e-15)
        np.testing.assert_allclose(qsd_drift(SIGMA_X, PLUS), [0, 0], atol=1e-15)
        np.testing.assert_array_equal(qsd_drift(Z2, PLUS), [0, 0])

    def test_diffusion_examples(self):
        np.testing.assert_allclose(qsd_diffusion(SIGMA_X, UP), [0, 1], atol=1e-15)
        np.testing.assert_allclose(qsd_diffusion(SIGMA_X, PLUS), [0, 0], atol=1e-15)
        np.testing.assert_allclose(qsd_diffusion(np.eye(2), PLUS), [0, 0], atol=1e-15)

    def test_zero_vector(self):
        with pytest.raises(InputError):
            qsd_drift(SIGMA_X, [0, 0])
        with pytest.raises(InputError):
            qsd_diffusion(SIGMA_X, [0, 0])

    @settings(max_examples=200, deadline=None)
    @given(st.integers(0, 10**6), st.integers(1, 4))
    def test_norm_identities(self, seed, n):
        rng = np.random.default_rng(seed)
        a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        psi = unit(rng, n)
        f, g = qsd_diffusion(a, psi), qsd_drift(a, psi)
        assert abs(np.vdot(psi, f).real) < 1e-12
        assert abs(2 * np.vdot(psi, g).real + np.vdot(f, f).real) < 1e-12


class TestQsdSimulate:
    def cfg(self, **kw):
        base = dict(dt=1e-2, horizon=1.0, grid=uniform_grid(1.0, 5), seed=3, n_trajectories=1)
        base.update(kw)
        return DiffusionConfig(**base)

    def test_no_operators_constant(self):
        rec = qsd_simulate(PureLindbladModel(Z2, (Z2,)), PLUS, self.cfg(), RngStream(0))
        for _, x in rec.grid_states:
            np.testing.assert_allclose(x.psi, PLUS, rtol=0, atol=1e-15)

    def test_fixed_point(self):
        rec = qsd_simulate(sigma_x_model(), PLUS, self.cfg(), RngStream(0))
        for _, x in rec.grid_states:
            np.testing.assert_allclose(projector(x.psi), projector(PLUS), atol=1e-15)

    def test_unit_norm_and_determinism(self):
        cfg = self.cfg()
        a = qsd_simulate(sigma_x_model(), UP, cfg, RngStream(3, 4))
        b = qsd_simulate(sigma_x_model(), UP, cfg, RngStream(3, 4))
        for (_, x), (_, y) in zip(a.grid_states, b.grid_states):
            assert abs(np.linalg.norm(x.psi) - 1) < 1e-14
            np.testing.assert_array_equal(x.psi, y.psi)

    def test_batch_matches_single(self):
        cfg = self.cfg(n_trajectories=7)
        batch = qsd_batch(sigma_x_model(), UP, cfg, range(7), chunk=3)
        for i in range(7):
            rec = qsd_simulate(sigma_x_model(), UP, cfg, RngStream(cfg.seed, i))
            np.testing.assert_array_equal(batch[i], np.array([x.psi for _, x in rec.grid_states]))

    def test_mesh_hits_grid(self):
        cfg = DiffusionConfig(dt=0.3, horizon=1.0, grid=(0.0, 0.5, 1.0))
        mesh = cfg.mesh()
        assert {0.0, 0.5, 1.0} <= set(mesh.tolist())
        assert np.all(np.diff(mesh) <= 0.3 + 1e-15)
        fine = cfg.mesh(refine=1)
        assert len(fine) == 2 * len(mesh) - 1

    def test_refinement_levels_share_paths(self):
        cfg = self.cfg(n_trajectories=20)
        batch = qsd_batch(sigma_x_model(), UP, cfg, range(20))
        direct = np.einsum("bti,btj->tij", batch, batch.conj()) / 20
        single = qsd_refinement_study(sigma_x_model(), UP, cfg, levels=1)
        np.testing.assert_allclose(single[0], direct, atol=1e-14)
        means = qsd_refinement_study(sigma_x_model(), UP, cfg, levels=2)
        assert means.shape == (2, 5, 2, 2)
        assert np.allclose(np.trace(means, axis1=2, axis2=3), 1, atol=1e-12)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            DiffusionConfig(dt=0, horizon=1.0)
        with pytest.raises(ValueError):
            DiffusionConfig(dt=0.1, horizon=1.0, grid=(1.5,))


class TestMcwfPieces:
    def test_rate(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            assert mcwf_rate(SIGMA_X, unit(rng, 2)) == pytest.approx(1.0, abs=1e-14)
        assert mcwf_rate(LOWERING, DOWN) == 1.0
        assert mcwf_rate(LOWERING, UP) == 0.0

    def test_drift(self):
        rng = np.random.default_rng(1)
        np.testing.assert_allclose(mcwf_deterministic_drift(SIGMA_X, unit(rng, 2)), 0, atol=1e-15)
        np.testing.assert_allclose(mcwf_deterministic_drift(LOWERING, DOWN), 0, atol=1e-15)
        np.testing.assert_allclose(mcwf_deterministic_drift(LOWERING, PLUS),
                                   0.25 * np.array([1, -1]) / np.sqrt(2), atol=1e-15)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 10**6))
    def test_drift_tangent(self, seed):
        rng = np.random.default_rng(seed)
        a = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
        psi = unit(rng, 3)
        assert abs(np.vdot(psi, mcwf_deterministic_drift(a, psi)).real) < 1e-12

    def test_jump_sigma_x(self):
        z = np.array([0.6, 0.8j])
        out = mcwf_jump(SIGMA_X, z)
        np.testing.assert_allclose(projector(out), projector(z[::-1]), atol=1e-15)

    def test_jump_lowering(self):
        np.testing.assert_array_equal(mcwf_jump(LOWERING, DOWN), UP)
        z = np.array([0.0, 1j])
        np.testing.assert_allclose(mcwf_jump(LOWERING, z, JumpPhase.PAPER_H), [1j, 0], atol=1e-15)
        np.testing.assert_allclose(mcwf_jump(LOWERING, z, JumpPhase.ZERO), [1, 0], atol=1e-15)

    def test_dark(self):
        with pytest.raises(DarkState):
            mcwf_jump(LOWERING, UP)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 10**6))
    def test_phase_choice_same_projector(self, seed):
        rng = np.random.default_rng(seed)
        a = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
        psi = unit(rng, 3)
        p0 = projector(mcwf_jump(a, psi, "zero"))
        p1 = projector(mcwf_jump(a, psi, "paper_h"))
        np.testing.assert_allclose(p0, p1, atol=1e-12)


class TestMcwfSimulate:
    def cfg(self, **kw):
        base = dict(horizon=2.0, grid=uniform_grid(2.0, 9), seed=9, n_trajectories=1)
        base.update(kw)
        return SimulationConfig(**base)

    def test_sigma_x_waits_exponential(self):
        cfg = self.cfg(horizon=40.0, grid=())
        waits = []
        k = 0
        while len(waits) < 2000:
            waits.extend(waiting_times(mcwf_simulate(sigma_x_model(), UP, cfg, RngStream(4, k))))
            k += 1
        waits = waits[:2000]
        ks = stats.kstest(waits, "expon").statistic
        assert ks < stats.kstwo.ppf(0.99, len(waits))

    def test_decay_single_jump(self):
        cfg = self.cfg(horizon=40.0, grid=(40.0,))
        for k in range(100):
            rec = mcwf_simulate(decay_model(), DOWN, cfg, RngStream(5, k))
            assert rec.jump_count == 1
            np.testing.assert_array_equal(rec.grid_states[-1][1].psi, UP)

    def test_no_operator_hamiltonian_flow(self):
        model = PureLindbladModel(SIGMA_Z, ())
        rec = mcwf_simulate(model, PLUS, self.cfg(), RngStream(0))
        assert rec.jump_count == 0
        for t, x in rec.grid_states:
            want = np.array([np.exp(-1j * t), np.exp(1j * t)]) / np.sqrt(2)
            np.testing.assert_allclose(projector(x.psi), projector(want), atol=1e-12)

    def test_sigma_x_replay(self):
        cfg = self.cfg()
        for k in range(100):
            rec = mcwf_simulate(sigma_x_model(), UP, cfg, RngStream(6, k))
            for t, x in rec.grid_states:
                want = sigma_x_closed_form(UP, rec.jumps_before(t))
                np.testing.assert_allclose(projector(x.psi), want, atol=1e-12)

    def test_phase_pathwise_invariance(self):
        cfg = self.cfg()
        model = PureLindbladModel(0.3 * SIGMA_Z, (LOWERING, 0.5 * SIGMA_X))
        psi0 = np.array([0.6, 0.8j])
        for k in range(30):
            a = mcwf_simulate(model, psi0, cfg, RngStream(7, k), JumpPhase.ZERO)
            b = mcwf_simulate(model, psi0, cfg, RngStream(7, k), JumpPhase.PAPER_H)
            assert [e.t for e in a.events] == pytest.approx([e.t for e in b.events], abs=1e-12)
            for (_, x), (_, y) in zip(a.grid_states, b.grid_states):
                np.testing.assert_allclose(projector(x.psi), projector(y.psi), atol=1e-12)

    def test_pathwise_laws_differ(self):
        # both unravel the same equation, but QSD never jumps and MCWF counts are Poisson(t)
        cfg = self.cfg(horizon=1.0, grid=(1.0,))
        counts = [mcwf_simulate(sigma_x_model(), UP, cfg, RngStream(8, k)).jump_count for k in range(2000)]
        assert abs(np.mean(counts) - 1.0) < 3 * math.sqrt(1.0 / 2000)
        assert abs(np.var(counts) - 1.0) < 0.15
        rec = qsd_simulate(sigma_x_model(), UP, DiffusionConfig(1e-2, 1.0, (1.0,)), RngStream(8, 0))
        assert rec.jump_count == 0


class TestClosedForm:
    def test_examples(self):
        psi = np.array([0.6, 0.8j])
        np.testing.assert_allclose(sigma_x_closed_form(psi, 0), projector(psi))
        np.testing.assert_allclose(sigma_x_closed_form(UP, 1), np.diag([0, 1]))
        np.testing.assert_allclose(sigma_x_closed_form(psi, 2), projector(psi))

    def test_negative(self):
        with pytest.raises(InputError):
            sigma_x_closed_form(UP, -1)
