import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eeqt.errors import DimensionError, NonHermitianInput
from eeqt.numerics import RngStream, ToleranceConfig, draw, matexp, trace_distance
from eeqt.model import SIGMA_X


def taylor_exp(m, terms=30):
    """Independent oracle: truncated power series with scaling and squaring."""
    m = np.asarray(m, dtype=complex)
    squarings = max(0, int(np.ceil(np.log2(max(np.linalg.norm(m, 1), 1e-300)))) + 1)
    a = m / 2 ** squarings
    out = np.eye(len(m), dtype=complex)
    term = np.eye(len(m), dtype=complex)
    for k in range(1, terms):
        term = term @ a / k
        out = out + term
    for _ in range(squarings):
        out = out @ out
    return out


def rand_matrix(seed, n, scale):
    rng = np.random.default_rng(seed)
    return scale * (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / np.sqrt(2 * n)


class TestMatexp:
    def test_zero(self):
        np.testing.assert_array_equal(matexp(np.zeros((2, 2))), np.eye(2))

    def test_diagonal(self):
        out = matexp(np.diag([-1.0, -2.0]))
        np.testing.assert_allclose(np.diag(out), [math.exp(-1), math.exp(-2)], rtol=1e-14)
        assert abs(out[0, 1]) == 0 and abs(out[1, 0]) == 0

    def test_rotation_against_series(self):
        m = 1j * (np.pi / 2) * SIGMA_X
        out = matexp(m)
        np.testing.assert_allclose(out, 1j * SIGMA_X, atol=1e-14)
        np.testing.assert_allclose(out, taylor_exp(m), atol=1e-13)

    @pytest.mark.parametrize("seed", range(5))
    def test_relative_accuracy_large_norm(self, seed):
        m = rand_matrix(seed, 4, 1.0)
        m = 100 * m / np.linalg.norm(m, 2) * 0.5
        # anti-Hermitian part keeps the exponential bounded so the oracle stays exact
        m = (m - m.conj().T) / 2
        ref = taylor_exp(m, terms=40)
        assert np.linalg.norm(matexp(m) - ref) / np.linalg.norm(ref) < 1e-11

    def test_non_square(self):
        with pytest.raises(DimensionError):
            matexp(np.zeros((2, 3)))

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 10_000), st.integers(1, 5), st.floats(0.0, 10.0))
    def test_inverse(self, seed, n, scale):
        m = rand_matrix(seed, n, scale)
        fwd, back = matexp(m), matexp(-m)
        # rounding grows with the conditioning of the pair, not with |m| alone
        cond = np.linalg.norm(fwd, 2) * np.linalg.norm(back, 2)
        np.testing.assert_allclose(fwd @ back, np.eye(n), atol=1e-13 * cond)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 10_000), st.integers(1, 5), st.floats(0.0, 10.0))
    def test_antihermitian_gives_unitary(self, seed, n, scale):
        m = rand_matrix(seed, n, scale)
        u = matexp(m - m.conj().T)
        np.testing.assert_allclose(u @ u.conj().T, np.eye(n), atol=1e-10)


class TestTraceDistance:
    def test_examples(self):
        rho = np.diag([0.3, 0.7]).astype(complex)
        assert trace_distance(rho, rho) == 0.0
        assert trace_distance(np.diag([1.0, 0.0]), np.diag([0.0, 1.0])) == pytest.approx(1.0, abs=1e-15)
        assert trace_distance(np.diag([1.0, 0.0]), np.diag([0.5, 0.5])) == pytest.approx(0.5, abs=1e-15)

    def test_errors(self):
        with pytest.raises(DimensionError):
            trace_distance(np.eye(2), np.eye(3))
        with pytest.raises(NonHermitianInput):
            trace_distance(np.array([[0, 1], [0, 0]]), np.eye(2))

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 10_000), st.integers(1, 4))
    def test_metric_properties(self, seed, n):
        rng = np.random.default_rng(seed)
        hs = []
        for _ in range(3):
            a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
            hs.append((a + a.conj().T) / 2)
        a, b, c = hs
        assert trace_distance(a, b) >= 0
        assert trace_distance(a, b) == pytest.approx(trace_distance(b, a), abs=1e-12)
        assert trace_distance(a, c) <= trace_distance(a, b) + trace_distance(b, c) + 1e-12


class TestRng:
    def test_reproducible(self):
        a = [draw(RngStream(1, 0), "uniform01") for _ in range(1)]
        s1, s2 = RngStream(1, 0), RngStream(1, 0)
        seq1 = [draw(s1, "uniform01") for _ in range(50)] + [draw(s1, "standard_normal") for _ in range(50)]
        seq2 = [draw(s2, "uniform01") for _ in range(50)] + [draw(s2, "standard_normal") for _ in range(50)]
        assert seq1 == seq2
        assert a[0] == seq1[0]

    def test_distinct_indices_differ(self):
        assert RngStream(1, 0).uniforms(5).tolist() != RngStream(1, 1).uniforms(5).tolist()
        assert RngStream(1, 0).uniforms(5).tolist() != RngStream(2, 0).uniforms(5).tolist()

    def test_uniform_mean(self):
        x = RngStream(3, 0).uniforms(10**6)
        assert x.min() >= 0.0 and x.max() < 1.0
        assert abs(x.mean() - 0.5) < 0.002

    def test_normal_variance(self):
        x = RngStream(3, 1).normal(10**6)
        assert abs(x.var() - 1.0) < 0.005
        assert abs(x.mean()) < 0.005

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            draw(RngStream(0), "poisson")


class TestTolerance:
    def test_defaults(self):
        t = ToleranceConfig()
        assert (t.hermiticity, t.normalization, t.positivity) == (1e-10, 1e-10, 1e-10)

    def test_env_override(self):
        t = ToleranceConfig.from_env({"EEQT_DEFAULT_TOL": '{"hermiticity": 1e-6}'})
        assert t.hermiticity == 1e-6 and t.normalization == 1e-10

    @pytest.mark.parametrize("bad", ['{"hermiticity": 0}', '{"nope": 1}', "not json"])
    def test_env_rejects(self, bad):
        with pytest.raises(ValueError):
            ToleranceConfig.from_env({"EEQT_DEFAULT_TOL": bad})
