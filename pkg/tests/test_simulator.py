import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq
from scipy.stats import binom

from sheet_extremes.field_model import HurstPair, Rect, fbs_covariance
from sheet_extremes.global_bounds import Normalizer
from sheet_extremes.simulator import (
    FactorizationError,
    FieldSample,
    Grid2,
    McConfig,
    SheetSampler,
    TailEstimate,
    axis_cov_factor,
    axis_covariance,
    clopper_pearson,
    empirical_sup_tail,
    path_maxima,
    quadrant_normalizer,
    sample_fbs,
    tail_estimates,
    verify_model_identities,
)


def cp_oracle(k, n, level=0.99):
    """Clopper-Pearson endpoints by root-finding on the binomial cdf."""
    a = (1 - level) / 2
    lo = 0.0 if k == 0 else brentq(lambda p: binom.sf(k - 1, n, p) - a, 1e-300, 1, xtol=1e-15, rtol=1e-14)
    hi = 1.0 if k == n else brentq(lambda p: binom.cdf(k, n, p) - a, 0, 1 - 1e-16, xtol=1e-15, rtol=1e-14)
    return lo, hi


class TestGrid:
    def test_uniform_origin_skips_zero(self):
        g = Grid2.uniform(Rect.unit(), 4, 8)
        assert g.shape == (4, 8)
        assert g.axis1[0] == 0.25 and g.axis1[-1] == 1.0

    def test_uniform_offset(self):
        g = Grid2.uniform(Rect.square12(), 5, 5)
        assert g.axis1[0] == 1.0 and g.axis1[-1] == 2.0

    def test_validation(self):
        with pytest.raises(ValueError):
            Grid2(np.array([0.5, 0.2]), np.array([1.0]))
        with pytest.raises(ValueError):
            Grid2(np.array([-1.0, 0.2]), np.array([1.0]))
        with pytest.raises(ValueError):
            Grid2(np.arange(1.0, 101.0), np.arange(1.0, 101.0), max_points=100)

    def test_refine_keeps_points(self):
        g = Grid2.geometric(0.1, 10.0, 5, 7)
        r = g.refine()
        assert r.shape == (9, 13)
        assert np.array_equal(r.axis1[::2], g.axis1)

    def test_sample_shape_check(self):
        with pytest.raises(ValueError):
            FieldSample(np.zeros((2, 2)), Grid2.uniform(Rect.unit(), 3, 3))


class TestConfig:
    def test_rejects_zero_paths(self):
        with pytest.raises(ValueError):
            McConfig(0)
        with pytest.raises(ValueError):
            McConfig(10, workers=0)


class TestAxisFactor:
    def test_single_point(self):
        for h in (0.2, 0.5, 0.9):
            assert np.allclose(axis_cov_factor(h, [1.0]), [[1.0]])

    def test_brownian(self):
        assert np.allclose(axis_cov_factor(0.5, [1.0, 2.0]), [[1.0, 0.0], [1.0, 1.0]])

    @pytest.mark.parametrize("h", [0.1, 0.3, 0.5, 0.9])
    def test_reconstruction(self, h):
        axis = np.arange(1, 17) / 16
        L, jit = axis_cov_factor(h, axis, return_info=True)
        R = axis_covariance(h, axis)
        assert np.max(np.abs(L @ L.T - R)) <= 1e-8 * np.max(np.diag(R))
        assert np.allclose(L, np.tril(L))
        assert jit == 0.0

    def test_fine_grid_small_h(self):
        axis = np.arange(1, 513) / 512
        L, jit = axis_cov_factor(0.05, axis, return_info=True)
        R = axis_covariance(0.05, axis)
        assert np.max(np.abs(L @ L.T - R)) <= 1e-8

    def test_errors(self):
        with pytest.raises(ValueError):
            axis_cov_factor(0.5, [0.0, 1.0])
        with pytest.raises(ValueError):
            axis_cov_factor(0.5, [2.0, 1.0])
        with pytest.raises(ValueError):
            axis_cov_factor(1.0, [1.0])

    def test_failure_reports_condition(self, monkeypatch):
        import sheet_extremes.simulator as S

        def refuse(*a, **k):
            raise np.linalg.LinAlgError("not positive definite")

        monkeypatch.setattr(S.linalg, "cholesky", refuse)
        with pytest.raises(FactorizationError, match="condition number"):
            S.axis_cov_factor(0.5, [0.5, 1.0])

    @given(st.floats(0.05, 0.95), st.floats(0.1, 10.0))
    def test_axis_scaling(self, h, a):
        axis = np.linspace(0.1, 1.0, 6)
        assert np.allclose(axis_covariance(h, a * axis), a ** (2 * h) * axis_covariance(h, axis),
                           rtol=1e-12, atol=1e-14)


class TestSampler:
    def test_kronecker_exact(self):
        h = HurstPair(0.3, 0.7)
        g = Grid2.uniform(Rect(1.0, 2.0), 8, 6)
        s = SheetSampler(h, g)
        F = s.covariance_factor()
        T1, T2 = np.meshgrid(g.axis1, g.axis2, indexing="ij")
        pts = (T1.ravel(), T2.ravel())
        C = fbs_covariance(h, (pts[0][:, None], pts[1][:, None]), (pts[0][None, :], pts[1][None, :]))
        assert np.max(np.abs(F @ F.T - C)) <= 1e-7

    def test_row_major_contract(self):
        h = HurstPair(0.4, 0.6)
        g = Grid2.uniform(Rect.unit(), 5, 3)
        s = SheetSampler(h, g)
        got = s.interior(7, 8, seed=11)[0]
        z = np.random.Generator(np.random.Philox(key=11, counter=[0, 0, 7, 0])).standard_normal((5, 3))
        assert np.array_equal(got, s.f1.L @ z @ s.f2.L.T)

    def test_zero_lines(self):
        h = HurstPair(0.5, 0.5)
        g = Grid2(np.array([0.0, 0.5, 1.0]), np.array([0.0, 1.0]))
        for smp in sample_fbs(h, g, McConfig(5, seed=3)):
            assert np.all(smp.values[0, :] == 0.0) and np.all(smp.values[:, 0] == 0.0)
            assert np.all(smp.values[1:, 1:] != 0.0)

    def test_variance_at_one(self):
        h = HurstPair(0.3, 0.8)
        g = Grid2.uniform(Rect.unit(), 4, 4)
        vals = np.array([smp.values[-1, -1] for smp in sample_fbs(h, g, McConfig(20000, seed=5))])
        v = np.mean(vals ** 2)
        assert abs(v - 1.0) <= 3 * math.sqrt(2.0 / vals.size)

    def test_scaled_grid_covariance(self):
        # empirical second moment on a scaled grid matches a1^{2H1} a2^{2H2}
        h = HurstPair(0.3, 0.7)
        a1, a2 = 3.0, 0.5
        g = Grid2(np.array([a1]), np.array([a2]))
        vals = np.array([smp.values[0, 0] for smp in sample_fbs(h, g, McConfig(20000, seed=9))])
        target = a1 ** 0.6 * a2 ** 1.4
        se = np.std(vals ** 2, ddof=1) / math.sqrt(vals.size)
        assert abs(np.mean(vals ** 2) - target) <= 4 * se

    def test_worker_independence(self):
        h = HurstPair(0.5, 0.3)
        g = Grid2.uniform(Rect.unit(), 12, 10)
        base = path_maxima(h, g, McConfig(700, seed=2, workers=1, chunk=64))
        for w in (2, 4, 8):
            assert np.array_equal(base, path_maxima(h, g, McConfig(700, seed=2, workers=w, chunk=64)))
        assert np.array_equal(base, path_maxima(h, g, McConfig(700, seed=2, chunk=256)))
        assert not np.array_equal(base, path_maxima(h, g, McConfig(700, seed=3, chunk=64)))

    def test_refinement_monotone(self):
        h = HurstPair(0.4, 0.6)
        coarse = Grid2.uniform(Rect.unit(), 8, 8)
        fine = coarse.refine()
        # the fine-grid sample restricted to coarse points is an exact coarse-grid sample
        s = SheetSampler(h, fine)
        L1c, L2c = s.f1.L[::2], s.f2.L[::2]
        T1, T2 = np.meshgrid(coarse.axis1, coarse.axis2, indexing="ij")
        C = fbs_covariance(h, (T1.ravel()[:, None], T2.ravel()[:, None]), (T1.ravel()[None, :], T2.ravel()[None, :]))
        K = np.kron(L1c, L2c)
        assert np.max(np.abs(K @ K.T - C)) <= 1e-8
        vals = s.embed(s.interior(0, 300, seed=1))
        fine_max = np.abs(vals).reshape(300, -1).max(axis=1)
        coarse_max = np.abs(vals[:, ::2, ::2]).reshape(300, -1).max(axis=1)
        assert np.all(fine_max >= coarse_max)


class TestTails:
    @settings(max_examples=60)
    @given(st.integers(1, 5000), st.data())
    def test_clopper_pearson_oracle(self, n, data):
        k = data.draw(st.integers(0, n))
        lo, hi = clopper_pearson(k, n)
        olo, ohi = cp_oracle(k, n)
        assert lo == pytest.approx(olo, abs=1e-10)
        assert hi == pytest.approx(ohi, abs=1e-10)

    def test_zero_hits(self):
        n = 100000
        assert clopper_pearson(0, n)[1] == pytest.approx(1 - 0.005 ** (1 / n), rel=1e-10)

    def test_eps_zero_and_huge(self):
        h = HurstPair(0.5, 0.5)
        g = Grid2.uniform(Rect.unit(), 8, 8)
        t = empirical_sup_tail(h, g, None, [0.0, 1000.0], McConfig(500, seed=4))
        assert t[0].p_hat == 1.0
        assert t[1].hits == 0 and t[1].ci99_high == pytest.approx(1 - 0.005 ** (1 / 500), rel=1e-10)

    def test_validation(self):
        with pytest.raises(ValueError):
            tail_estimates(np.ones(4), [2.0, 1.0])
        with pytest.raises(ValueError):
            TailEstimate(1.0, 5, 10, 0.6, 0.9)
        with pytest.raises(ValueError):
            clopper_pearson(5, 4)
        h = HurstPair(0.5, 0.5)
        g = Grid2.uniform(Rect.unit(), 4, 4)
        with pytest.raises(ValueError):
            path_maxima(h, g, McConfig(3), normalizer=lambda a, b: a - 0.5)

    def test_normalizer(self):
        h = HurstPair(0.5, 0.5)
        g = Grid2.geometric(math.exp(-3), math.exp(3), 6, 6)
        norm = quadrant_normalizer(h, Normalizer.loglog())
        raw = path_maxima(h, g, McConfig(200, seed=8))
        normed = path_maxima(h, g, McConfig(200, seed=8), normalizer=norm)
        T1, T2 = np.meshgrid(g.axis1, g.axis2, indexing="ij")
        n = norm(T1, T2)
        assert np.all(normed <= raw / n.min() + 1e-12)
        assert np.all(normed >= raw / n.max() - 1e-12)


class TestIdentityReport:
    def test_passes(self):
        rep = verify_model_identities(HurstPair(0.3, 0.7), Grid2.uniform(Rect.unit(), 16, 16), McConfig(4000, seed=1))
        assert rep.passed, [c for c in rep.checks if not c.passed]

    def test_typo_mode_fails(self):
        rep = verify_model_identities(HurstPair(0.3, 0.7), Grid2.uniform(Rect.unit(), 16, 16),
                                      McConfig(2000, seed=1), misprinted_exponent=True)
        bad = [c.name for c in rep.checks if not c.passed]
        assert bad == ["increment variance, second coordinate"]

    def test_brownian_rect_increment(self):
        from sheet_extremes.field_model import rect_increment_variance
        for d in ((0.3, 0.2), (1.0, 2.5)):
            assert rect_increment_variance(HurstPair(0.5, 0.5), (0.7, 0.1), (0.7 + d[0], 0.1 + d[1])) == \
                pytest.approx(d[0] * d[1], rel=1e-12)
