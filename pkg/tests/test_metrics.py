import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import integrate, stats

from brwp.errors import UsageError
from brwp.metrics import (
    Grid1D,
    MarginalCurve,
    error_norms,
    hpd_threshold,
    kde_on_grid,
    kl_on_grid,
    mixture_log_normalizer,
    mixture_marginal_exact,
    w2_1d,
)
from brwp.problems import MixtureSpec, random_mixture

WIDE = Grid1D(-40.0, 40.0, 4001)


class TestGrid:
    def test_points(self):
        np.testing.assert_allclose(Grid1D(0.0, 1.0, 5).points, [0, 0.25, 0.5, 0.75, 1.0])

    def test_validation(self):
        with pytest.raises(UsageError):
            Grid1D(1.0, 1.0, 10)
        with pytest.raises(UsageError):
            Grid1D(0.0, 1.0, 1)


class TestMixtureMarginal:
    def test_gaussian_limit(self):
        curve = mixture_marginal_exact(MixtureSpec(np.zeros((1, 1)), 4.0, 0.0), 0, WIDE)
        mid = WIDE.n_points // 2
        assert curve.density[mid] == pytest.approx(1 / (4 * math.sqrt(2 * math.pi)), rel=1e-12)
        assert curve.density[mid] == pytest.approx(0.09974, abs=1e-5)
        assert not curve.narrow

    def test_matches_quadrature(self):
        spec = MixtureSpec(np.array([[2.0]]), 4.0, 0.1)

        def raw(x):
            return math.exp(-((x - 2.0) ** 2) / 32.0 - 0.1 * abs(x))

        z = sum(integrate.quad(raw, a, b, epsabs=0, epsrel=1e-12)[0]
                for a, b in ((-np.inf, 0.0), (0.0, np.inf)))
        grid = Grid1D(-30.0, 30.0, 61)
        curve = mixture_marginal_exact(spec, 0, grid)
        ref = np.array([raw(x) / z for x in grid.points])
        np.testing.assert_allclose(curve.density, ref, atol=1e-7, rtol=0)
        assert mixture_log_normalizer(spec) == pytest.approx(math.log(z), rel=1e-10)

    def test_two_dimensional_marginal_against_quadrature(self):
        spec = MixtureSpec(np.array([[1.0, -2.0], [-3.0, 0.5]]), 1.5, 0.3)

        def joint(x2, x1):
            v = sum(math.exp(-((x1 - c[0]) ** 2 + (x2 - c[1]) ** 2) / (2 * 1.5**2))
                    for c in spec.centers)
            return v * math.exp(-0.3 * (abs(x1) + abs(x2)))

        z, _ = integrate.dblquad(joint, -20, 20, -20, 20, epsabs=1e-13, epsrel=1e-11)
        grid = Grid1D(-4.0, 4.0, 9)
        curve = mixture_marginal_exact(spec, 0, grid)
        for x, got in zip(grid.points, curve.density):
            ref = integrate.quad(lambda t: joint(t, x), -20, 20, epsabs=1e-14, epsrel=1e-11)[0]
            assert got == pytest.approx(ref / z, rel=1e-7)

    def test_integrates_to_one(self):
        spec = random_mixture(20, 4, 4.0, 0.1, seed=7)
        for k in (0, 19):
            curve = mixture_marginal_exact(spec, k, WIDE)
            assert curve.integral() == pytest.approx(1.0, abs=1e-3)

    def test_even_for_symmetric_centers(self):
        spec = MixtureSpec(np.array([[3.0, 1.0], [-3.0, 1.0]]), 2.0, 0.5)
        curve = mixture_marginal_exact(spec, 0, Grid1D(-10.0, 10.0, 201))
        np.testing.assert_allclose(curve.density, curve.density[::-1], rtol=1e-12)

    def test_narrow_grid_flag(self):
        curve = mixture_marginal_exact(MixtureSpec(np.zeros((1, 1)), 4.0), 0,
                                       Grid1D(-1.0, 1.0, 50))
        assert curve.narrow

    def test_huge_dimension_normalizer_stays_finite(self):
        spec = random_mixture(400, 3, 4.0, 0.1, seed=0)
        curve = mixture_marginal_exact(spec, 5, WIDE)
        assert np.isfinite(curve.log_normalization)
        assert curve.integral() == pytest.approx(1.0, abs=1e-3)

    def test_dim_out_of_range(self):
        with pytest.raises(UsageError):
            mixture_marginal_exact(MixtureSpec(np.zeros((1, 2)), 1.0), 2, WIDE)


class TestKde:
    def test_single_sample_normalized(self):
        curve = kde_on_grid([0.0], 0.1, Grid1D(-5.0, 5.0, 2001))
        assert curve.integral() == pytest.approx(1.0, abs=1e-6)

    def test_even_for_symmetric_samples(self):
        curve = kde_on_grid([-1.0, 1.0], 0.1, Grid1D(-4.0, 4.0, 401))
        np.testing.assert_allclose(curve.density, curve.density[::-1], rtol=1e-12)

    def test_convolution_identity(self):
        samples = np.random.default_rng(0).standard_normal(10_000)
        grid = Grid1D(-6.0, 6.0, 601)
        curve = kde_on_grid(samples, 0.1, grid)
        ref = stats.norm(0, math.sqrt(1.1)).pdf(grid.points)
        assert np.max(np.abs(curve.density - ref)) <= 0.02

    def test_far_samples_do_not_underflow(self):
        curve = kde_on_grid([3.0], 1e-4, Grid1D(0.0, 6.0, 6001))
        assert curve.integral() == pytest.approx(1.0, abs=1e-6)

    def test_validation(self):
        with pytest.raises(UsageError):
            kde_on_grid([], 0.1, WIDE)
        with pytest.raises(UsageError):
            kde_on_grid([0.0], 0.0, WIDE)


class TestKl:
    def test_self_divergence_is_zero(self):
        curve = kde_on_grid([0.0, 0.4], 0.5, WIDE)
        assert kl_on_grid(curve, curve) == pytest.approx(0.0, abs=1e-15)

    def test_unit_gaussians(self):
        x = WIDE.points
        p = stats.norm(0, 1).pdf(x)
        q = stats.norm(1, 1).pdf(x)
        assert kl_on_grid(p, q, WIDE) == pytest.approx(0.5, abs=1e-3)

    @given(st.integers(0, 2**31))
    def test_gibbs_inequality(self, seed):
        rng = np.random.default_rng(seed)
        grid = Grid1D(-5.0, 5.0, 101)
        p, q = rng.random((2, 101)) + 1e-3
        assert kl_on_grid(p, q, grid) >= -1e-10

    def test_floor_handles_disjoint_support(self):
        grid = Grid1D(0.0, 1.0, 11)
        p = np.r_[np.ones(6), np.zeros(5)]
        q = np.r_[np.zeros(5), np.ones(6)]
        assert np.isfinite(kl_on_grid(p, q, grid))

    def test_grid_errors(self):
        a = kde_on_grid([0.0], 1.0, Grid1D(-5.0, 5.0, 11))
        b = kde_on_grid([0.0], 1.0, Grid1D(-5.0, 5.0, 21))
        with pytest.raises(UsageError):
            kl_on_grid(a, b)
        with pytest.raises(UsageError):
            kl_on_grid(np.ones(3), np.ones(3))
        with pytest.raises(UsageError):
            kl_on_grid(np.ones(3), np.ones(4), Grid1D(0.0, 1.0, 3))


class TestW2:
    def test_examples(self):
        assert w2_1d([0.3, -1.0], [-1.0, 0.3]) == 0.0
        assert w2_1d([0.0], [1.0]) == 1.0

    @given(arrays(np.float64, st.integers(1, 20), elements=st.floats(-100, 100)),
           st.floats(-50, 50))
    def test_shift(self, a, c):
        assert w2_1d(a, a + c) == pytest.approx(abs(c), abs=1e-12)

    @given(st.integers(0, 2**31))
    def test_triangle_inequality(self, seed):
        a, b, c = np.random.default_rng(seed).normal(size=(3, 15))
        assert w2_1d(a, c) <= w2_1d(a, b) + w2_1d(b, c) + 1e-12

    def test_length_mismatch(self):
        with pytest.raises(UsageError):
            w2_1d([0.0], [0.0, 1.0])


class TestHpd:
    def test_hand_example(self):
        assert hpd_threshold([4.0, 1.0, 3.0, 2.0], 0.25) == 3.0

    def test_limits(self):
        v = np.random.default_rng(0).normal(size=50)
        assert hpd_threshold(v, 1 - 1e-9) == v.min()
        assert hpd_threshold(v, 1e-9) == v.max()

    def test_rounding_at_five_percent(self):
        v = np.arange(1.0, 101.0)
        # (1 - 0.95) * 100 is 5.000000000000004 in floating point
        assert hpd_threshold(v, 0.95) == 5.0

    @given(arrays(np.float64, st.integers(1, 30), elements=st.floats(-1e6, 1e6)),
           st.floats(0.01, 0.99), st.floats(0.01, 0.99))
    def test_monotone_and_quantile_definition(self, v, a1, a2):
        lo, hi = sorted((a1, a2))
        assert hpd_threshold(v, lo) >= hpd_threshold(v, hi)
        eta = hpd_threshold(v, lo)
        # brute force: eta is the smallest sample value whose CDF reaches 1 - alpha
        cdf = np.array([np.mean(v <= x) for x in v])
        ok = v[cdf >= 1 - lo - 1e-9]
        assert eta == ok.min()

    def test_validation(self):
        with pytest.raises(UsageError):
            hpd_threshold([], 0.5)
        with pytest.raises(UsageError):
            hpd_threshold([1.0], 1.0)


class TestErrorNorms:
    def test_exact_match(self):
        out = error_norms([1.0, 2.0], [1.0, 2.0])
        assert out == {"l1_rel": 0.0, "rmse": 0.0, "psnr": math.inf}

    def test_unit_offset(self):
        truth = np.array([0.0, 1.0, 5.0])
        out = error_norms(truth + 1, truth)
        assert out["l1_rel"] == 1.0 and out["rmse"] == 1.0
        assert out["psnr"] == pytest.approx(20 * math.log10(5.0))

    def test_against_naive_recomputation(self):
        rng = np.random.default_rng(3)
        est, truth = rng.normal(size=(2, 40))
        out = error_norms(est, truth, peak=2.0)
        l1 = sum(abs(a - b) for a, b in zip(est, truth)) / 40
        rmse = math.sqrt(sum((a - b) ** 2 for a, b in zip(est, truth)) / 40)
        assert out["l1_rel"] == pytest.approx(l1, abs=1e-12)
        assert out["rmse"] == pytest.approx(rmse, abs=1e-12)
        assert out["psnr"] == pytest.approx(20 * math.log10(2.0 / rmse), abs=1e-12)

    def test_validation(self):
        with pytest.raises(UsageError):
            error_norms([1.0], [1.0, 2.0])
        with pytest.raises(UsageError):
            error_norms([1.0, 2.0], [1.0, 1.0])


def test_marginal_curve_integral():
    g = Grid1D(0.0, 2.0, 3)
    assert MarginalCurve(g, np.array([0.0, 1.0, 0.0]), 1.0).integral() == 1.0
