"""Tests for link functions and their curvature/KL parameters."""

import math

import numpy as np
import pytest
from scipy.special import expit, ndtr

from ranktopo.models import (
    ModelParams,
    compute_gamma,
    compute_zeta,
    make_link,
    model_params,
    plackett_luce,
    softmax,
)

from oracles import fd_gradient, fd_hessian


def smooth_custom_cdf(x):
    """A symmetric strongly log-concave CDF that is neither builtin."""
    return expit(np.asarray(x, dtype=float) * 1.5)


def cubic_warp_cdf(x):
    """Symmetric and monotone but not log-concave near the origin."""
    x = np.asarray(x, dtype=float)
    return 0.5 * (1.0 + np.tanh(x**3 / (1.0 + x * x)))


class TestLinkBasics:
    @pytest.mark.parametrize("family", ["btl", "thurstone"])
    def test_symmetry_on_grid(self, family):
        """F(x) + F(-x) = 1 to 1e-10 across [-10, 10]."""
        link = make_link(family, 1.0)
        grid = np.linspace(-10, 10, 2001)
        total = link.cdf(grid) + link.cdf(-grid)
        np.testing.assert_allclose(total, 1.0, rtol=0, atol=1e-10)

    @pytest.mark.parametrize("family", ["btl", "thurstone"])
    def test_monotone_and_interior(self, family):
        # Near 1.0, float64 resolves Phi increments only while the density
        # exceeds the ulp over a grid step, so the strictness check is
        # confined to the range where consecutive values are distinguishable.
        link = make_link(family, 1.0)
        hi = 7.0 if family == "thurstone" else 10.0
        grid = np.linspace(-hi, hi, 2001)
        vals = link.cdf(grid)
        assert np.all(np.diff(vals) > 0)
        assert np.all(vals > 0) and np.all(vals < 1)

    @pytest.mark.parametrize("family", ["btl", "thurstone"])
    def test_derivative_matches_finite_differences(self, family):
        """Analytic F' vs central differences, 1e-6 relative on the grid.

        For x > 0 the difference F(x+h) - F(x-h) is evaluated at -x via
        symmetry (F' is even), where the CDF is small and the subtraction
        is free of float cancellation near 1.
        """
        link = make_link(family, 1.0)
        grid = np.linspace(-10, 10, 401)
        h = 1e-6
        stable = -np.abs(grid)
        fd = (link.cdf(stable + h) - link.cdf(stable - h)) / (2 * h)
        np.testing.assert_allclose(link.pdf(grid), fd, rtol=1e-6)

    def test_btl_values(self):
        link = make_link("btl", 1.0)
        assert abs(float(link.cdf(np.float64(0.0))) - 0.5) < 1e-12
        assert abs(float(link.cdf(np.float64(2.0))) - 0.8807971) < 1e-7

    def test_thurstone_density_at_zero(self):
        link = make_link("thurstone", 1.0)
        assert abs(float(link.pdf(np.float64(0.0))) - 0.3989423) < 1e-7

    def test_sigma_validation(self):
        with pytest.raises(ValueError):
            make_link("btl", 0.0)
        with pytest.raises(ValueError):
            make_link("btl", -2.0)
        with pytest.raises(ValueError):
            make_link("cauchyish", 1.0)

    def test_custom_link_screens(self):
        link = make_link(smooth_custom_cdf, 1.0)
        grid = np.linspace(-4, 4, 101)
        np.testing.assert_allclose(link.cdf(grid) + link.cdf(-grid), 1.0, atol=1e-10)
        fd = (smooth_custom_cdf(grid + 1e-6) - smooth_custom_cdf(grid - 1e-6)) / 2e-6
        np.testing.assert_allclose(link.pdf(grid), fd, rtol=1e-6)
        with pytest.raises(ValueError):
            make_link(lambda x: expit(np.asarray(x) + 0.3), 1.0)  # asymmetric
        with pytest.raises(ValueError):
            make_link(lambda x: np.clip(np.asarray(x), 0.0, 1.0), 1.0)  # hits 0/1


class TestZeta:
    def test_btl_zero_bound(self):
        assert abs(compute_zeta(make_link("btl", 1.0), 0.0) - 1.0) < 1e-12

    def test_btl_unit_bound(self):
        value = compute_zeta(make_link("btl", 1.0), 1.0)
        f2 = float(expit(2.0))
        assert abs(value - 0.25 / (f2 * (1 - f2))) < 1e-9
        assert abs(value - 2.38110) < 1e-4

    def test_thurstone_zero_bound(self):
        value = compute_zeta(make_link("thurstone", 1.0), 0.0)
        assert abs(value - 1.595769) < 1e-6

    def test_sigma_rescaling(self):
        # 2B/sigma is all that matters: (B=2, sigma=2) matches (B=1, sigma=1)
        assert abs(compute_zeta(make_link("btl", 2.0), 2.0)
                   - compute_zeta(make_link("btl", 1.0), 1.0)) < 1e-9

    def test_dominates_four_fprime0(self):
        """zeta >= 4 F'(0) for every bound, since F(1-F) <= 1/4."""
        for family in ("btl", "thurstone"):
            link = make_link(family, 1.0)
            fp0 = float(link.pdf(np.float64(0.0)))
            for bound in (0.0, 0.3, 1.0, 2.5, 5.0):
                assert compute_zeta(link, bound) >= 4 * fp0 - 1e-9

    def test_negative_bound_rejected(self):
        with pytest.raises(ValueError):
            compute_zeta(make_link("btl", 1.0), -0.5)


class TestGamma:
    def test_btl_matches_analytic(self):
        """For BTL the curvature minimum is F(2B/s)(1 - F(2B/s))."""
        link = make_link("btl", 1.0)
        for bound in (0.0, 0.5, 1.0, 2.0):
            f = float(expit(2.0 * bound))
            assert abs(compute_gamma(link, bound) - f * (1 - f)) < 1e-9

    def test_btl_unit_value(self):
        assert abs(compute_gamma(make_link("btl", 1.0), 1.0) - 0.104994) < 1e-6

    def test_thurstone_vs_finite_difference_scan(self):
        """gamma matches a 1e-5-step finite-difference scan of -log Phi."""
        link = make_link("thurstone", 1.0)
        value = compute_gamma(link, 1.0)
        grid = np.linspace(-2, 2, 4001)
        h = 1e-5
        neglog = lambda t: -np.log(ndtr(t))
        fd_scan = (neglog(grid + h) - 2 * neglog(grid) + neglog(grid - h)) / h**2
        assert value > 0
        assert abs(value - fd_scan.min()) < 1e-5

    def test_non_log_concave_rejected(self):
        link = make_link(cubic_warp_cdf, 1.0)
        with pytest.raises(ValueError):
            compute_gamma(link, 1.0)

    def test_model_params_bundle(self):
        link = make_link("btl", 1.0)
        params = model_params(link, 1.0)
        assert params.sigma == 1.0
        assert params.B == 1.0
        assert abs(params.gamma - 0.104994) < 1e-6
        assert abs(params.zeta - 2.381098) < 1e-6

    def test_model_params_validation(self):
        with pytest.raises(ValueError):
            ModelParams(B=1.0, gamma=0.0, zeta=1.0, sigma=1.0)
        with pytest.raises(ValueError):
            ModelParams(B=-1.0, gamma=0.1, zeta=1.0, sigma=1.0)


class TestPlackettLuce:
    def test_choice_prob_examples(self):
        pl2 = plackett_luce(2)
        assert abs(pl2.choice_prob(np.zeros(2)) - 0.5) < 1e-12
        pl3 = plackett_luce(3)
        assert abs(pl3.choice_prob(np.array([1.0, 0, 0])) - math.e / (math.e + 2)) < 1e-9

    def test_m2_equals_btl(self):
        """Two-item softmax choice equals the logistic link at sigma = 1."""
        pl2 = plackett_luce(2)
        btl = make_link("btl", 1.0)
        rng = np.random.default_rng(0)
        for _ in range(200):
            x = rng.uniform(-3, 3, size=2)
            assert abs(pl2.choice_prob(x) - float(btl.cdf(np.float64(x[0] - x[1])))) < 1e-12

    def test_m_validation(self):
        with pytest.raises(ValueError):
            plackett_luce(1)

    def test_shift_invariance(self):
        pl = plackett_luce(4)
        rng = np.random.default_rng(1)
        for _ in range(100):
            x = rng.uniform(-2, 2, size=4)
            t = rng.uniform(-5, 5)
            assert abs(pl.choice_prob(x) - pl.choice_prob(x + t)) < 1e-10

    def test_shift_probabilities_sum_to_one(self):
        """sum_j F(x^T R_j) = 1: the cyclic shifts enumerate the choices."""
        pl = plackett_luce(5)
        rng = np.random.default_rng(2)
        for _ in range(100):
            x = rng.uniform(-2, 2, size=5)
            total = sum(pl.choice_prob(x @ r) for r in pl.shifts)
            assert abs(total - 1.0) < 1e-10

    def test_shifts_put_each_position_first(self):
        pl = plackett_luce(4)
        x = np.array([1.0, 2.0, 3.0, 4.0])
        for j, r in enumerate(pl.shifts):
            assert (x @ r)[0] == x[j]

    def test_hessian_matches_finite_differences(self):
        pl = plackett_luce(3)
        rng = np.random.default_rng(3)
        for _ in range(10):
            x = rng.uniform(-1, 1, size=3)
            neg_log = lambda z: -math.log(pl.choice_prob(z))
            np.testing.assert_allclose(pl.neg_log_hessian(x), fd_hessian(neg_log, x),
                                       atol=1e-5)

    @pytest.mark.parametrize("m", [2, 3, 5])
    def test_hessian_spectral_structure(self, m):
        """Exact Hessian: PSD, ones in nullspace, positive second eigenvalue."""
        pl = plackett_luce(m)
        rng = np.random.default_rng(4)
        for _ in range(100):
            x = rng.uniform(-1, 1, size=m)
            hess = pl.neg_log_hessian(x)
            vals = np.linalg.eigvalsh(hess)
            assert vals[0] >= -1e-10
            assert vals[1] > 0
            assert np.linalg.norm(hess @ np.ones(m)) <= 1e-10

    def test_gradient_orthogonal_to_ones(self):
        """<grad F(x), 1> = 0, checked against finite differences."""
        pl = plackett_luce(4)
        rng = np.random.default_rng(5)
        for _ in range(20):
            x = rng.uniform(-1, 1, size=4)
            grad = fd_gradient(pl.choice_prob, x)
            assert abs(grad @ np.ones(4)) < 1e-8
            np.testing.assert_allclose(pl.grad_choice_prob(x), grad, atol=1e-8)

    @pytest.mark.parametrize("m", [2, 3, 5])
    def test_curvature_lower_bounds_hessian(self, m):
        """H = beta (I - 11^T/m) satisfies H <= Hessian over the box."""
        pl = plackett_luce(m, B=1.0)
        assert pl.beta > 0
        vals = np.linalg.eigvalsh(pl.curvature)
        assert abs(vals[0]) < 1e-12
        np.testing.assert_allclose(vals[1:], pl.beta, atol=1e-12)
        rng = np.random.default_rng(6)
        for _ in range(200):
            x = rng.uniform(-1, 1, size=m)
            gap = np.linalg.eigvalsh(pl.neg_log_hessian(x) - pl.curvature)
            assert gap[0] >= -1e-9

    def test_beta_m2_closed_form(self):
        # lambda_2 of the 2x2 Hessian is 2p(1-p), minimised at the corner
        # score difference -2B.
        pl = plackett_luce(2, B=1.0)
        p = float(expit(-2.0))
        assert abs(pl.beta - 2 * p * (1 - p)) < 1e-6


class TestSoftmax:
    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(7)
        x = rng.uniform(-5, 5, size=(40, 6))
        np.testing.assert_allclose(softmax(x, axis=1).sum(axis=1), 1.0, atol=1e-12)

    def test_overflow_safe(self):
        probs = softmax(np.array([1000.0, 0.0]))
        assert abs(probs[0] - 1.0) < 1e-12
