"""
Smoothed Density Test Suite
===========================

Tests for the Gaussian-smoothed log-concave MLE: closed-form density against
direct convolution, score against finite differences, CDF limits and
quantile round trips, moment identities and the bandwidth formula.

Usage:
    pytest tests/test_smoothing.py -v
"""

import os
import sys

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.stats import norm

# Add parent directory to path to import modules
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from src.DensityModel.errors import NonPositiveBandwidth, QuantileOutOfRange
from src.DensityModel.lcmle import PiecewiseLogLinearDensity
from src.DensityModel.smoothing import SmoothedDensity, bandwidth, smooth_lcmle

# ============================================
# FIXTURES
# ============================================

@pytest.fixture
def uniform_base():
    return PiecewiseLogLinearDensity(np.array([0.0, 1.0]), np.zeros(2))


@pytest.fixture
def symmetric():
    """Smoothed density whose base is symmetric about zero."""
    knots = np.array([-2.0, -1.0, 0.0, 1.0, 2.0])
    shape = np.array([-2.0, -0.5, 0.0, -0.5, -2.0])
    mass = PiecewiseLogLinearDensity.segment_masses_of(knots, shape).sum()
    return SmoothedDensity(PiecewiseLogLinearDensity(knots, shape - np.log(mass)), 0.7)


@pytest.fixture
def fitted():
    """Smoothed fit of 150 logistic draws."""
    return smooth_lcmle(np.random.default_rng(11).logistic(size=150))


# ============================================
# BANDWIDTH TESTS
# ============================================

class TestBandwidth:
    """Test suite for the closed-form bandwidth"""

    def test_formula(self):
        assert bandwidth(1.5, 2.0) == pytest.approx(np.sqrt(0.5), abs=1e-15)
        print("✅ Test passed: Bandwidth formula")

    def test_equal_variances_raise(self):
        with pytest.raises(NonPositiveBandwidth):
            bandwidth(1.0, 1.0)

    def test_variance_identity(self):
        observations = np.array([-1.0, -0.2, 0.3, 1.0])
        smoothed = smooth_lcmle(observations)
        _, base_variance, _ = smoothed.base.segment_moments()

        assert smoothed.bandwidth**2 + base_variance == pytest.approx(np.var(observations, ddof=1), abs=1e-14)

    def test_floor_replaces_failed_bandwidth(self, monkeypatch):
        import src.DensityModel.smoothing as smoothing

        def collapse(base_variance, pooled_sample_variance):
            raise NonPositiveBandwidth("collapsed")

        monkeypatch.setattr(smoothing, "bandwidth", collapse)

        with pytest.raises(NonPositiveBandwidth):
            smoothing.smooth_lcmle([0.0, 1.0, 2.0])
        assert smoothing.smooth_lcmle([0.0, 1.0, 2.0], bandwidth_floor=1e-6).bandwidth == 1e-6

    def test_construction_rejects_zero_bandwidth(self, uniform_base):
        with pytest.raises(NonPositiveBandwidth):
            SmoothedDensity(uniform_base, 0.0)


# ============================================
# DENSITY TESTS
# ============================================

class TestDensity:
    """Test suite for the closed-form smoothed density"""

    @pytest.mark.parametrize("sigma", [0.05, 0.3, 1.0, 4.0])
    def test_uniform_convolution(self, uniform_base, sigma):
        """
        Uniform on [0, 1] convolved with N(0, sigma^2).

        Expected: Phi((1 - x)/sigma) - Phi(-x/sigma)
        """
        smoothed = SmoothedDensity(uniform_base, sigma)
        x = np.linspace(-3.0, 4.0, 57)
        expected = np.where(
            x < 0.5,
            norm.sf(-x / sigma) - norm.sf((1.0 - x) / sigma),
            norm.cdf((1.0 - x) / sigma) - norm.cdf(-x / sigma),
        )

        np.testing.assert_allclose(smoothed.eval_density(x), expected, rtol=1e-10, atol=1e-300)
        print("✅ Test passed: Uniform convolution")

    def test_integrates_to_one(self, fitted):
        low, high = fitted.quantile(1e-12), fitted.quantile(1 - 1e-12)
        mass, _ = quad(fitted.eval_density, low - 5, high + 5, limit=200)

        assert mass == pytest.approx(1.0, abs=1e-7)

    def test_symmetry(self, symmetric):
        x = np.linspace(-4.0, 4.0, 33)

        np.testing.assert_allclose(symmetric.eval_density(x), symmetric.eval_density(-x), rtol=1e-12)

    def test_positive_everywhere(self, fitted):
        x = np.linspace(-50.0, 50.0, 1001)

        assert np.all(fitted.eval_density(x) > 0)
        assert np.all(np.isfinite(fitted.eval_log_density(x)))

    def test_matches_direct_convolution(self, fitted):
        """
        50 random points against quadrature of the convolution integral.
        """
        base, lam = fitted.base, fitted.bandwidth
        low, high = base.support
        for x in np.random.default_rng(3).uniform(low - 2, high + 2, size=50):
            direct, _ = quad(
                lambda t: base.eval_density(t) * norm.pdf((x - t) / lam) / lam,
                low, high, points=base.knots[1:-1], limit=500, epsabs=1e-13, epsrel=1e-12,
            )
            assert fitted.eval_density(x) == pytest.approx(direct, abs=1e-8)

    def test_moment_identities(self, fitted):
        base_mean, base_variance, _ = fitted.base.segment_moments()
        low, high = fitted.quantile(1e-13), fitted.quantile(1 - 1e-13)
        mean, _ = quad(lambda x: x * fitted.eval_density(x), low, high, limit=200, epsabs=1e-12)
        variance, _ = quad(lambda x: (x - mean) ** 2 * fitted.eval_density(x), low, high, limit=200, epsabs=1e-12)

        assert fitted.mean == pytest.approx(base_mean, abs=1e-15)
        assert mean == pytest.approx(base_mean, abs=1e-9)
        assert variance == pytest.approx(base_variance + fitted.bandwidth**2, abs=1e-8)
        assert fitted.variance == pytest.approx(base_variance + fitted.bandwidth**2, abs=1e-15)


# ============================================
# SCORE TESTS
# ============================================

class TestScore:
    """Test suite for the log-derivative"""

    def test_zero_at_center_of_symmetric(self, symmetric):
        assert abs(symmetric.eval_log_derivative(0.0)) < 1e-10

    def test_matches_finite_differences(self, fitted):
        x = np.linspace(fitted.quantile(0.001), fitted.quantile(0.999), 100)
        h = 1e-6
        numeric = (fitted.eval_log_density(x + h) - fitted.eval_log_density(x - h)) / (2 * h)

        np.testing.assert_allclose(fitted.eval_log_derivative(x), numeric, atol=1e-5)
        print("✅ Test passed: Score finite differences")

    def test_gaussian_tail(self, uniform_base):
        """
        Uniform base with bandwidth 1 at x = 10.

        Expected: score close to -(x - 1), the Gaussian tail slope
        """
        smoothed = SmoothedDensity(uniform_base, 1.0)
        h = 1e-5
        numeric = (smoothed.eval_log_density(10.0 + h) - smoothed.eval_log_density(10.0 - h)) / (2 * h)

        assert smoothed.eval_log_derivative(10.0) == pytest.approx(numeric, abs=1e-4)
        assert smoothed.eval_log_derivative(10.0) == pytest.approx(-9.0, abs=0.2)

    def test_non_increasing(self, fitted):
        x = np.linspace(-30.0, 30.0, 2001)
        score = fitted.eval_log_derivative(x)

        assert np.all(np.isfinite(score))
        assert np.all(np.diff(score) <= 1e-9)


# ============================================
# CDF AND QUANTILE TESTS
# ============================================

class TestDistribution:
    """Test suite for the smoothed CDF and its inverse"""

    def test_uniform_cdf_matches_quadrature(self, uniform_base):
        smoothed = SmoothedDensity(uniform_base, 0.4)
        for x in (-1.0, 0.0, 0.3, 0.5, 1.2, 2.0):
            expected, _ = quad(smoothed.eval_density, -20.0, x, epsabs=1e-14, limit=200)
            assert smoothed.eval_cdf(x) == pytest.approx(expected, abs=1e-10)

    def test_cdf_matches_quadrature_on_fit(self, fitted):
        low = fitted.quantile(1e-14) - 1.0
        for x in np.linspace(fitted.quantile(0.01), fitted.quantile(0.99), 9):
            expected, _ = quad(fitted.eval_density, low, x, epsabs=1e-14, limit=200)
            assert fitted.eval_cdf(x) == pytest.approx(expected, abs=1e-9)

    def test_half_at_center_of_symmetric(self, symmetric):
        assert symmetric.eval_cdf(0.0) == pytest.approx(0.5, abs=1e-12)
        assert abs(symmetric.quantile(0.5)) < 1e-9

    def test_limits(self, fitted):
        sd = np.sqrt(fitted.variance)

        assert fitted.eval_cdf(fitted.mean - 40 * sd) < 1e-12
        assert fitted.eval_cdf(fitted.mean + 40 * sd) > 1 - 1e-12
        assert fitted.eval_survival(fitted.mean + 40 * sd) < 1e-12

    def test_strictly_increasing(self, fitted):
        x = np.linspace(fitted.quantile(1e-6), fitted.quantile(1 - 1e-6), 500)

        assert np.all(np.diff(fitted.eval_cdf(x)) > 0)

    @pytest.mark.parametrize("q", [0.001, 0.01, 0.5, 0.99, 0.999])
    def test_quantile_round_trip(self, fitted, q):
        assert fitted.eval_cdf(fitted.quantile(q)) == pytest.approx(q, abs=1e-9)

    def test_extreme_quantiles_ordered(self, fitted):
        assert fitted.quantile(1e-300) < fitted.quantile(1e-9) < fitted.quantile(0.025)
        assert fitted.quantile(0.975) > fitted.quantile(0.025)
        assert fitted.upper_quantile(1e-300) > fitted.upper_quantile(1e-9) > fitted.quantile(0.975)

    def test_upper_quantile_mirrors_lower_on_symmetric(self, symmetric):
        for tail in (1e-300, 1e-12, 0.01, 0.3):
            assert symmetric.upper_quantile(tail) == pytest.approx(-symmetric.quantile(tail), rel=1e-9)

    def test_upper_quantile_round_trip(self, fitted):
        for tail in (1e-12, 1e-6, 0.02):
            assert fitted.eval_survival(fitted.upper_quantile(tail)) == pytest.approx(tail, rel=1e-6)

    def test_quantile_out_of_range(self, fitted):
        for q in (0.0, 1.0, 1.5):
            with pytest.raises(QuantileOutOfRange):
                fitted.quantile(q)

    def test_flat_and_steep_segments_agree(self):
        """
        Nearly flat segment next to a steep one: tail masses from both branches sum to one.
        """
        knots = np.array([0.0, 1.0, 2.0])
        shape = np.array([0.0, 1e-7, 1e-7 - 3.0])
        mass = PiecewiseLogLinearDensity.segment_masses_of(knots, shape).sum()
        base = PiecewiseLogLinearDensity(knots, shape - np.log(mass))
        smoothed = SmoothedDensity(base, 0.2)
        x = np.linspace(-1.0, 4.0, 41)
        lower, upper = smoothed._tail_masses(x)

        np.testing.assert_allclose(lower + upper, 1.0, atol=1e-12)
