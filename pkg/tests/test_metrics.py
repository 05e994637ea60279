"""
Metrics Test Suite
==================

Tests for the density distances and the Monte Carlo cell summaries.

Usage:
    pytest tests/test_metrics.py -v
"""

import math
import os
import sys

import numpy as np
import pytest
from scipy import stats

# Add parent directory to path to import modules
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from src.estimators.shift_estimator import ShiftEstimate
from src.tools.metrics import hellinger, summarize, total_variation, wasserstein

# ============================================
# DISTANCE TESTS
# ============================================

def _normal_pairs(count=20, seed=7):
    rng = np.random.default_rng(seed)
    for _ in range(count):
        mu = rng.uniform(-2.0, 2.0, size=2)
        sigma = rng.uniform(0.5, 2.0, size=2)
        domain = (float(mu.min() - 12 * sigma.max()), float(mu.max() + 12 * sigma.max()))
        yield stats.norm(mu[0], sigma[0]).pdf, stats.norm(mu[1], sigma[1]).pdf, domain


def _normal_triples(count=10, seed=13):
    rng = np.random.default_rng(seed)
    for _ in range(count):
        mu = rng.uniform(-2.0, 2.0, size=3)
        sigma = rng.uniform(0.5, 2.0, size=3)
        domain = (float(mu.min() - 12 * sigma.max()), float(mu.max() + 12 * sigma.max()))
        yield tuple(stats.norm(a, b) for a, b in zip(mu, sigma)), domain


class TestHellinger:
    """Test suite for the Hellinger distance"""

    def test_identical_densities(self):
        pdf = stats.logistic().pdf

        assert hellinger(pdf, pdf, (-40.0, 40.0)) == pytest.approx(0.0, abs=1e-8)

    def test_gaussian_closed_form(self):
        """
        N(0, 1) against N(1, 1).

        Expected: sqrt(1 - exp(-1/8))
        """
        value = hellinger(stats.norm(0, 1).pdf, stats.norm(1, 1).pdf, (-12.0, 13.0))

        assert value == pytest.approx(math.sqrt(1 - math.exp(-1 / 8)), abs=1e-6)
        print("✅ Test passed: Gaussian Hellinger")

    def test_disjoint_supports(self):
        f = stats.uniform(0, 1).pdf
        g = stats.uniform(2, 1).pdf

        assert hellinger(f, g, (-1.0, 4.0), points=[0.0, 1.0, 2.0, 3.0]) == pytest.approx(1.0, abs=1e-8)

    def test_symmetric(self):
        for f, g, domain in _normal_pairs(5):
            assert hellinger(f, g, domain) == pytest.approx(hellinger(g, f, domain), abs=1e-10)

    def test_empty_domain(self):
        with pytest.raises(ValueError):
            hellinger(stats.norm().pdf, stats.norm().pdf, (1.0, 1.0))

    def test_triangle_inequality(self):
        """
        H(f, k) <= H(f, g) + H(g, k) over 10 random Gaussian triples.
        """
        for (f, g, k), domain in _normal_triples():
            direct = hellinger(f.pdf, k.pdf, domain)
            through = hellinger(f.pdf, g.pdf, domain) + hellinger(g.pdf, k.pdf, domain)

            assert direct <= through + 1e-7


class TestTotalVariation:
    """Test suite for total variation and its relation to Hellinger"""

    def test_hellinger_sandwich(self):
        """
        H^2 <= TV <= H sqrt(2 - H^2) over 20 random Gaussian pairs.
        """
        for f, g, domain in _normal_pairs():
            h = hellinger(f, g, domain)
            tv = total_variation(f, g, domain)

            assert h * h <= tv + 1e-7
            assert tv <= h * math.sqrt(2 - h * h) + 1e-7
        print("✅ Test passed: Hellinger sandwich")

    def test_triangle_inequality(self):
        f, g, k = stats.norm(0, 1).pdf, stats.norm(0.7, 1.3).pdf, stats.laplace(-0.4, 1).pdf
        domain = (-40.0, 40.0)
        points = [-0.4]

        direct = total_variation(f, k, domain, points)
        through = total_variation(f, g, domain, points) + total_variation(g, k, domain, points)

        assert direct <= through + 1e-8

    def test_symmetric(self):
        for f, g, domain in _normal_pairs(5):
            assert total_variation(f, g, domain) == pytest.approx(total_variation(g, f, domain), abs=1e-10)

    def test_disjoint_supports(self):
        f = stats.uniform(0, 1).pdf
        g = stats.uniform(2, 1).pdf

        assert total_variation(f, g, (-1.0, 4.0), points=[0.0, 1.0, 2.0, 3.0]) == pytest.approx(1.0, abs=1e-8)


class TestWasserstein:
    """Test suite for the L1 Wasserstein distance"""

    @pytest.mark.parametrize("shift", [-1.5, 0.3, 2.0])
    def test_pure_shift(self, shift):
        value = wasserstein(stats.norm(0, 1).cdf, stats.norm(shift, 1).cdf, (-15.0, 15.0 + abs(shift)))

        assert value == pytest.approx(abs(shift), abs=1e-6)

    def test_empirical_against_point_mass(self):
        def empirical(x):
            return 0.5 * (x >= 0.0) + 0.5 * (x >= 1.0)

        def point_mass(x):
            return 1.0 * (x >= 0.5)

        value = wasserstein(empirical, point_mass, (-1.0, 2.0), points=[0.0, 0.5, 1.0])

        assert value == pytest.approx(0.5, abs=1e-10)

    def test_symmetric(self):
        for (f, g, _), domain in _normal_triples(5):
            assert wasserstein(f.cdf, g.cdf, domain) == pytest.approx(wasserstein(g.cdf, f.cdf, domain), abs=1e-10)


# ============================================
# SUMMARY TESTS
# ============================================

class TestSummarize:
    """Test suite for Monte Carlo cell summaries"""

    def test_worked_example(self):
        summary = summarize([(0.9, 0.8, 1.0), (1.1, 1.0, 1.2)], 1.0, 100, 100, 0.02)

        assert summary.variance == pytest.approx(0.02, abs=1e-15)
        assert summary.scaled_mse == pytest.approx(0.5, abs=1e-12)
        assert summary.coverage == 1.0
        assert summary.mean_ci_width == pytest.approx(0.2, abs=1e-12)
        assert summary.efficiency == pytest.approx(1.0, abs=1e-12)
        assert summary.replications == 2 and summary.failures == 0

    def test_mse_decomposition(self):
        """
        scaled_mse = mn/N * ((R - 1)/R * variance + bias^2)
        """
        rng = np.random.default_rng(1)
        delta = 1.0 + 0.05 + 0.2 * rng.normal(size=300)
        triples = [(d, d - 0.3, d + 0.3) for d in delta]
        summary = summarize(triples, 1.0, 40, 60, 0.01)
        bias = delta.mean() - 1.0
        expected = 24.0 * ((299 / 300) * summary.variance + bias**2)

        assert summary.scaled_mse == pytest.approx(expected, rel=1e-10)

    def test_accepts_shift_estimates(self):
        estimates = [
            ShiftEstimate(delta_hat=d, fisher_info_hat=1.0, eta=0.0, xi1_hat=None, xi2_hat=None,
                          ci_low=d - 0.5, ci_high=d + 0.5, ci_level=0.95, m=10, n=10)
            for d in (0.2, 1.0, 1.4)
        ]
        summary = summarize(estimates, 1.0, 10, 10, 0.1, scheme="gaussian", estimator="x", eta=0.01)

        assert summary.coverage == pytest.approx(2 / 3)
        assert summary.as_dict()["eta"] == 0.01
        assert summary.as_dict()["scheme"] == "gaussian"

    def test_zero_variance_gives_infinite_efficiency(self):
        summary = summarize([(1.0, 0.9, 1.1)] * 3, 1.0, 10, 10, 0.05)

        assert summary.variance == 0.0
        assert summary.efficiency == math.inf

    def test_single_success_is_nan(self, caplog):
        summary = summarize([(1.0, 0.9, 1.1)], 1.0, 10, 10, 0.05, failures=4)

        assert math.isnan(summary.variance)
        assert math.isnan(summary.efficiency)
        assert summary.replications == 5
        assert "only 1 successful" in caplog.text

    def test_all_failed(self):
        summary = summarize([], 1.0, 10, 10, 0.05, failures=3)

        assert summary.replications == 3
        assert math.isnan(summary.coverage)
        assert math.isnan(summary.scaled_mse)
