"""
Gaussian Smoothing of the Log-Concave MLE
=========================================

A SmoothedDensity is the convolution of a PiecewiseLogLinearDensity with a
centered Gaussian kernel of bandwidth lambda. Every base segment
[l, r] with log-density phi_l + b (t - l) contributes the closed form

    exp(phi_l + b (x - l) + b^2 lambda^2 / 2)
        * [Phi((r - x)/lambda - b lambda) - Phi((l - x)/lambda - b lambda)]

to the density at x, which is evaluated in log space so that far tails and
steep segments neither overflow nor underflow. The score, CDF and quantile
follow from the same per-segment terms.

Classes:
    - SmoothedDensity: Smoothed log-concave density supported on the real line

Usage:
    from src.DensityModel.smoothing import smooth_lcmle

    smoothed = smooth_lcmle(observations)
    smoothed.eval_log_derivative(0.0)
"""

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import brentq
from scipy.special import log_ndtr, logsumexp, ndtr

from src.DensityModel.errors import NonPositiveBandwidth, QuantileOutOfRange
from src.DensityModel.lcmle import PiecewiseLogLinearDensity, aggregate, fit_lcmle

logger = logging.getLogger(__name__)

BANDWIDTH_EPSILON = 1e-12
QUANTILE_TOLERANCE = 1e-10
MAX_QUANTILE_ITERATIONS = 200

# Segments with |slope * width| below this use a first-order expansion in the slope
_FLAT_SEGMENT = 1e-5
_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)


def bandwidth(base_variance: float, pooled_sample_variance: float) -> float:
    """
    Closed-form bandwidth lambda = sqrt(s^2 - sigma^2).

    Args:
        base_variance: Variance sigma^2 of the log-concave MLE
        pooled_sample_variance: Sample variance s^2 of the observations

    Returns:
        Positive bandwidth

    Raises:
        NonPositiveBandwidth: if s^2 - sigma^2 <= 1e-12

    Example:
        >>> bandwidth(1.5, 2.0)
        0.7071067811865476
    """
    excess = pooled_sample_variance - base_variance
    if not excess > BANDWIDTH_EPSILON:
        raise NonPositiveBandwidth(
            f"s^2 - sigma^2 = {excess!r} is not positive (s^2={pooled_sample_variance!r}, "
            f"sigma^2={base_variance!r})"
        )
    return float(np.sqrt(excess))


def _log_ndtr_diff(lower, upper):
    """log(Phi(upper) - Phi(lower)) for upper > lower, accurate in both tails."""
    right_tail = lower > 0
    a = np.where(right_tail, -upper, lower)
    b = np.where(right_tail, -lower, upper)
    log_a, log_b = log_ndtr(a), log_ndtr(b)
    with np.errstate(divide="ignore"):
        return log_b + np.log(-np.expm1(log_a - log_b))


def _normal_pdf(v):
    return np.exp(-0.5 * v * v - _LOG_SQRT_2PI)


def _phi_antiderivative(v):
    """R0 with R0' = Phi."""
    return v * ndtr(v) + _normal_pdf(v)


def _phi_first_moment_antiderivative(v):
    """R1 with R1' = v Phi(v)."""
    return 0.5 * ((v * v - 1.0) * ndtr(v) + v * _normal_pdf(v))


@dataclass(frozen=True)
class SmoothedDensity:
    """
    Gaussian-kernel convolution of a piecewise log-linear density.

    The result is log-concave, strictly positive on the real line and keeps
    the mean of the base density while adding bandwidth^2 to its variance.

    Attributes:
        base: The log-concave MLE being smoothed
        bandwidth: Kernel standard deviation lambda > 0
    """

    base: PiecewiseLogLinearDensity
    bandwidth: float

    def __post_init__(self):
        if not (np.isfinite(self.bandwidth) and self.bandwidth > 0):
            raise NonPositiveBandwidth(f"bandwidth must be positive, got {self.bandwidth!r}")

    # ============================================
    # SEGMENT GEOMETRY
    # ============================================

    @cached_property
    def _segments(self):
        knots, phi = self.base.knots, self.base.log_values
        return knots[:-1], knots[1:], phi[:-1], phi[1:], self.base.slopes

    @property
    def mean(self) -> float:
        return self.base.segment_moments()[0]

    @property
    def variance(self) -> float:
        return self.base.segment_moments()[1] + self.bandwidth**2

    @property
    def breakpoints(self) -> Tuple[float, ...]:
        return ()

    def _log_terms(self, x: np.ndarray) -> np.ndarray:
        """Per-segment log contributions to the density, shape x.shape + (segments,)."""
        left, right, phi_left, _, slope = self._segments
        lam = self.bandwidth
        x = x[..., None]
        shift = slope * lam
        upper = (right - x) / lam - shift
        lower = (left - x) / lam - shift
        return phi_left + slope * (x - left) + 0.5 * shift * shift + _log_ndtr_diff(lower, upper)

    def _log_kernel_at(self, x: np.ndarray, knot: float, log_value: float) -> np.ndarray:
        lam = self.bandwidth
        return log_value - 0.5 * ((x - knot) / lam) ** 2 - np.log(lam) - _LOG_SQRT_2PI

    # ============================================
    # EVALUATION
    # ============================================

    def eval_log_density(self, x):
        x = np.asarray(x, dtype=float)
        values = logsumexp(self._log_terms(x), axis=-1)
        return float(values) if values.ndim == 0 else values

    def eval_density(self, x):
        """
        Smoothed density from closed-form segment sums.

        Args:
            x: Scalar or array of evaluation points

        Returns:
            float or array of strictly positive density values
        """
        values = np.exp(np.asarray(self.eval_log_density(x)))
        return float(values) if values.ndim == 0 else values

    def eval_log_derivative(self, x):
        """
        Score (log g)' = g'/g of the smoothed density.

        Differentiating each segment term gives slope * term plus Gaussian
        boundary terms at the segment ends; the interior ones cancel, leaving
        the kernel at the two outer knots. Evaluated as a weighted average of
        segment slopes so it stays finite far in the tails.
        """
        x = np.asarray(x, dtype=float)
        log_terms = self._log_terms(x)
        log_density = logsumexp(log_terms, axis=-1)
        weights = np.exp(log_terms - log_density[..., None])
        slope = self._segments[4]
        knots, phi = self.base.knots, self.base.log_values
        first = np.exp(self._log_kernel_at(x, knots[0], phi[0]) - log_density)
        last = np.exp(self._log_kernel_at(x, knots[-1], phi[-1]) - log_density)
        values = weights @ slope + first - last
        return float(values) if values.ndim == 0 else values

    def _tail_masses(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """
        Lower and upper tail masses P(X <= x), P(X > x), each computed directly.

        Segment integrals of exp(phi(t)) Phi((x - t)/lambda) come from
        integration by parts; nearly flat segments use an expansion in the
        slope about the segment midpoint.
        """
        left, right, phi_left, phi_right, slope = self._segments
        lam = self.bandwidth
        x = x[..., None]
        z_left = (x - left) / lam
        z_right = (x - right) / lam
        term = np.exp(self._log_terms(x[..., 0]))

        flat = np.abs(slope * (right - left)) < _FLAT_SEGMENT
        safe_slope = np.where(flat, 1.0, slope)
        lower_steep = (
            np.exp(phi_right + log_ndtr(z_right)) - np.exp(phi_left + log_ndtr(z_left)) + term
        ) / safe_slope
        upper_steep = (
            np.exp(phi_right + log_ndtr(-z_right)) - np.exp(phi_left + log_ndtr(-z_left)) - term
        ) / safe_slope

        middle = 0.5 * (left + right)
        scale = np.exp(0.5 * (phi_left + phi_right))
        lower_zero = lam * (_phi_antiderivative(z_left) - _phi_antiderivative(z_right))
        lower_first = (x - middle) * lower_zero - lam**2 * (
            _phi_first_moment_antiderivative(z_left) - _phi_first_moment_antiderivative(z_right)
        )
        upper_zero = lam * (_phi_antiderivative(-z_right) - _phi_antiderivative(-z_left))
        upper_first = (x - middle) * upper_zero - lam**2 * (
            _phi_first_moment_antiderivative(-z_left) - _phi_first_moment_antiderivative(-z_right)
        )
        lower_flat = scale * (lower_zero + slope * lower_first)
        upper_flat = scale * (upper_zero + slope * upper_first)

        lower = np.where(flat, lower_flat, lower_steep).sum(axis=-1)
        upper = np.where(flat, upper_flat, upper_steep).sum(axis=-1)
        return np.clip(lower, 0.0, 1.0), np.clip(upper, 0.0, 1.0)

    def eval_cdf(self, x):
        """
        Smoothed distribution function G(x).

        The smaller of the two tail masses is the accurate one; the other is
        taken as its complement.
        """
        x = np.asarray(x, dtype=float)
        lower, upper = self._tail_masses(x)
        values = np.where(lower <= 0.5, lower, 1.0 - upper)
        return float(values) if values.ndim == 0 else values

    def eval_survival(self, x):
        x = np.asarray(x, dtype=float)
        lower, upper = self._tail_masses(x)
        values = np.where(lower <= 0.5, 1.0 - lower, upper)
        return float(values) if values.ndim == 0 else values

    def quantile(self, q: float) -> float:
        """
        Solve G(x) = q by bracket expansion from the base support and Brent's method.

        Args:
            q: Level in (0, 1)

        Returns:
            x with |G(x) - q| <= 1e-10

        Raises:
            QuantileOutOfRange: if q is not in (0, 1)
        """
        if not 0.0 < q < 1.0:
            raise QuantileOutOfRange(f"quantile level must lie in (0, 1), got {q!r}")
        if q > 0.5:
            return self.upper_quantile(1.0 - q)
        return self._invert(lambda x: self.eval_cdf(x) - q)

    def upper_quantile(self, tail: float) -> float:
        """G^-1(1 - tail), solved on the survival function so tiny tails keep their precision."""
        if not 0.0 < tail < 1.0:
            raise QuantileOutOfRange(f"tail mass must lie in (0, 1), got {tail!r}")
        if tail > 0.5:
            return self.quantile(1.0 - tail)
        return self._invert(lambda x: tail - self.eval_survival(x))

    def _invert(self, excess) -> float:
        """Root of an increasing function that is negative far left and positive far right."""
        low, high = self.base.support
        step = self.bandwidth + (high - low)
        while excess(low) > 0:
            low -= step
            step *= 2.0
        step = self.bandwidth + (high - low)
        while excess(high) < 0:
            high += step
            step *= 2.0

        scale = max(1.0, abs(low), abs(high))
        root = brentq(
            excess, low, high, xtol=1e-15 * scale, rtol=4 * np.finfo(float).eps,
            maxiter=MAX_QUANTILE_ITERATIONS,
        )
        return float(root)


# ============================================
# CONSTRUCTION
# ============================================

def smooth_lcmle(
    observations: Sequence[float],
    bandwidth_floor: Optional[float] = None,
    sample_variance: Optional[float] = None,
) -> SmoothedDensity:
    """
    Fit the log-concave MLE of a sample and smooth it with the closed-form bandwidth.

    The bandwidth is lambda^2 = s^2 - sigma^2, where s^2 is the unbiased sample
    variance and sigma^2 the variance of the MLE, so the smoothed density has
    variance exactly s^2.

    Args:
        observations: Raw observations (at least two distinct values)
        bandwidth_floor: If given, used as lambda when the closed form is not
            positive after round-off instead of raising
        sample_variance: Overrides the unbiased sample variance s^2 (the pooled
            estimator passes its own centered s^2)

    Returns:
        SmoothedDensity

    Raises:
        FewerThanTwoDistinctPoints, NonConvergence: from the MLE
        NonPositiveBandwidth: if the closed form fails and no floor is given
    """
    values = np.asarray(observations, dtype=float)
    base = fit_lcmle(aggregate(values))
    _, base_variance, _ = base.segment_moments()
    if sample_variance is None:
        sample_variance = float(np.var(values, ddof=1))
    try:
        lam = bandwidth(base_variance, sample_variance)
    except NonPositiveBandwidth:
        if bandwidth_floor is None:
            raise
        logger.warning(
            "closed-form bandwidth not positive (s^2=%.17g, sigma^2=%.17g); using floor %g",
            sample_variance, base_variance, bandwidth_floor,
        )
        lam = bandwidth_floor
    return SmoothedDensity(base=base, bandwidth=lam)
