"""
Log-Concave Maximum Likelihood
==============================

Fits the maximum-likelihood log-concave density of a weighted univariate
sample and evaluates the fitted piecewise exp-linear density exactly.

The MLE maximizes

    L(phi) = sum_i w_i phi(x_i) - integral exp(phi)

over concave phi. The maximizer is piecewise affine with kinks at a subset of
the data points, so it is found by an active-set method over candidate kink
sets: for a fixed kink set the problem is smooth and strictly concave and is
solved by damped Newton steps; kinks are added where the cumulative
distribution residual is positive and dropped when a step would break
concavity.

Classes:
    - WeightedSample: Distinct sorted points with probability weights
    - PiecewiseLogLinearDensity: The fitted density

Usage:
    from src.DensityModel.lcmle import aggregate, fit_lcmle

    density = fit_lcmle(aggregate([0.3, -1.2, 0.8, 2.0]))
    density.eval_log_density(0.0)
"""

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import solveh_banded
from scipy.special import factorial

from src.DensityModel.errors import (
    FewerThanTwoDistinctPoints,
    InvalidSample,
    NonConvergence,
    QuantileOutOfRange,
)

logger = logging.getLogger(__name__)

KKT_TOLERANCE = 1e-10
MAX_ACTIVE_SET_ITERATIONS = 200
MAX_NEWTON_ITERATIONS = 100
NORMALIZATION_TOLERANCE = 1e-8

# |d| below this uses the power series of the exp-linear moments
_SERIES_CUTOFF = 1.0
_SERIES_ORDER = np.arange(24)
_SERIES_FACTORIAL = factorial(_SERIES_ORDER)


# ============================================
# EXP-LINEAR SEGMENT INTEGRALS
# ============================================

def exp_moments(d) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Moments M_k(d) = integral_0^1 v^k exp(d v) dv for k = 0, 1, 2.

    A segment [l, l + h] with log-density phi_l + (d / h)(t - l) has mass
    h * exp(phi_l) * M_0(d); the higher moments give first and second
    moments of the segment. Small |d| uses the power series to avoid the
    cancellation in the closed forms.

    Args:
        d: Log-density increments across segments (array-like)

    Returns:
        Tuple (M_0, M_1, M_2) of arrays shaped like d
    """
    d = np.asarray(d, dtype=float)
    small = np.abs(d) < _SERIES_CUTOFF
    ds = np.where(small, d, 0.0)
    dl = np.where(small, 1.0, d)

    powers = ds[..., None] ** _SERIES_ORDER / _SERIES_FACTORIAL
    s0 = (powers / (_SERIES_ORDER + 1)).sum(axis=-1)
    s1 = (powers / (_SERIES_ORDER + 2)).sum(axis=-1)
    s2 = (powers / (_SERIES_ORDER + 3)).sum(axis=-1)

    e = np.exp(dl)
    c0 = np.expm1(dl) / dl
    c1 = (e * (dl - 1.0) + 1.0) / dl**2
    c2 = (e * (dl * dl - 2.0 * dl + 2.0) - 2.0) / dl**3

    return np.where(small, s0, c0), np.where(small, s1, c1), np.where(small, s2, c2)


def exp_linear_integral(a, b, h):
    """
    Stable J(a, b; h) = integral_0^h exp(a + b t) dt = h e^a (e^{bh} - 1)/(bh).
    """
    a, b, h = (np.asarray(v, dtype=float) for v in (a, b, h))
    return h * np.exp(a) * exp_moments(b * h)[0]


# ============================================
# DOMAIN TYPES
# ============================================

@dataclass(frozen=True)
class WeightedSample:
    """
    Distinct observations with the probability mass carried by each.

    Attributes:
        points: Strictly increasing distinct values
        weights: Positive masses summing to one
        raw_n: Number of observations before ties were merged
    """

    points: np.ndarray
    weights: np.ndarray
    raw_n: int

    def __post_init__(self):
        points = np.asarray(self.points, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        if points.ndim != 1 or points.shape != weights.shape:
            raise InvalidSample("points and weights must be 1-d arrays of equal length")
        if len(points) < 2:
            raise FewerThanTwoDistinctPoints("A weighted sample needs at least 2 points")
        if not np.all(np.isfinite(points)) or np.any(np.diff(points) <= 0):
            raise InvalidSample("points must be finite and strictly increasing")
        if np.any(weights <= 0) or abs(weights.sum() - 1.0) > 1e-12:
            raise InvalidSample("weights must be positive and sum to 1")
        points.flags.writeable = False
        weights.flags.writeable = False
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "weights", weights)

    @property
    def mean(self) -> float:
        return float(self.weights @ self.points)


@dataclass(frozen=True)
class PiecewiseLogLinearDensity:
    """
    A log-concave density whose log is linear between knots and -inf outside.

    Attributes:
        knots: Strictly increasing knot locations t_1 < ... < t_k
        log_values: Log-density values phi(t_j) at the knots

    Example:
        >>> uniform = PiecewiseLogLinearDensity(np.array([0.0, 1.0]), np.zeros(2))
        >>> uniform.eval_log_density(2.0)
        -inf
    """

    knots: np.ndarray
    log_values: np.ndarray

    def __post_init__(self):
        knots = np.array(self.knots, dtype=float)
        log_values = np.array(self.log_values, dtype=float)
        if knots.ndim != 1 or knots.shape != log_values.shape or len(knots) < 2:
            raise InvalidSample("knots and log_values must be equal-length 1-d arrays (>= 2)")
        if np.any(np.diff(knots) <= 0):
            raise InvalidSample("knots must be strictly increasing")
        slopes = np.diff(log_values) / np.diff(knots)
        if np.any(np.diff(slopes) > 1e-9 * (1.0 + np.abs(slopes[1:]))):
            raise InvalidSample("log_values are not concave")
        mass = float(self.segment_masses_of(knots, log_values).sum())
        if abs(mass - 1.0) > NORMALIZATION_TOLERANCE:
            raise InvalidSample(f"density integrates to {mass!r}, not 1")
        knots.flags.writeable = False
        log_values.flags.writeable = False
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "log_values", log_values)

    @staticmethod
    def segment_masses_of(knots: np.ndarray, log_values: np.ndarray) -> np.ndarray:
        gaps = np.diff(knots)
        return gaps * np.exp(log_values[:-1]) * exp_moments(np.diff(log_values))[0]

    @property
    def support(self) -> Tuple[float, float]:
        return float(self.knots[0]), float(self.knots[-1])

    @property
    def slopes(self) -> np.ndarray:
        return np.diff(self.log_values) / np.diff(self.knots)

    @property
    def breakpoints(self) -> np.ndarray:
        """Points where the density or its score is not smooth."""
        return self.knots

    # ============================================
    # EVALUATION
    # ============================================

    def eval_log_density(self, x):
        """
        Evaluate phi: linear interpolation inside the support, -inf outside.

        Args:
            x: Scalar or array of evaluation points

        Returns:
            float or array of log-density values
        """
        x = np.asarray(x, dtype=float)
        inside = (x >= self.knots[0]) & (x <= self.knots[-1])
        values = np.where(inside, np.interp(x, self.knots, self.log_values), -np.inf)
        return float(values) if values.ndim == 0 else values

    def eval_density(self, x):
        values = np.exp(np.asarray(self.eval_log_density(x)))
        return float(values) if values.ndim == 0 else values

    def eval_log_derivative(self, x):
        """Slope of the segment containing x (right-continuous); NaN outside the support."""
        x = np.asarray(x, dtype=float)
        index = np.clip(np.searchsorted(self.knots, x, side="right") - 1, 0, len(self.knots) - 2)
        inside = (x >= self.knots[0]) & (x <= self.knots[-1])
        values = np.where(inside, self.slopes[index], np.nan)
        return float(values) if values.ndim == 0 else values

    def cdf_at_knots(self) -> np.ndarray:
        masses = self.segment_masses_of(self.knots, self.log_values)
        cdf = np.concatenate(([0.0], np.cumsum(masses)))
        return cdf / cdf[-1]

    def eval_cdf(self, x):
        x = np.asarray(x, dtype=float)
        cdf = self.cdf_at_knots()
        clipped = np.clip(x, self.knots[0], self.knots[-1])
        index = np.clip(np.searchsorted(self.knots, clipped, side="right") - 1, 0, len(self.knots) - 2)
        offset = clipped - self.knots[index]
        partial = exp_linear_integral(self.log_values[index], self.slopes[index], offset)
        values = np.minimum(cdf[index] + partial, 1.0)
        return float(values) if values.ndim == 0 else values

    def quantile(self, q: float) -> float:
        """
        Invert the CDF exactly inside the segment holding level q.

        Raises:
            QuantileOutOfRange: if q is not in (0, 1)
        """
        if not 0.0 < q < 1.0:
            raise QuantileOutOfRange(f"quantile level must lie in (0, 1), got {q!r}")
        cdf = self.cdf_at_knots()
        index = int(np.clip(np.searchsorted(cdf, q, side="right") - 1, 0, len(self.knots) - 2))
        remaining = (q - cdf[index]) * np.exp(-self.log_values[index])
        slope = self.slopes[index]
        if slope == 0.0:
            offset = remaining
        else:
            offset = np.log1p(max(slope * remaining, -1.0 + 1e-16)) / slope
        gap = self.knots[index + 1] - self.knots[index]
        return float(self.knots[index] + np.clip(offset, 0.0, gap))

    def upper_quantile(self, tail: float) -> float:
        """Quantile at level 1 - tail; tails below double resolution map to the right endpoint."""
        if not 0.0 < tail < 1.0:
            raise QuantileOutOfRange(f"tail mass must lie in (0, 1), got {tail!r}")
        level = 1.0 - tail
        return self.quantile(level) if level < 1.0 else float(self.knots[-1])

    def segment_moments(self) -> Tuple[float, float, np.ndarray]:
        """
        Mean, variance and knot CDF values from closed-form segment integrals.

        Returns:
            Tuple (mean, variance, cdf_at_knots)
        """
        left = self.knots[:-1]
        gaps = np.diff(self.knots)
        scale = np.exp(self.log_values[:-1])
        m0, m1, m2 = exp_moments(np.diff(self.log_values))
        mass = gaps * scale * m0
        first = gaps**2 * scale * m1
        mean = float(np.sum(left * mass + first))
        offset = left - mean
        second = gaps**3 * scale * m2
        variance = float(np.sum(offset**2 * mass + 2.0 * offset * first + second))
        return mean, variance, self.cdf_at_knots()

    def log_likelihood(self, sample: WeightedSample) -> float:
        """Weighted log-likelihood sum_i w_i phi(x_i)."""
        return float(sample.weights @ np.asarray(self.eval_log_density(sample.points)))


# ============================================
# SAMPLE PREPARATION
# ============================================

def aggregate(observations: Sequence[float]) -> WeightedSample:
    """
    Merge exact duplicates into weights proportional to their counts.

    Args:
        observations: Raw observations

    Returns:
        WeightedSample with points sorted ascending

    Raises:
        FewerThanTwoDistinctPoints: if fewer than 2 distinct values are given

    Example:
        >>> aggregate([1.0, 0.0, 1.0]).weights
        array([0.33333333, 0.66666667])
    """
    values = np.asarray(observations, dtype=float).ravel()
    if not np.all(np.isfinite(values)):
        raise InvalidSample("observations must be finite")
    points, counts = np.unique(values, return_counts=True)
    if len(points) < 2:
        raise FewerThanTwoDistinctPoints(
            f"need at least 2 distinct observations, got {len(points)} from {len(values)}"
        )
    return WeightedSample(points=points, weights=counts / counts.sum(), raw_n=len(values))


# ============================================
# ACTIVE-SET SOLVER
# ============================================

def _design(points: np.ndarray, weights: np.ndarray, knots: np.ndarray) -> np.ndarray:
    """Linear coefficients c = B^T w of the likelihood term in the knot values."""
    position = np.clip(np.searchsorted(knots, points, side="right") - 1, 0, len(knots) - 2)
    fraction = (points - knots[position]) / (knots[position + 1] - knots[position])
    coefficients = np.zeros(len(knots))
    np.add.at(coefficients, position, weights * (1.0 - fraction))
    np.add.at(coefficients, position + 1, weights * fraction)
    return coefficients


def _objective(theta: np.ndarray, gaps: np.ndarray, coefficients: np.ndarray) -> float:
    integral = gaps * np.exp(theta[:-1]) * exp_moments(np.diff(theta))[0]
    return float(coefficients @ theta - integral.sum())


def _newton_terms(theta, gaps, coefficients):
    """Objective, gradient and the banded Hessian of the integral term."""
    d = np.diff(theta)
    left = gaps * np.exp(theta[:-1])
    right = gaps * np.exp(theta[1:])
    m0, m1, m2 = exp_moments(d)
    r0, r1, r2 = exp_moments(-d)

    objective = float(coefficients @ theta - np.sum(left * m0))

    gradient = coefficients.copy()
    gradient[:-1] -= right * r1
    gradient[1:] -= left * m1

    cross = np.where(d > 0, right * (r1 - r2), left * (m1 - m2))
    diagonal = np.zeros_like(theta)
    diagonal[:-1] += right * r2
    diagonal[1:] += left * m2

    banded = np.zeros((2, len(theta)))
    banded[0, 1:] = cross
    banded[1, :] = diagonal
    return objective, gradient, banded


def _solve_fixed_knots(theta, gaps, coefficients) -> np.ndarray:
    """Maximize the smooth objective for a fixed kink set by damped Newton."""
    theta = theta.copy()
    for _ in range(MAX_NEWTON_ITERATIONS):
        objective, gradient, banded = _newton_terms(theta, gaps, coefficients)
        step = solveh_banded(banded, gradient)
        decrement = float(gradient @ step)
        if decrement < 1e-22:
            break
        t = 1.0
        while t > 1e-12:
            candidate = theta + t * step
            if _objective(candidate, gaps, coefficients) >= objective:
                break
            t *= 0.5
        else:
            break
        theta = candidate
    return theta


def _slope_changes(theta: np.ndarray, knots: np.ndarray) -> np.ndarray:
    """Concavity margins at interior knots: slope_left - slope_right (>= 0 when concave)."""
    slopes = np.diff(theta) / np.diff(knots)
    return slopes[:-1] - slopes[1:]


def kkt_residuals(points: np.ndarray, weights: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """
    Directional derivatives H(x_j) = int^{x_j} F_hat - int^{x_j} F_n.

    At the MLE, H <= 0 at every data point with equality at kinks of phi.

    Args:
        points: Sorted distinct data points
        weights: Their masses
        phi: Log-density values at the points

    Returns:
        Array of residuals, one per point (the first is always zero)
    """
    gaps = np.diff(points)
    d = np.diff(phi)
    mass = gaps * np.exp(phi[:-1]) * exp_moments(d)[0]
    fitted_cdf = np.concatenate(([0.0], np.cumsum(mass)[:-1]))
    empirical_cdf = np.cumsum(weights)[:-1]
    inner = gaps**2 * np.exp(phi[1:]) * exp_moments(-d)[1]
    increments = (fitted_cdf - empirical_cdf) * gaps + inner
    return np.concatenate(([0.0], np.cumsum(increments)))


def fit_lcmle(
    sample: WeightedSample,
    tol: float = KKT_TOLERANCE,
    max_iterations: int = MAX_ACTIVE_SET_ITERATIONS,
    callback: Optional[Callable[[int, float], None]] = None,
) -> PiecewiseLogLinearDensity:
    """
    Compute the log-concave MLE of a weighted sample.

    Args:
        sample: Distinct points and their weights
        tol: KKT residual tolerance, in units of the sample span
        max_iterations: Active-set iteration budget
        callback: Optional observer called as callback(iteration, objective)
            after every active-set iteration

    Returns:
        PiecewiseLogLinearDensity with knots at the kinks of the MLE

    Raises:
        NonConvergence: if the KKT residuals do not meet tol in time
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    x, w = sample.points, sample.weights
    span = x[-1] - x[0]

    active = np.array([0, len(x) - 1])
    theta = np.full(2, -np.log(span))
    theta = _solve_fixed_knots(theta, np.diff(x[active]), _design(x, w, x[active]))

    for iteration in range(max_iterations):
        objective = _objective(theta, np.diff(x[active]), _design(x, w, x[active]))
        if callback is not None:
            callback(iteration, objective)

        phi = np.interp(x, x[active], theta)
        residuals = kkt_residuals(x, w, phi)
        residuals[active] = -np.inf
        candidate = int(np.argmax(residuals))
        logger.debug(
            "active-set iteration %d: %d knots, objective %.15g, max residual %.3e",
            iteration, len(active), objective, residuals[candidate],
        )
        if residuals[candidate] <= tol * span:
            return _finalize(x[active], theta)

        active = np.sort(np.append(active, candidate))
        start = phi[active]
        proposal = _solve_fixed_knots(start, np.diff(x[active]), _design(x, w, x[active]))

        # Step back along start -> proposal until concave, dropping binding kinks.
        while True:
            knots = x[active]
            new_margin = _slope_changes(proposal, knots)
            if np.all(new_margin >= 0.0):
                break
            old_margin = _slope_changes(start, knots)
            violated = new_margin < 0.0
            ratios = np.clip(old_margin[violated], 0.0, None) / (
                np.clip(old_margin[violated], 0.0, None) - new_margin[violated]
            )
            t = float(ratios.min())
            start = start + t * (proposal - start)
            margin = _slope_changes(start, knots)
            keep = np.ones(len(active), dtype=bool)
            binding = margin <= 1e-14 * (1.0 + np.abs(np.diff(start)[1:] / np.diff(knots)[1:]))
            binding[np.flatnonzero(violated)[np.argmin(ratios)]] = True
            keep[1:-1] = ~binding
            active = active[keep]
            start = start[keep]
            proposal = _solve_fixed_knots(start, np.diff(x[active]), _design(x, w, x[active]))

        theta = proposal

    raise NonConvergence(max_iterations)


def _finalize(knots: np.ndarray, theta: np.ndarray) -> PiecewiseLogLinearDensity:
    masses = PiecewiseLogLinearDensity.segment_masses_of(knots, theta)
    return PiecewiseLogLinearDensity(knots=knots, log_values=theta - np.log(masses.sum()))
