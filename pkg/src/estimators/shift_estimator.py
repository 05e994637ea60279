"""
Shape-Constrained Shift Estimator
=================================

One-step estimation of the location shift Delta in the two-sample model
X = Z1 + mu, Y = Z2 + mu + Delta, with Z1, Z2 drawn from an unknown
log-concave density g.

The preliminary estimates mu_bar = mean(X) and delta_bar = mean(Y) - mean(X)
center both samples; the pooled pseudo-observations are fitted by the
log-concave MLE and smoothed with the closed-form Gaussian bandwidth. The
score of the smoothed density then corrects delta_bar by one Newton step,
optionally restricted to the central 1 - 2 eta mass of the fitted density.

Classes:
    - TwoSample: The X and Y samples
    - PreliminaryEstimates: Centering estimates and pooled pseudo-observations
    - ShiftEstimate: Point estimate, Fisher information and confidence interval

Usage:
    from src.estimators.shift_estimator import TwoSample, one_step

    estimate = one_step(TwoSample(x, y), eta=0.001)
    print(estimate.delta_hat, estimate.ci_low, estimate.ci_high)
"""

import logging
from dataclasses import dataclass
from typing import Any, Dict, Optional, Protocol, Sequence, Tuple

import numpy as np
from scipy.integrate import quad
from scipy.stats import norm

from src.DensityModel.errors import (
    DegenerateInformation,
    EmptyTruncationWindow,
    InvalidSample,
)
from src.DensityModel.lcmle import PiecewiseLogLinearDensity, aggregate, fit_lcmle
from src.DensityModel.smoothing import SmoothedDensity, smooth_lcmle

logger = logging.getLogger(__name__)

DEFAULT_CI_LEVEL = 0.95
MIN_FISHER_INFO = 1e-12
# Tail mass left out of the untruncated Fisher integral on each side
EFFECTIVE_SUPPORT_TAIL = 1e-9
QUADRATURE_TOLERANCE = 1e-10


class ScoreDensity(Protocol):
    """Anything that can stand in for the fitted density inside one_step."""

    def eval_density(self, x): ...

    def eval_log_derivative(self, x): ...

    def quantile(self, q: float) -> float: ...

    def upper_quantile(self, tail: float) -> float: ...

    @property
    def breakpoints(self) -> Sequence[float]: ...


# ============================================
# DOMAIN TYPES
# ============================================

@dataclass(frozen=True)
class TwoSample:
    """
    Independent X and Y samples.

    Attributes:
        x: X observations (m >= 2, finite)
        y: Y observations (n >= 2, finite)
    """

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.array(self.x, dtype=float).ravel()
        y = np.array(self.y, dtype=float).ravel()
        if len(x) < 2 or len(y) < 2:
            raise InvalidSample(f"need m >= 2 and n >= 2, got m={len(x)}, n={len(y)}")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise InvalidSample("observations must be finite")
        x.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def m(self) -> int:
        return len(self.x)

    @property
    def n(self) -> int:
        return len(self.y)

    @property
    def total(self) -> int:
        return self.m + self.n


@dataclass(frozen=True)
class PreliminaryEstimates:
    mu_bar: float
    delta_bar: float
    pooled_pseudo: np.ndarray
    s_sq: float


@dataclass(frozen=True)
class ShiftEstimate:
    """
    Estimate of Delta with its confidence interval.

    Attributes:
        delta_hat: Point estimate
        fisher_info_hat: Estimated Fisher information used for the interval
        eta: Truncation level (0 for untruncated or non-truncating estimators)
        xi1_hat: Lower truncation quantile, None when eta = 0
        xi2_hat: Upper truncation quantile, None when eta = 0
        ci_low: Lower confidence bound
        ci_high: Upper confidence bound
        ci_level: Nominal coverage
        m: X sample size
        n: Y sample size
    """

    delta_hat: float
    fisher_info_hat: float
    eta: float
    xi1_hat: Optional[float]
    xi2_hat: Optional[float]
    ci_low: float
    ci_high: float
    ci_level: float
    m: int
    n: int

    @property
    def ci_width(self) -> float:
        return self.ci_high - self.ci_low

    def to_dict(self) -> Dict[str, Any]:
        return {
            "delta_hat": self.delta_hat,
            "fisher_info": self.fisher_info_hat,
            "eta": self.eta,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "m": self.m,
            "n": self.n,
        }


def normal_interval(
    center: float, fisher_info_hat: float, m: int, n: int, level: float
) -> Tuple[float, float]:
    """
    Wald interval center +/- z * sqrt((N / (m n)) / I).

    Example:
        >>> [round(v, 4) for v in normal_interval(0.0, 1.0, 50, 50, 0.95)]
        [-0.392, 0.392]
    """
    if not 0.0 < level < 1.0:
        raise ValueError(f"ci_level must lie in (0, 1), got {level!r}")
    z = float(norm.ppf(0.5 + 0.5 * level))
    half_width = z * np.sqrt(((m + n) / (m * n)) / fisher_info_hat)
    return center - half_width, center + half_width


# ============================================
# PRELIMINARY ESTIMATES AND POOLED FITS
# ============================================

def preliminary(ts: TwoSample) -> PreliminaryEstimates:
    """
    Sample-mean preliminary estimates and the centered pooled sample.

    Example:
        >>> pre = preliminary(TwoSample([0.0, 2.0], [3.0, 5.0]))
        >>> pre.mu_bar, pre.delta_bar, pre.s_sq
        (1.0, 3.0, 1.3333333333333333)
    """
    mu_bar = float(np.mean(ts.x))
    delta_bar = float(np.mean(ts.y)) - mu_bar
    pooled = np.concatenate((ts.x - mu_bar, ts.y - mu_bar - delta_bar))
    s_sq = float(pooled @ pooled) / (len(pooled) - 1)
    return PreliminaryEstimates(mu_bar=mu_bar, delta_bar=delta_bar, pooled_pseudo=pooled, s_sq=s_sq)


def fit_pooled(pre: PreliminaryEstimates) -> PiecewiseLogLinearDensity:
    """Unsmoothed log-concave MLE of the pooled pseudo-observations."""
    return fit_lcmle(aggregate(pre.pooled_pseudo))


def fit_pooled_smoothed(
    pre: PreliminaryEstimates, bandwidth_floor: Optional[float] = None
) -> SmoothedDensity:
    """
    Pooled log-concave MLE convolved with a Gaussian of bandwidth sqrt(s^2 - sigma^2).

    Args:
        pre: Preliminary estimates holding the pooled pseudo-observations
        bandwidth_floor: Bandwidth to fall back on when the closed form is
            not positive; None raises instead

    Returns:
        SmoothedDensity centered at zero with variance s^2

    Raises:
        FewerThanTwoDistinctPoints, NonConvergence, NonPositiveBandwidth
    """
    return smooth_lcmle(pre.pooled_pseudo, bandwidth_floor=bandwidth_floor, sample_variance=pre.s_sq)


# ============================================
# FISHER INFORMATION
# ============================================

def fisher_info(s: ScoreDensity, eta: float = 0.0) -> float:
    """
    Fisher information for location of a fitted density, optionally truncated.

    Integrates score(x)^2 * density(x) between the quantiles at max(eta, 1e-9)
    and 1 - max(eta, 1e-9).

    Args:
        s: Fitted density (smoothed or not)
        eta: Truncation level in [0, 0.5)

    Returns:
        Positive Fisher information estimate

    Raises:
        DegenerateInformation: if the integral is below 1e-12
    """
    _check_eta(eta)
    tail = max(eta, EFFECTIVE_SUPPORT_TAIL)
    low, high = s.quantile(tail), s.upper_quantile(tail)
    if not high > low:
        raise DegenerateInformation(f"integration window [{low!r}, {high!r}] is empty")

    breaks = np.asarray(s.breakpoints, dtype=float)
    breaks = breaks[(breaks > low) & (breaks < high)]

    def integrand(x):
        score = s.eval_log_derivative(x)
        return score * score * s.eval_density(x)

    value, abserr = quad(
        integrand, low, high,
        points=breaks if len(breaks) else None,
        epsabs=0.0, epsrel=QUADRATURE_TOLERANCE,
        limit=max(100, 4 * len(breaks) + 50),
    )
    logger.debug("fisher information eta=%g over [%.6g, %.6g]: %.12g (+/- %.2e)", eta, low, high, value, abserr)
    if not value >= MIN_FISHER_INFO:
        raise DegenerateInformation(f"estimated Fisher information {value!r} is numerically zero")
    return float(value)


def _check_eta(eta: float) -> None:
    if not 0.0 <= eta < 0.5:
        raise ValueError(f"eta must lie in [0, 0.5), got {eta!r}")


# ============================================
# ESTIMATORS
# ============================================

def one_step(
    ts: TwoSample,
    eta: float = 0.0,
    level: float = DEFAULT_CI_LEVEL,
    *,
    density: Optional[ScoreDensity] = None,
    smooth: bool = True,
    bandwidth_floor: Optional[float] = None,
) -> ShiftEstimate:
    """
    Truncated (eta > 0) or untruncated (eta = 0) one-step estimator of Delta.

    delta_hat = delta_bar + (1/m) sum psi'(X_i - mu_bar) / I
                          - (1/n) sum psi'(Y_j - mu_bar - delta_bar) / I

    where psi' is the score of the fitted pooled density and, for eta > 0,
    the sums run over pseudo-observations inside [G^-1(eta), G^-1(1 - eta)].

    Args:
        ts: The two samples
        eta: Truncation level in [0, 0.5)
        level: Confidence level of the interval
        density: Score density to use instead of fitting one
        smooth: Use the smoothed pooled MLE (True) or the raw pooled MLE
        bandwidth_floor: Passed to fit_pooled_smoothed

    Returns:
        ShiftEstimate

    Raises:
        EmptyTruncationWindow: if no X or no Y pseudo-observation lies in the window
        FewerThanTwoDistinctPoints, NonConvergence, NonPositiveBandwidth,
        DegenerateInformation: from the fitting steps
    """
    _check_eta(eta)
    pre = preliminary(ts)
    if density is None:
        density = fit_pooled_smoothed(pre, bandwidth_floor) if smooth else fit_pooled(pre)

    info = fisher_info(density, eta)
    x_pseudo = pre.pooled_pseudo[: ts.m]
    y_pseudo = pre.pooled_pseudo[ts.m:]

    xi1 = xi2 = None
    x_keep = np.ones(ts.m, dtype=bool)
    y_keep = np.ones(ts.n, dtype=bool)
    if eta > 0:
        xi1, xi2 = density.quantile(eta), density.upper_quantile(eta)
        x_keep = (x_pseudo >= xi1) & (x_pseudo <= xi2)
        y_keep = (y_pseudo >= xi1) & (y_pseudo <= xi2)
        if not x_keep.any() or not y_keep.any():
            raise EmptyTruncationWindow(
                f"window [{xi1:.6g}, {xi2:.6g}] keeps {int(x_keep.sum())} X and "
                f"{int(y_keep.sum())} Y observations"
            )

    x_score = np.asarray(density.eval_log_derivative(x_pseudo[x_keep]), dtype=float)
    y_score = np.asarray(density.eval_log_derivative(y_pseudo[y_keep]), dtype=float)
    correction = (x_score.sum() / ts.m - y_score.sum() / ts.n) / info
    delta_hat = pre.delta_bar + float(correction)

    ci_low, ci_high = normal_interval(delta_hat, info, ts.m, ts.n, level)
    return ShiftEstimate(
        delta_hat=delta_hat,
        fisher_info_hat=info,
        eta=eta,
        xi1_hat=xi1,
        xi2_hat=xi2,
        ci_low=ci_low,
        ci_high=ci_high,
        ci_level=level,
        m=ts.m,
        n=ts.n,
    )


def diff_of_means(ts: TwoSample, level: float = DEFAULT_CI_LEVEL) -> ShiftEstimate:
    """
    Difference of sample means with the pooled method-of-moments variance.

    Raises:
        DegenerateInformation: if both samples are constant
    """
    pre = preliminary(ts)
    pooled_variance = float(pre.pooled_pseudo @ pre.pooled_pseudo) / (ts.total - 2)
    if not pooled_variance > 0:
        raise DegenerateInformation("pooled variance is zero")
    info = 1.0 / pooled_variance
    ci_low, ci_high = normal_interval(pre.delta_bar, info, ts.m, ts.n, level)
    return ShiftEstimate(
        delta_hat=pre.delta_bar,
        fisher_info_hat=info,
        eta=0.0,
        xi1_hat=None,
        xi2_hat=None,
        ci_low=ci_low,
        ci_high=ci_high,
        ci_level=level,
        m=ts.m,
        n=ts.n,
    )

