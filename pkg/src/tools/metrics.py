"""
Distances and Monte Carlo Summaries
===================================

Distances between univariate densities and distribution functions, computed
by adaptive quadrature on an explicit finite domain, and the per-setting
summary statistics of the simulation study.

Functions:
    - hellinger: H(f, g) with H^2 = 1/2 int (sqrt f - sqrt g)^2
    - total_variation: 1/2 int |f - g|
    - wasserstein: int |F - G|
    - summarize: Variance, scaled MSE, coverage, CI width and efficiency

Usage:
    from scipy import stats
    from src.tools.metrics import hellinger

    hellinger(stats.norm(0, 1).pdf, stats.norm(1, 1).pdf, (-12.0, 13.0))
"""

import logging
from dataclasses import asdict, dataclass
from typing import Any, Callable, Dict, Iterable, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.integrate import quad

logger = logging.getLogger(__name__)

QUADRATURE_TOLERANCE = 1e-10
QUADRATURE_LIMIT = 500

Evaluator = Callable[[float], float]
Domain = Tuple[float, float]


def _integrate(integrand: Evaluator, domain: Domain, points: Optional[Sequence[float]]) -> float:
    low, high = domain
    if not high > low:
        raise ValueError(f"domain must be a non-empty interval, got {domain!r}")
    inner = None
    if points is not None:
        inner = sorted({float(p) for p in points if low < p < high}) or None
    value, _ = quad(
        integrand, low, high, points=inner,
        epsabs=QUADRATURE_TOLERANCE, epsrel=QUADRATURE_TOLERANCE, limit=QUADRATURE_LIMIT,
    )
    return float(value)


# ============================================
# DISTANCES
# ============================================

def hellinger(f: Evaluator, g: Evaluator, domain: Domain, points: Optional[Sequence[float]] = None) -> float:
    """
    Hellinger distance between two densities.

    Args:
        f: First density evaluator
        g: Second density evaluator
        domain: Finite interval carrying all but negligible mass of both
        points: Known discontinuities or kinks inside the domain

    Returns:
        Distance in [0, 1]

    Example:
        >>> round(hellinger(stats.norm(0, 1).pdf, stats.norm(1, 1).pdf, (-12, 13)), 4)
        0.3428
    """
    def integrand(x):
        return (np.sqrt(f(x)) - np.sqrt(g(x))) ** 2

    squared = 0.5 * _integrate(integrand, domain, points)
    return float(np.sqrt(np.clip(squared, 0.0, 1.0)))


def total_variation(f: Evaluator, g: Evaluator, domain: Domain, points: Optional[Sequence[float]] = None) -> float:
    value = 0.5 * _integrate(lambda x: abs(f(x) - g(x)), domain, points)
    return float(np.clip(value, 0.0, 1.0))


def wasserstein(F: Evaluator, G: Evaluator, domain: Domain, points: Optional[Sequence[float]] = None) -> float:
    """L1 Wasserstein distance as the integral of |F - G| over the domain."""
    return max(0.0, _integrate(lambda x: abs(F(x) - G(x)), domain, points))


# ============================================
# MONTE CARLO SUMMARIES
# ============================================

@dataclass(frozen=True)
class McSummary:
    """
    Aggregates over the replications of one (scheme, size, estimator, eta) cell.

    Attributes:
        scheme: Scheme id
        m: X sample size
        n: Y sample size
        estimator: Estimator id
        eta: Truncation level, None for estimators that do not truncate
        replications: Successful plus failed replications
        failures: Replications whose estimator raised
        variance: Unbiased sample variance of the estimates
        scaled_mse: mn/(m+n) times the mean squared error
        coverage: Fraction of intervals containing the true shift
        mean_ci_width: Average interval width
        efficiency: Oracle variance divided by this estimator's variance
    """

    scheme: str
    m: int
    n: int
    estimator: str
    eta: Optional[float]
    replications: int
    failures: int
    variance: float
    scaled_mse: float
    coverage: float
    mean_ci_width: float
    efficiency: float

    def as_dict(self) -> Dict[str, Any]:
        return asdict(self)


EstimateLike = Union[Tuple[float, float, float], Any]


def _triples(estimates: Iterable[EstimateLike]) -> np.ndarray:
    rows = []
    for e in estimates:
        if hasattr(e, "delta_hat"):
            rows.append((e.delta_hat, e.ci_low, e.ci_high))
        else:
            rows.append(tuple(e))
    return np.asarray(rows, dtype=float).reshape(-1, 3)


def summarize(
    estimates: Iterable[EstimateLike],
    truth: float,
    m: int,
    n: int,
    oracle_variance: float,
    *,
    scheme: str = "",
    estimator: str = "",
    eta: Optional[float] = None,
    failures: int = 0,
) -> McSummary:
    """
    Summarize the successful replications of one cell.

    Args:
        estimates: ShiftEstimate objects or (delta_hat, ci_low, ci_high) triples
        truth: True shift
        m: X sample size
        n: Y sample size
        oracle_variance: Monte Carlo variance of the oracle MLE on the same replications
        scheme: Scheme label
        estimator: Estimator label
        eta: Truncation label
        failures: Number of replications that raised

    Returns:
        McSummary; statistics needing two estimates are NaN with fewer than two

    Example:
        >>> s = summarize([(0.9, 0.8, 1.0), (1.1, 1.0, 1.2)], 1.0, 100, 100, 0.02)
        >>> round(s.variance, 12), round(s.scaled_mse, 12), round(s.efficiency, 12)
        (0.02, 0.5, 1.0)
    """
    table = _triples(estimates)
    delta, low, high = table[:, 0], table[:, 1], table[:, 2]
    successes = len(delta)
    scale = m * n / (m + n)

    if successes:
        coverage = float(np.mean((low <= truth) & (truth <= high)))
        mean_ci_width = float(np.mean(high - low))
        scaled_mse = float(scale * np.mean((delta - truth) ** 2))
    else:
        coverage = mean_ci_width = scaled_mse = float("nan")

    if successes >= 2:
        variance = float(np.var(delta, ddof=1))
        if variance > 0:
            efficiency = float(oracle_variance / variance)
        else:
            efficiency = float("inf") if oracle_variance > 0 else float("nan")
    else:
        variance = efficiency = float("nan")
        logger.warning("%s/%s m=%d n=%d: only %d successful replications", scheme, estimator, m, n, successes)

    return McSummary(
        scheme=scheme,
        m=m,
        n=n,
        estimator=estimator,
        eta=eta,
        replications=successes + failures,
        failures=failures,
        variance=variance,
        scaled_mse=scaled_mse,
        coverage=coverage,
        mean_ci_width=mean_ci_width,
        efficiency=efficiency,
    )
