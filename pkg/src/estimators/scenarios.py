"""
Data-Generating Schemes
=======================

The four log-concave settings of the simulation study and their oracle
estimators. Each scheme fixes the centered error density g, the true location
mu0 of the X-population and the true shift delta0:

    gaussian  g = N(0, 1)                        mu0 = 0  I = 1
    logistic  g = standard logistic              mu0 = 0  I = 1/3
    laplace   g = standard Laplace               mu0 = 0  I = 1
    gamma     g = Gamma(4, scale 0.5) - 2        mu0 = 2  I = 2

with delta0 = 1 everywhere. X ~ g(. - mu0) and Y ~ g(. - mu0 - delta0).

Usage:
    from src.estimators.scenarios import SCHEMES, sample

    ts = sample(SCHEMES["logistic"], 100, 100, np.random.default_rng(1))
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict

import numpy as np
from scipy import stats
from scipy.optimize import minimize

from src.DensityModel.errors import ConfigError, InvalidSample, OptimizerFailure
from src.estimators.shift_estimator import (
    DEFAULT_CI_LEVEL,
    ShiftEstimate,
    TwoSample,
    normal_interval,
)

logger = logging.getLogger(__name__)

OPTIMIZER_TOLERANCE = 1e-9
MAX_OPTIMIZER_EVALUATIONS = 5000


@dataclass(frozen=True)
class Scheme:
    """
    One data-generating setting.

    Attributes:
        id: Scheme name used on the command line and in CSV rows
        mu0: True location of the X-population
        delta0: True shift
        true_fisher_info: Fisher information for location of g
        variance: Variance of g
        distribution: Frozen scipy distribution of the centered g
        score_fn: Exact score (log g)'
        draw: Sampler of the X-population g(. - mu0)
    """

    id: str
    mu0: float
    delta0: float
    true_fisher_info: float
    variance: float
    distribution: stats.rv_continuous = field(repr=False)
    score_fn: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    draw: Callable[[np.random.Generator, int], np.ndarray] = field(repr=False)

    def density(self, z):
        return self.distribution.pdf(z)

    def cdf(self, z):
        return self.distribution.cdf(z)

    def logpdf(self, z):
        return self.distribution.logpdf(z)

    def quantile(self, q):
        return self.distribution.ppf(q)

    def score(self, z):
        return self.score_fn(np.asarray(z, dtype=float))


SCHEMES: Dict[str, Scheme] = {
    "gaussian": Scheme(
        id="gaussian", mu0=0.0, delta0=1.0, true_fisher_info=1.0, variance=1.0,
        distribution=stats.norm(),
        score_fn=lambda z: -z,
        draw=lambda rng, size: rng.normal(0.0, 1.0, size),
    ),
    "logistic": Scheme(
        id="logistic", mu0=0.0, delta0=1.0, true_fisher_info=1.0 / 3.0, variance=np.pi**2 / 3.0,
        distribution=stats.logistic(),
        score_fn=lambda z: -np.tanh(0.5 * z),
        draw=lambda rng, size: rng.logistic(0.0, 1.0, size),
    ),
    "laplace": Scheme(
        id="laplace", mu0=0.0, delta0=1.0, true_fisher_info=1.0, variance=2.0,
        distribution=stats.laplace(),
        score_fn=lambda z: -np.sign(z),
        draw=lambda rng, size: rng.laplace(0.0, 1.0, size),
    ),
    # X ~ Gamma(4, 0.5) directly, so mu0 is its mean
    "gamma": Scheme(
        id="gamma", mu0=2.0, delta0=1.0, true_fisher_info=2.0, variance=1.0,
        distribution=stats.gamma(a=4.0, scale=0.5, loc=-2.0),
        score_fn=lambda z: 3.0 / (z + 2.0) - 2.0,
        draw=lambda rng, size: rng.gamma(4.0, 0.5, size),
    ),
}


def get_scheme(scheme_id: str) -> Scheme:
    try:
        return SCHEMES[scheme_id]
    except KeyError:
        raise ConfigError(f"unknown scheme {scheme_id!r}; choose from {sorted(SCHEMES)}") from None


# ============================================
# SAMPLING
# ============================================

def sample(scheme: Scheme, m: int, n: int, rng: np.random.Generator) -> TwoSample:
    """
    Draw X (size m) then Y (size n) from one stream.

    Args:
        scheme: Data-generating setting
        m: X sample size (>= 2)
        n: Y sample size (>= 2)
        rng: numpy Generator; its state fully determines the sample

    Returns:
        TwoSample with X ~ g(. - mu0) and Y ~ g(. - mu0 - delta0)
    """
    if m < 2 or n < 2:
        raise InvalidSample(f"need m >= 2 and n >= 2, got m={m}, n={n}")
    x = scheme.draw(rng, m)
    y = scheme.draw(rng, n) + scheme.delta0
    return TwoSample(x, y)


# ============================================
# PARAMETRIC ORACLE
# ============================================

def _negative_log_likelihood(params: np.ndarray, scheme: Scheme, ts: TwoSample) -> float:
    mu, delta = params
    value = scheme.logpdf(ts.x - mu).sum() + scheme.logpdf(ts.y - mu - delta).sum()
    return -value if np.isfinite(value) else np.inf


def _feasible_start(scheme: Scheme, ts: TwoSample) -> np.ndarray:
    """(mean X, mean Y - mean X), moved inside the support when g is bounded below."""
    mu, delta = float(np.mean(ts.x)), float(np.mean(ts.y) - np.mean(ts.x))
    lower = scheme.quantile(0.0)
    if np.isfinite(lower):
        margin = 1e-3 * np.sqrt(scheme.variance)
        mu = min(mu, float(ts.x.min()) - lower - margin, float(ts.y.min()) - delta - lower - margin)
    return np.array([mu, delta])


def parametric_mle(scheme: Scheme, ts: TwoSample, level: float = DEFAULT_CI_LEVEL) -> ShiftEstimate:
    """
    Oracle MLE of Delta that knows g.

    Gaussian and Laplace have closed forms (difference of means and of
    medians); logistic and gamma maximize the joint likelihood in (mu, Delta)
    with Nelder-Mead. The interval uses the true Fisher information.

    Args:
        scheme: Setting whose g is assumed known
        ts: The two samples
        level: Confidence level

    Returns:
        ShiftEstimate with fisher_info_hat equal to the true information

    Raises:
        OptimizerFailure: if Nelder-Mead does not converge within 5000 evaluations
    """
    if scheme.id == "gaussian":
        delta_hat = float(np.mean(ts.y) - np.mean(ts.x))
    elif scheme.id == "laplace":
        delta_hat = float(np.median(ts.y) - np.median(ts.x))
    else:
        result = minimize(
            _negative_log_likelihood,
            _feasible_start(scheme, ts),
            args=(scheme, ts),
            method="Nelder-Mead",
            options={
                "xatol": OPTIMIZER_TOLERANCE,
                "fatol": OPTIMIZER_TOLERANCE,
                "maxfev": MAX_OPTIMIZER_EVALUATIONS,
            },
        )
        if not result.success:
            raise OptimizerFailure(f"{scheme.id} likelihood maximization failed: {result.message}")
        delta_hat = float(result.x[1])
        logger.debug("%s oracle converged in %d evaluations", scheme.id, result.nfev)

    info = scheme.true_fisher_info
    ci_low, ci_high = normal_interval(delta_hat, info, ts.m, ts.n, level)
    return ShiftEstimate(
        delta_hat=delta_hat,
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
