import logging
from dataclasses import dataclass
from typing import Callable, Dict

from src.DensityModel.errors import ConfigError, NonPositiveBandwidth
from src.estimators.scenarios import Scheme, parametric_mle
from src.estimators.shift_estimator import ShiftEstimate, TwoSample, diff_of_means, one_step

logger = logging.getLogger(__name__)

# Bandwidth used when the closed form collapses after round-off
BANDWIDTH_FLOOR = 1e-6

EstimatorFn = Callable[[Scheme, TwoSample, float, float], ShiftEstimate]


@dataclass(frozen=True)
class Estimator:
    """An estimator the harness can run: id, callable and whether eta applies."""

    id: str
    fn: EstimatorFn
    truncates: bool


def sc_one_step(scheme: Scheme, ts: TwoSample, eta: float, level: float) -> ShiftEstimate:
    try:
        return one_step(ts, eta, level)
    except NonPositiveBandwidth as e:
        logger.warning("%s (m=%d, n=%d): %s; retrying with bandwidth floor %g",
                       scheme.id, ts.m, ts.n, e, BANDWIDTH_FLOOR)
        return one_step(ts, eta, level, bandwidth_floor=BANDWIDTH_FLOOR)


def sc_one_step_unsmoothed(scheme: Scheme, ts: TwoSample, eta: float, level: float) -> ShiftEstimate:
    return one_step(ts, eta, level, smooth=False)


def diff_means(scheme: Scheme, ts: TwoSample, eta: float, level: float) -> ShiftEstimate:
    return diff_of_means(ts, level)


def oracle_mle(scheme: Scheme, ts: TwoSample, eta: float, level: float) -> ShiftEstimate:
    return parametric_mle(scheme, ts, level)


# Shape-constrained one-step estimator (pooled-smoothed score)
sc_one_step_estimator = Estimator(id="sc_one_step", fn=sc_one_step, truncates=True)

# Same correction with the unsmoothed pooled MLE as score density
sc_one_step_unsmoothed_estimator = Estimator(
    id="sc_one_step_unsmoothed", fn=sc_one_step_unsmoothed, truncates=True
)

# Preliminary estimator as baseline
diff_means_estimator = Estimator(id="diff_means", fn=diff_means, truncates=False)

# Oracle that knows g; also the efficiency denominator
parametric_mle_estimator = Estimator(id="parametric_mle", fn=oracle_mle, truncates=False)

ESTIMATORS: Dict[str, Estimator] = {
    e.id: e
    for e in (
        sc_one_step_estimator,
        sc_one_step_unsmoothed_estimator,
        diff_means_estimator,
        parametric_mle_estimator,
    )
}

ORACLE_ID = parametric_mle_estimator.id


def get_estimator(estimator_id: str, registry: Dict[str, Estimator] = ESTIMATORS) -> Estimator:
    try:
        return registry[estimator_id]
    except KeyError:
        raise ConfigError(
            f"unknown estimator {estimator_id!r}; choose from {sorted(registry)}"
        ) from None
