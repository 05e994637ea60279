"""
Monte Carlo Harness
===================

Runs the simulation study: for every scheme, sample size and replication it
draws one TwoSample from a dedicated random stream, applies every configured
estimator to that same sample and summarizes each (scheme, size, estimator,
eta) cell. Results are written as CSV.

Random streams are Philox generators keyed by
SeedSequence(seed, spawn_key=(scheme_index, size_index, replication_index)),
so any worker can reproduce any replication and the output does not depend
on the worker count.

Configuration precedence: explicit overrides > config file > LCSHIFT_*
environment variables > desk defaults.

Usage:
    from src.tools.harness import load_config, run_experiment, emit_csv

    cfg = load_config("configs/desk.conf", replications=50)
    emit_csv(run_experiment(cfg), cfg.output_path)
"""

import csv
import logging
import math
import os
from dataclasses import dataclass, field
from functools import partial
from multiprocessing import Pool
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from dotenv import dotenv_values

from src.DensityModel.errors import (
    ConfigError,
    MalformedCsv,
    NumericalError,
    OutputError,
    ShiftEstimationError,
)
from src.estimators.estimators_config import (
    BANDWIDTH_FLOOR,
    ESTIMATORS,
    ORACLE_ID,
    Estimator,
    get_estimator,
)
from src.estimators.scenarios import SCHEMES, get_scheme, sample
from src.estimators.shift_estimator import fit_pooled_smoothed, preliminary
from src.tools.metrics import McSummary, hellinger, summarize

logger = logging.getLogger(__name__)

CSV_HEADER = (
    "scheme", "m", "n", "estimator", "eta", "replications", "failures",
    "variance", "scaled_mse", "coverage", "mean_ci_width", "efficiency",
)

# Desk-scale defaults; the full study is 4000 replications at n in {40, 100, 200, 500}
DEFAULT_SCHEMES = ("gaussian", "logistic", "laplace", "gamma")
DEFAULT_SAMPLE_SIZES = ((40, 40), (100, 100), (200, 200))
DEFAULT_ESTIMATORS = ("sc_one_step", "diff_means", "parametric_mle")
DEFAULT_ETAS = (0.0, 0.01, 0.001, 0.0001)
DEFAULT_REPLICATIONS = 500
DEFAULT_SEED = 20240101
DEFAULT_CI_LEVEL = 0.95
DEFAULT_OUTPUT_PATH = "results/summary.csv"

JobKey = Tuple[str, Optional[float]]


# ============================================
# CONFIGURATION
# ============================================

@dataclass(frozen=True)
class ExperimentConfig:
    """
    One simulation study.

    Attributes:
        schemes: Scheme ids
        sample_sizes: (m, n) pairs
        estimators: Estimator ids
        etas: Truncation levels applied to truncating estimators
        replications: Replications per (scheme, size)
        seed: Root seed (unsigned 64-bit)
        ci_level: Nominal interval coverage
        output_path: CSV destination
        workers: Processes for the replication pool (1 runs inline)
    """

    schemes: Tuple[str, ...] = DEFAULT_SCHEMES
    sample_sizes: Tuple[Tuple[int, int], ...] = DEFAULT_SAMPLE_SIZES
    estimators: Tuple[str, ...] = DEFAULT_ESTIMATORS
    etas: Tuple[float, ...] = DEFAULT_ETAS
    replications: int = DEFAULT_REPLICATIONS
    seed: int = DEFAULT_SEED
    ci_level: float = DEFAULT_CI_LEVEL
    output_path: str = DEFAULT_OUTPUT_PATH
    workers: int = field(default_factory=lambda: os.cpu_count() or 1)

    def validate(self, registry: Dict[str, Estimator] = ESTIMATORS) -> "ExperimentConfig":
        """
        Check every invariant of the configuration.

        Raises:
            ConfigError: on the first violated invariant
        """
        if not self.schemes:
            raise ConfigError("at least one scheme is required")
        for scheme_id in self.schemes:
            get_scheme(scheme_id)
        if not self.estimators:
            raise ConfigError("at least one estimator is required")
        for estimator_id in self.estimators:
            get_estimator(estimator_id, registry)
        if not self.sample_sizes:
            raise ConfigError("at least one sample size is required")
        for m, n in self.sample_sizes:
            if m < 2 or n < 2:
                raise ConfigError(f"sample sizes must be >= 2, got ({m}, {n})")
        if not self.etas:
            raise ConfigError("at least one eta is required")
        if len(set(self.etas)) != len(self.etas):
            raise ConfigError(f"etas must be distinct, got {self.etas}")
        for eta in self.etas:
            if not 0.0 <= eta < 0.5:
                raise ConfigError(f"eta must lie in [0, 0.5), got {eta!r}")
        if self.replications < 2:
            raise ConfigError(f"replications must be >= 2, got {self.replications}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        if not 0.0 < self.ci_level < 1.0:
            raise ConfigError(f"ci_level must lie in (0, 1), got {self.ci_level!r}")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")
        return self


def _split(value: str) -> List[str]:
    return [item.strip() for item in value.split(",") if item.strip()]


def _parse_sizes(value: str) -> Tuple[Tuple[int, int], ...]:
    """'40,100' means m = n; '40x60' gives an explicit pair."""
    sizes = []
    for item in _split(value):
        m, _, n = item.lower().partition("x")
        sizes.append((int(m), int(n or m)))
    return tuple(sizes)


_PARSERS = {
    "schemes": lambda v: tuple(_split(v)),
    "sample_sizes": _parse_sizes,
    "estimators": lambda v: tuple(_split(v)),
    "etas": lambda v: tuple(float(e) for e in _split(v)),
    "replications": int,
    "seed": int,
    "ci_level": float,
    "output_path": str,
    "workers": int,
}


def _parse(values: Dict[str, Any], source: str) -> Dict[str, Any]:
    parsed = {}
    for key, raw in values.items():
        if key not in _PARSERS:
            raise ConfigError(f"{source}: unknown key {key!r}")
        if raw is None:
            continue
        if not isinstance(raw, str):
            parsed[key] = raw
            continue
        try:
            parsed[key] = _PARSERS[key](raw)
        except ValueError as e:
            raise ConfigError(f"{source}: bad value for {key!r}: {raw!r} ({e})") from None
    return parsed


def load_config(path: Optional[str] = None, **overrides: Any) -> ExperimentConfig:
    """
    Build and validate an ExperimentConfig.

    Args:
        path: Optional `key = value` config file
        **overrides: Field values that win over everything else; None is ignored

    Returns:
        Validated ExperimentConfig

    Raises:
        ConfigError: on an unreadable file, unknown key or invalid value
    """
    values: Dict[str, Any] = {}
    env = {
        "workers": os.getenv("LCSHIFT_WORKERS"),
        "seed": os.getenv("LCSHIFT_SEED"),
    }
    values.update(_parse(env, "environment"))

    if path is not None:
        if not Path(path).is_file():
            raise ConfigError(f"config file not found: {path}")
        values.update(_parse(dict(dotenv_values(path)), path))

    values.update(_parse({k: v for k, v in overrides.items() if v is not None}, "overrides"))
    return ExperimentConfig(**values).validate()


def replication_rng(seed: int, scheme_index: int, size_index: int, replication_index: int) -> np.random.Generator:
    """Independent Philox stream for one replication."""
    seq = np.random.SeedSequence(seed, spawn_key=(scheme_index, size_index, replication_index))
    return np.random.Generator(np.random.Philox(seq))


# ============================================
# REPLICATION ENGINE
# ============================================

@dataclass(frozen=True)
class _Task:
    scheme_id: str
    scheme_index: int
    size_index: int
    replication: int
    m: int
    n: int
    seed: int
    ci_level: float


def _jobs(cfg: ExperimentConfig, registry: Dict[str, Estimator]) -> List[JobKey]:
    jobs: List[JobKey] = []
    for estimator_id in cfg.estimators:
        if registry[estimator_id].truncates:
            jobs.extend((estimator_id, eta) for eta in cfg.etas)
        else:
            jobs.append((estimator_id, None))
    if ORACLE_ID in registry and (ORACLE_ID, None) not in jobs:
        jobs.append((ORACLE_ID, None))
    return jobs


def _run_replication(task: _Task, jobs: Sequence[JobKey], registry: Dict[str, Estimator]) -> Dict[JobKey, Dict[str, Any]]:
    """Apply every job to the one TwoSample of this replication."""
    scheme = SCHEMES[task.scheme_id]
    rng = replication_rng(task.seed, task.scheme_index, task.size_index, task.replication)
    ts = sample(scheme, task.m, task.n, rng)
    results = {}
    for estimator_id, eta in jobs:
        try:
            estimate = registry[estimator_id].fn(scheme, ts, eta or 0.0, task.ci_level)
            results[(estimator_id, eta)] = {
                "success": True,
                "estimate": (estimate.delta_hat, estimate.ci_low, estimate.ci_high),
            }
        except ShiftEstimationError as e:
            logger.warning(
                "%s m=%d n=%d rep %d: %s eta=%s failed: %s: %s",
                task.scheme_id, task.m, task.n, task.replication, estimator_id, eta,
                type(e).__name__, e,
            )
            results[(estimator_id, eta)] = {"success": False, "error": f"{type(e).__name__}: {e}"}
    return results


def run_experiment(cfg: ExperimentConfig, registry: Dict[str, Estimator] = ESTIMATORS) -> List[McSummary]:
    """
    Run every (scheme, size, replication) and summarize each cell.

    Args:
        cfg: Experiment configuration
        registry: Estimator lookup table

    Returns:
        Summary rows ordered by scheme, size, then configured estimator and eta

    Raises:
        ConfigError: if the configuration is invalid
    """
    cfg.validate(registry)
    jobs = _jobs(cfg, registry)
    scheme_order = list(SCHEMES)
    rows: List[McSummary] = []

    pool = Pool(cfg.workers) if cfg.workers > 1 else None
    try:
        for scheme_id in cfg.schemes:
            scheme = SCHEMES[scheme_id]
            for size_index, (m, n) in enumerate(cfg.sample_sizes):
                tasks = [
                    _Task(scheme_id, scheme_order.index(scheme_id), size_index, rep, m, n, cfg.seed, cfg.ci_level)
                    for rep in range(cfg.replications)
                ]
                run = partial(_run_replication, jobs=jobs, registry=registry)
                outcomes = pool.map(run, tasks) if pool is not None else [run(t) for t in tasks]
                rows.extend(_summarize_cell(cfg, scheme_id, scheme.delta0, m, n, jobs, outcomes))
                logger.info("%s m=%d n=%d: %d replications done", scheme_id, m, n, cfg.replications)
    finally:
        if pool is not None:
            pool.close()
            pool.join()
    return rows


def _summarize_cell(
    cfg: ExperimentConfig,
    scheme_id: str,
    truth: float,
    m: int,
    n: int,
    jobs: Sequence[JobKey],
    outcomes: Sequence[Dict[JobKey, Dict[str, Any]]],
) -> List[McSummary]:
    successes = {job: [o[job]["estimate"] for o in outcomes if o[job]["success"]] for job in jobs}
    failures = {job: sum(not o[job]["success"] for o in outcomes) for job in jobs}

    oracle = successes.get((ORACLE_ID, None), [])
    oracle_variance = float(np.var([e[0] for e in oracle], ddof=1)) if len(oracle) >= 2 else float("nan")

    return [
        summarize(
            successes[job], truth, m, n, oracle_variance,
            scheme=scheme_id, estimator=job[0], eta=job[1], failures=failures[job],
        )
        for job in jobs
        if job[0] in cfg.estimators
    ]


# ============================================
# CSV PERSISTENCE
# ============================================

def _format(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return format(value, ".10g")
    return str(value)


def emit_csv(rows: Sequence[McSummary], path: str) -> None:
    """
    Write summary rows as UTF-8 CSV with LF line endings.

    Raises:
        OutputError: if the file cannot be written
    """
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(CSV_HEADER)
            for row in rows:
                values = row.as_dict()
                writer.writerow([_format(values[column]) for column in CSV_HEADER])
    except OSError as e:
        raise OutputError(f"cannot write {path}: {e}") from e
    logger.info("wrote %d rows to %s", len(rows), path)


def read_csv(path: str) -> List[McSummary]:
    """
    Parse a CSV written by emit_csv.

    Raises:
        OutputError: if the file cannot be read
        MalformedCsv: on a wrong header or unparsable value
    """
    try:
        with open(path, encoding="utf-8", newline="") as f:
            lines = list(csv.reader(f))
    except OSError as e:
        raise OutputError(f"cannot read {path}: {e}") from e

    if not lines or tuple(lines[0]) != CSV_HEADER:
        raise MalformedCsv(f"{path}: expected header {','.join(CSV_HEADER)}")

    rows = []
    for number, line in enumerate(lines[1:], start=2):
        if len(line) != len(CSV_HEADER):
            raise MalformedCsv(f"{path}:{number}: expected {len(CSV_HEADER)} fields, got {len(line)}")
        record = dict(zip(CSV_HEADER, line))
        try:
            rows.append(McSummary(
                scheme=record["scheme"],
                m=int(record["m"]),
                n=int(record["n"]),
                estimator=record["estimator"],
                eta=float(record["eta"]) if record["eta"] else None,
                replications=int(record["replications"]),
                failures=int(record["failures"]),
                variance=float(record["variance"]),
                scaled_mse=float(record["scaled_mse"]),
                coverage=float(record["coverage"]),
                mean_ci_width=float(record["mean_ci_width"]),
                efficiency=float(record["efficiency"]),
            ))
        except ValueError as e:
            raise MalformedCsv(f"{path}:{number}: {e}") from None
    return rows


# ============================================
# HELLINGER RATE
# ============================================

def _hellinger_to_truth(scheme_id: str, pooled_size: int, rng: np.random.Generator) -> float:
    scheme = SCHEMES[scheme_id]
    m = pooled_size // 2
    ts = sample(scheme, m, pooled_size - m, rng)
    fitted = fit_pooled_smoothed(preliminary(ts), bandwidth_floor=BANDWIDTH_FLOOR)

    low = min(fitted.quantile(1e-10), float(scheme.quantile(1e-10)))
    high = max(fitted.upper_quantile(1e-10), float(scheme.distribution.isf(1e-10)))
    kinks = [float(scheme.quantile(0.0)), 0.0]
    return hellinger(fitted.eval_density, scheme.density, (low, high), points=[k for k in kinks if math.isfinite(k)])


def hellinger_rate(
    scheme_id: str,
    sizes: Sequence[int],
    replications: int,
    seed: int = DEFAULT_SEED,
) -> Dict[str, Any]:
    """
    Median Hellinger distance between the pooled-smoothed fit and g per pooled size.

    Args:
        scheme_id: Scheme whose g is the target
        sizes: Pooled sample sizes N (m = N // 2)
        replications: Fits per size
        seed: Root seed

    Returns:
        {"success": True, "rows": [{"N", "median_hellinger", "failures"}, ...],
         "slope": log-log regression slope of the medians on N}
    """
    scheme_index = list(SCHEMES).index(get_scheme(scheme_id).id)
    if len(sizes) < 2 or replications < 1:
        raise ConfigError("need at least two sizes and one replication")

    rows = []
    for size_index, pooled_size in enumerate(sizes):
        distances, failures = [], 0
        for rep in range(replications):
            rng = replication_rng(seed, scheme_index, size_index, rep)
            try:
                distances.append(_hellinger_to_truth(scheme_id, pooled_size, rng))
            except ShiftEstimationError as e:
                failures += 1
                logger.warning("%s N=%d rep %d failed: %s", scheme_id, pooled_size, rep, e)
        if not distances:
            raise NumericalError(f"every replication failed at N={pooled_size}")
        rows.append({"N": pooled_size, "median_hellinger": float(np.median(distances)), "failures": failures})
        logger.info("%s N=%d: median H = %.6g", scheme_id, pooled_size, rows[-1]["median_hellinger"])

    slope = float(np.polyfit(
        np.log([r["N"] for r in rows]), np.log([r["median_hellinger"] for r in rows]), 1
    )[0])
    return {"success": True, "scheme": scheme_id, "rows": rows, "slope": slope}
