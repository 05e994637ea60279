"""
Command Handlers
================

The operations behind each CLI subcommand. Every handler returns a result
dictionary: {"success": True, ...} on success, or
{"success": False, "error": message, "exit_code": code} when the library
raised, so callers never have to catch.

Exit codes:
    2 - configuration or input error
    3 - numerical failure
    4 - I/O error

Usage:
    from src.tools.commands import estimate_shift

    result = estimate_shift("x.txt", "y.txt", eta=0.001)
    if result["success"]:
        print(result["estimate"]["delta_hat"])
"""

import logging
import os
from typing import Any, Dict, Optional, Sequence

import numpy as np

from src.DensityModel.errors import (
    InvalidSample,
    NumericalError,
    OutputError,
    ShiftEstimationError,
)
from src.DensityModel.lcmle import aggregate, fit_lcmle
from src.DensityModel.smoothing import smooth_lcmle
from src.estimators.shift_estimator import DEFAULT_CI_LEVEL, TwoSample, one_step
from src.tools.harness import DEFAULT_SEED, emit_csv, hellinger_rate, load_config, run_experiment
from src.tools.plots import emit_plots

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4


def exit_code_for(error: Exception) -> int:
    if isinstance(error, OutputError):
        return EXIT_IO
    if isinstance(error, NumericalError):
        return EXIT_NUMERICAL
    return EXIT_CONFIG


def _failure(error: Exception) -> Dict[str, Any]:
    logger.debug("command failed", exc_info=error)
    return {"success": False, "error": f"{type(error).__name__}: {error}", "exit_code": exit_code_for(error)}


# ============================================
# SAMPLE FILES
# ============================================

def read_observations(path: str) -> np.ndarray:
    """
    Read one real number per line; blank lines and '#' comments are skipped.

    Raises:
        OutputError: if the file cannot be read
        InvalidSample: if a line is not a number
    """
    try:
        with open(path, encoding="utf-8") as f:
            lines = f.readlines()
    except OSError as e:
        raise OutputError(f"cannot read {path}: {e}") from e

    values = []
    for number, line in enumerate(lines, start=1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        try:
            values.append(float(text))
        except ValueError:
            raise InvalidSample(f"{path}:{number}: not a number: {text!r}") from None
    return np.asarray(values, dtype=float)


# ============================================
# HANDLERS
# ============================================

def fit_density(input_path: str, smooth: bool = False) -> Dict[str, Any]:
    """
    Fit the log-concave MLE (optionally smoothed) of one sample file.

    Returns:
        Dict with knots, log_values and, when smoothed, bandwidth
    """
    try:
        observations = read_observations(input_path)
        if smooth:
            smoothed = smooth_lcmle(observations)
            base, bandwidth = smoothed.base, smoothed.bandwidth
        else:
            base, bandwidth = fit_lcmle(aggregate(observations)), None
        result = {
            "success": True,
            "knots": base.knots.tolist(),
            "log_values": base.log_values.tolist(),
            "exit_code": EXIT_OK,
        }
        if bandwidth is not None:
            result["bandwidth"] = bandwidth
        return result
    except (ShiftEstimationError, ValueError) as e:
        return _failure(e)


def estimate_shift(
    x_path: str, y_path: str, eta: float = 0.0, level: float = DEFAULT_CI_LEVEL
) -> Dict[str, Any]:
    """
    Shape-constrained one-step estimate of the shift between two sample files.

    Returns:
        Dict with "estimate": delta_hat, fisher_info, eta, ci_low, ci_high, m, n
    """
    try:
        ts = TwoSample(read_observations(x_path), read_observations(y_path))
        estimate = one_step(ts, eta, level)
        return {"success": True, "estimate": estimate.to_dict(), "exit_code": EXIT_OK}
    except (ShiftEstimationError, ValueError) as e:
        return _failure(e)


def simulate(
    config_path: Optional[str] = None,
    seed: Optional[int] = None,
    replications: Optional[int] = None,
    output_path: Optional[str] = None,
    workers: Optional[int] = None,
) -> Dict[str, Any]:
    """Run a simulation study and write its summary CSV."""
    try:
        cfg = load_config(
            config_path, seed=seed, replications=replications, output_path=output_path, workers=workers
        )
        rows = run_experiment(cfg)
        emit_csv(rows, cfg.output_path)
        return {
            "success": True,
            "output_path": cfg.output_path,
            "rows": len(rows),
            "failures": sum(r.failures for r in rows),
            "exit_code": EXIT_OK,
        }
    except ShiftEstimationError as e:
        return _failure(e)


def plot_summary(csv_path: str, out_dir: str, nominal_level: float = DEFAULT_CI_LEVEL) -> Dict[str, Any]:
    try:
        files = emit_plots(csv_path, out_dir, nominal_level)
        return {"success": True, "files": files, "exit_code": EXIT_OK}
    except ShiftEstimationError as e:
        return _failure(e)


def hellinger_rate_study(
    scheme_id: str, sizes: Sequence[int], replications: int, seed: Optional[int] = None
) -> Dict[str, Any]:
    """Median Hellinger distance to the true density per pooled size, with log-log slope."""
    try:
        if seed is None:
            seed = int(os.getenv("LCSHIFT_SEED", DEFAULT_SEED))
        result = hellinger_rate(scheme_id, sizes, replications, seed)
        result["exit_code"] = EXIT_OK
        return result
    except (ShiftEstimationError, ValueError) as e:
        return _failure(e)

