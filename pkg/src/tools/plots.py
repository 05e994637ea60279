"""
Summary Plots
=============

Renders a summary CSV as four SVG figures (efficiency, scaled MSE, coverage
and CI width), one panel per scheme with the sample size on the horizontal
axis and one line per (estimator, eta). Each line is wrapped in an SVG group
with id `series-<estimator>-<eta>` so the output can be inspected.

Usage:
    from src.tools.plots import emit_plots

    emit_plots("results/summary.csv", "results/figures")
"""

import logging
from collections import defaultdict
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from src.DensityModel.errors import OutputError  # noqa: E402
from src.estimators.scenarios import SCHEMES  # noqa: E402
from src.tools.harness import read_csv  # noqa: E402
from src.tools.metrics import McSummary  # noqa: E402

logger = logging.getLogger(__name__)

FIGURES = (
    ("efficiency", "efficiency.svg", "Efficiency"),
    ("scaled_mse", "scaled_mse.svg", "Scaled MSE (mn/(m+n))"),
    ("coverage", "coverage.svg", "CI coverage"),
    ("mean_ci_width", "ci_width.svg", "Mean CI width"),
)

SVG_STYLE = {
    "svg.hashsalt": "logconcave-shift",
    "svg.fonttype": "none",
    "figure.dpi": 72,
}

NOMINAL_LEVEL_ID = "reference-nominal-level"


def series_id(estimator: str, eta: Optional[float]) -> str:
    return f"series-{estimator}-{'none' if eta is None else format(eta, 'g')}"


def _series_label(estimator: str, eta: Optional[float]) -> str:
    return estimator if eta is None else f"{estimator} (eta={eta:g})"


def _group(rows: List[McSummary]) -> Dict[str, Dict[Tuple[str, Optional[float]], List[McSummary]]]:
    panels: Dict[str, Dict[Tuple[str, Optional[float]], List[McSummary]]] = defaultdict(lambda: defaultdict(list))
    for row in rows:
        panels[row.scheme][(row.estimator, row.eta)].append(row)
    order = {scheme_id: i for i, scheme_id in enumerate(SCHEMES)}
    return dict(sorted(panels.items(), key=lambda item: (order.get(item[0], len(order)), item[0])))


def _draw_figure(rows: List[McSummary], metric: str, title: str, nominal_level: float):
    panels = _group(rows)
    count = max(1, len(panels))
    fig, axes = plt.subplots(1, count, figsize=(4.0 * count, 3.6), squeeze=False)

    if not panels:
        axes[0, 0].set_title("no data")
        axes[0, 0].set_xlabel("n")
        axes[0, 0].set_ylabel(title)

    for ax, (scheme_id, series) in zip(axes[0], panels.items()):
        for (estimator, eta), points in series.items():
            points = sorted(points, key=lambda r: (r.n, r.m))
            x = [r.n for r in points]
            y = np.array([getattr(r, metric) for r in points], dtype=float)
            y[~np.isfinite(y)] = np.nan
            (line,) = ax.plot(x, y, marker="o", label=_series_label(estimator, eta))
            line.set_gid(series_id(estimator, eta))
        if metric == "coverage":
            ax.axhline(nominal_level, color="black", linestyle="--", linewidth=0.8).set_gid(NOMINAL_LEVEL_ID)
        ax.set_title(scheme_id)
        ax.set_xlabel("n")
        ax.set_ylabel(title)
        ax.legend(fontsize="x-small")

    fig.tight_layout()
    return fig


def emit_plots(csv_path: str, out_dir: str, nominal_level: float = 0.95) -> List[str]:
    """
    Write efficiency.svg, scaled_mse.svg, coverage.svg and ci_width.svg.

    Args:
        csv_path: CSV written by emit_csv
        out_dir: Destination directory (created if missing)
        nominal_level: Reference line drawn on the coverage panels

    Returns:
        Paths of the written files

    Raises:
        MalformedCsv: if the CSV cannot be parsed
        OutputError: if a file cannot be read or written
    """
    rows = read_csv(csv_path)
    written = []
    with plt.rc_context(SVG_STYLE):
        for metric, filename, title in FIGURES:
            fig = _draw_figure(rows, metric, title, nominal_level)
            path = Path(out_dir) / filename
            try:
                path.parent.mkdir(parents=True, exist_ok=True)
                fig.savefig(path, format="svg", metadata={"Date": None})
            except OSError as e:
                raise OutputError(f"cannot write {path}: {e}") from e
            finally:
                plt.close(fig)
            written.append(str(path))
            logger.info("wrote %s", path)
    return written
