"""
Figures of a run report: prediction scatters, MSE bars and weight-norm bars
as SVG files, with the plotted values written alongside as CSV
"""

import logging
from pathlib import Path
from typing import List, Sequence

import matplotlib
import numpy as np
import polars as pl
from matplotlib.figure import Figure

from qklab.api_utils import ValidationError
from qklab.qk_types import PathOrStr
from qklab.tools.pipeline import ModelResult, RunReport
from qklab.tools.utils import logged

logger = logging.getLogger("qklab")

PREDICTIONS_CSV = "predictions.csv"
METRICS_CSV = "metrics.csv"
MSE_BARS = "mse_bars.svg"
WEIGHT_NORM_BARS = "weight_norm_bars.svg"

# Fixed svg ids and text as paths keep reruns byte identical
_SVG_RC = {"svg.hashsalt": "qklab", "svg.fonttype": "path"}
_SVG_METADATA = {"Date": None}


def scatter_filename(name: str) -> str:
    return f"scatter_{name.replace('@', '_a')}.svg"


def _save(figure: Figure, path: Path) -> Path:
    with matplotlib.rc_context(_SVG_RC):
        figure.savefig(path, format="svg", metadata=_SVG_METADATA)
    return path


def plot_scatter(result: ModelResult, path: Path) -> Path:
    """Prediction against ground truth with the identity line"""
    figure = Figure(figsize=(4.5, 4.5))
    ax = figure.add_subplot()
    ax.scatter(result.truth, result.predictions, s=12, alpha=0.7, color="tab:blue")
    if result.truth.size:
        low = float(min(result.truth.min(), result.predictions.min()))
        high = float(max(result.truth.max(), result.predictions.max()))
        ax.plot([low, high], [low, high], color="black", linestyle="--", linewidth=1)
    ax.set_xlabel("Ground truth")
    ax.set_ylabel("Prediction")
    ax.set_title(f"{result.name}  MSE {result.test_mse:.3g}")
    figure.tight_layout()
    return _save(figure, path)


def plot_bars(
    names: Sequence[str], values: Sequence[float], ylabel: str, path: Path
) -> Path:
    figure = Figure(figsize=(max(4.0, 0.8 * len(names) + 2.0), 4.0))
    ax = figure.add_subplot()
    positions = np.arange(len(names))
    ax.bar(positions, values, color="tab:orange")
    ax.set_xticks(positions)
    ax.set_xticklabels(names, rotation=45, ha="right")
    ax.set_ylabel(ylabel)
    ax.grid(True, axis="y", alpha=0.3)
    figure.tight_layout()
    return _save(figure, path)


def _metrics_frame(report: RunReport) -> pl.DataFrame:
    return pl.DataFrame(
        {
            "model": [r.name for r in report.models],
            "kernel": [r.kernel for r in report.models],
            "a_over_rb": [r.a_over_rb for r in report.models],
            "C": [r.C for r in report.models],
            "epsilon": [r.epsilon for r in report.models],
            "test_mse": [r.test_mse for r in report.models],
            "weight_norm": [r.weight_norm for r in report.models],
        },
        schema={
            "model": pl.Utf8,
            "kernel": pl.Utf8,
            "a_over_rb": pl.Float64,
            "C": pl.Float64,
            "epsilon": pl.Float64,
            "test_mse": pl.Float64,
            "weight_norm": pl.Float64,
        },
    )


def _predictions_frame(report: RunReport) -> pl.DataFrame:
    return pl.DataFrame(
        {
            "model": [r.name for r in report.models for _ in r.sample_ids],
            "sample_id": [i for r in report.models for i in r.sample_ids],
            "truth": np.concatenate([r.truth for r in report.models]),
            "prediction": np.concatenate([r.predictions for r in report.models]),
        },
        schema={
            "model": pl.Utf8,
            "sample_id": pl.Int64,
            "truth": pl.Float64,
            "prediction": pl.Float64,
        },
    )


@logged(log_time=True)
def emit_plots(
    report: RunReport, directory: PathOrStr, weight_norms: bool = False
) -> List[Path]:
    """
    Write one scatter per model, the MSE bar chart and optionally the
    weight-norm bar chart to ``directory`` with ``metrics.csv`` and
    ``predictions.csv`` holding the plotted values.

    Returns the written paths; an empty report writes nothing.

    Raises
    ------
    ValidationError
        ``directory`` cannot be written
    """
    if not report.models:
        logger.warning("Report has no models, no plots written")
        return []

    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ValidationError(f"Plot directory is not writable: {directory}") from exc

    written: List[Path] = []
    try:
        metrics = _metrics_frame(report)
        metrics.write_csv(directory / METRICS_CSV)
        written.append(directory / METRICS_CSV)
        _predictions_frame(report).write_csv(directory / PREDICTIONS_CSV)
        written.append(directory / PREDICTIONS_CSV)

        for result in report.models:
            if result.predictions.size:
                written.append(
                    plot_scatter(result, directory / scatter_filename(result.name))
                )
        names = metrics.get_column("model").to_list()
        written.append(
            plot_bars(names, metrics.get_column("test_mse").to_list(), "Test MSE",
                      directory / MSE_BARS)
        )
        if weight_norms:
            written.append(
                plot_bars(names, metrics.get_column("weight_norm").to_list(),
                          "Weight norm |w|^2", directory / WEIGHT_NORM_BARS)
            )
    except OSError as exc:
        raise ValidationError(f"Could not write plots to {directory}: {exc}") from exc
    return written
