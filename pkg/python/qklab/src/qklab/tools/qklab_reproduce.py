"""
Tool for reproducing a named experiment end to end
"""

import dataclasses
from pathlib import Path
from typing import Any, Optional

from qklab.tools.config import (
    EXPERIMENT_SPACING_NORM,
    dump_config,
    experiment_config,
    load_config,
    resolve_experiment,
)
from qklab.tools.parsers import prepare_qklab_reproduce_argparser, run_tool
from qklab.tools.pipeline import REPORT_FILENAME, RunReport, run_pipeline
from qklab.tools.utils import init_logging, logged_all

logger = init_logging()

CONFIG_FILENAME = "config.txt"


def print_summary(report: RunReport) -> None:
    print(
        f"{'model':<28} {'C':>8} {'eps':>6} {'test MSE':>11} "
        f"{'R^2':>8} {'|w|^2':>11}"
    )
    for result in report.models:
        print(
            f"{result.name:<28} {result.C:>8g} {result.epsilon:>6g} "
            f"{result.test_mse:>11.4e} {result.test_r2:>8.4f} "
            f"{result.weight_norm:>11.4e}"
        )


@logged_all
def reproduce(
    experiment: str,
    config: Optional[Path] = None,
    preset_name: str = "desk",
    **overrides: Any,
) -> None:
    """
    Run ``experiment`` (``fig2`` to ``fig5`` or a descriptive name) and print
    its model summary
    """
    settings = experiment_config(
        load_config(config, preset_name, **overrides), experiment
    )
    if overrides.get("output_dir") is None:
        settings = dataclasses.replace(
            settings, output_dir=str(Path(settings.output_dir) / experiment)
        )

    spacing_norm = resolve_experiment(experiment) == EXPERIMENT_SPACING_NORM
    weight_norm_plot = True if spacing_norm else None
    report = run_pipeline(settings, weight_norm_plot=weight_norm_plot)
    dump_config(settings, settings.output_path / CONFIG_FILENAME)
    print_summary(report)
    print(f"Wrote {REPORT_FILENAME} and figures to {settings.output_path}")


def main():
    """Run the qklab reproduce tool"""
    run_tool(prepare_qklab_reproduce_argparser())


if __name__ == "__main__":
    main()
