"""
Tool for generating the benchmark and non-Markovianity datasets
"""

from pathlib import Path
from typing import Any, Optional

from qklab.datasets import nm_features_to_dataset, write_dataset_csv
from qklab.tools.config import TASK_BENCHMARK, load_config
from qklab.tools.parsers import prepare_qklab_gen_argparser, run_tool
from qklab.tools.pipeline import generate_dataset
from qklab.tools.utils import init_logging, limit_threads, logged_all

logger = init_logging()


@logged_all
def gen_dataset(
    task: str,
    output: Optional[Path] = None,
    raw: bool = False,
    config: Optional[Path] = None,
    preset_name: str = "desk",
    **overrides: Any,
) -> None:
    """Generate the ``task`` dataset and write it as CSV"""
    settings = load_config(config, preset_name, task=task, **overrides)
    if output is None:
        output = Path(f"{task}.csv")

    dataset = generate_dataset(settings, limit_threads(settings.threads))
    if task != TASK_BENCHMARK and not raw:
        dataset = nm_features_to_dataset(dataset, settings.d, settings.train_only_fit)

    write_dataset_csv(dataset, output)
    print(
        f"Wrote {dataset.n_samples} samples ({settings.n_train} train, "
        f"{settings.n_test} test, {dataset.dimension} features) to {output}"
    )


def main():
    """Run the qklab gen tool"""
    run_tool(prepare_qklab_gen_argparser())


if __name__ == "__main__":
    main()
