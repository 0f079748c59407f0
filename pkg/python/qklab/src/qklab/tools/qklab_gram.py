"""
Tool for computing the training and cross Gram matrices of a dataset
"""

from pathlib import Path
from typing import Any, Optional

from qklab.datasets import read_dataset_csv
from qklab.gram_cache import write_gram
from qklab.kernels import cross_gram, gram, gram_summary, is_psd
from qklab.qk_types import SPLIT_TEST, SPLIT_TRAIN, KernelKind
from qklab.tools.config import load_config
from qklab.tools.parsers import prepare_qklab_gram_argparser, run_tool
from qklab.tools.pipeline import kernel_spec
from qklab.tools.utils import init_logging, limit_threads, logged_all

logger = init_logging()

TRAIN_GRAM = "train.qkgm"
TEST_GRAM = "test.qkgm"


@logged_all
def gram_tool(
    dataset: Path,
    kernel: str,
    noisy: bool = False,
    output: Path = Path("."),
    a_over_rb: Optional[float] = None,
    config: Optional[Path] = None,
    preset_name: str = "desk",
    **overrides: Any,
) -> None:
    """
    Write ``train.qkgm`` (train x train) and, when the dataset has a test split,
    ``test.qkgm`` (test x train) to ``output``
    """
    data = read_dataset_csv(dataset)
    # The dataset fixes the dimension
    overrides["d"] = data.dimension
    if a_over_rb is not None:
        overrides["a_over_rb"] = (a_over_rb,)
    settings = load_config(config, preset_name, **overrides)
    threads = limit_threads(settings.threads)
    spec = kernel_spec(settings, KernelKind.from_label(kernel), noisy)

    train_index = data.split_index(SPLIT_TRAIN)
    test_index = data.split_index(SPLIT_TEST)
    output.mkdir(parents=True, exist_ok=True)

    train_gram = gram(
        data.features[train_index], spec, train_index.tolist(), threads=threads
    )
    path = write_gram(train_gram, output / TRAIN_GRAM)
    summary = gram_summary(train_gram)
    print(
        f"{spec.label}: wrote {summary['rows']}x{summary['cols']} Gram to {path} "
        f"(digest {summary['digest'][:12]}, min eigenvalue "
        f"{summary['min_eigenvalue']:.3e})"
    )
    if not is_psd(train_gram):
        logger.warning(f"Training Gram {path} is not positive semidefinite")
        print(f"Warning: training Gram {path} is not positive semidefinite")

    if test_index.size:
        test_gram = cross_gram(
            data.features[test_index],
            data.features[train_index],
            spec,
            test_index.tolist(),
            train_index.tolist(),
            threads=threads,
        )
        path = write_gram(test_gram, output / TEST_GRAM)
        rows, cols = test_gram.shape
        print(f"{spec.label}: wrote {rows}x{cols} Gram to {path}")


def main():
    """Run the qklab gram tool"""
    run_tool(prepare_qklab_gram_argparser())


if __name__ == "__main__":
    main()
