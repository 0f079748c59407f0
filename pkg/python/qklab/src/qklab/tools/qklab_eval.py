"""
Tool for evaluating a trained model on the test split of a dataset
"""

from pathlib import Path
from typing import Optional

import polars as pl

from qklab.api_utils import ValidationError
from qklab.datasets import read_dataset_csv
from qklab.gram_cache import read_gram
from qklab.qk_types import SPLIT_TEST, SPLIT_TRAIN
from qklab.svr import load_model, mse, predict_gram, r2_score, weight_norm
from qklab.tools.parsers import prepare_qklab_eval_argparser, run_tool
from qklab.tools.utils import init_logging, logged, logged_all

logger = init_logging()


@logged(log_time=True)
def write_predictions(
    sample_ids, truth, predictions, output: Path
) -> Path:
    pl.DataFrame(
        {"sample_id": list(sample_ids), "truth": truth, "prediction": predictions},
        schema={"sample_id": pl.Int64, "truth": pl.Float64, "prediction": pl.Float64},
    ).write_csv(output)
    return output


@logged_all
def eval_tool(
    dataset: Path,
    model: Path,
    gram: Path,
    train_gram: Optional[Path] = None,
    output: Optional[Path] = None,
) -> None:
    """Print the test MSE and R^2 of ``model`` and optionally write predictions"""
    data = read_dataset_csv(dataset)
    svr = load_model(model)
    train_ids = data.split_index(SPLIT_TRAIN).tolist()
    test_index = data.split_index(SPLIT_TEST)
    if not test_index.size:
        raise ValidationError(f"{dataset} has no test samples")

    cross = read_gram(gram, test_index.tolist(), train_ids)
    predictions = predict_gram(svr, cross)
    truth = data.labels[test_index]
    print(f"Test MSE {mse(predictions, truth):.6g}")
    print(f"Test R^2 {r2_score(predictions, truth):.6g}")

    if train_gram is not None:
        square = read_gram(train_gram, train_ids, train_ids)
        print(f"Weight norm {weight_norm(svr, square):.6g}")

    if output is not None:
        write_predictions(test_index.tolist(), truth, predictions, output)
        print(f"Wrote predictions to {output}")


def main():
    """Run the qklab eval tool"""
    run_tool(prepare_qklab_eval_argparser())


if __name__ == "__main__":
    main()
