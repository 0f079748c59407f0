"""
Tool for training an epsilon-SVR on a precomputed Gram matrix
"""

from pathlib import Path
from typing import Optional

from qklab.datasets import read_dataset_csv
from qklab.gram_cache import read_gram
from qklab.qk_types import SPLIT_TRAIN
from qklab.svr import (
    DEFAULT_C_GRID,
    DEFAULT_EPSILON_GRID,
    cross_validate,
    mse,
    predict_gram,
    save_model,
    train,
    weight_norm,
)
from qklab.tools.parsers import prepare_qklab_train_argparser, run_tool
from qklab.tools.utils import init_logging, limit_threads, logged_all

logger = init_logging()


@logged_all
def train_tool(
    dataset: Path,
    gram: Path,
    output: Path = Path("svr.model"),
    C: Optional[float] = None,
    epsilon: Optional[float] = None,
    k_folds: int = 5,
    tol: float = 1e-3,
    cv_seed: int = 0,
    standardize_labels: bool = False,
    threads: int = 1,
) -> None:
    """
    Train on the training split of ``dataset`` with the Gram at ``gram``.
    Missing C or epsilon are chosen by cross-validation over the default grids,
    with the given value as a single-point grid.
    """
    data = read_dataset_csv(dataset)
    train_index = data.split_index(SPLIT_TRAIN)
    train_ids = train_index.tolist()
    train_gram = read_gram(gram, train_ids, train_ids)
    labels = data.labels[train_index]

    if C is None or epsilon is None:
        selected = cross_validate(
            train_gram,
            labels,
            C_grid=DEFAULT_C_GRID if C is None else (C,),
            eps_grid=DEFAULT_EPSILON_GRID if epsilon is None else (epsilon,),
            k_folds=k_folds,
            seed=cv_seed,
            tol=tol,
            standardize=standardize_labels,
            threads=limit_threads(threads),
        )
        C, epsilon = selected.C, selected.epsilon
        print(f"Cross-validation selected C={C!r}, epsilon={epsilon!r}")

    model = train(
        train_gram,
        labels,
        C=C,
        epsilon=epsilon,
        tol=tol,
        standardize=standardize_labels,
    )
    save_model(model, output)
    status = "converged" if model.converged else "NOT converged"
    print(
        f"Trained SVR ({status}, {model.n_iter} iterations, KKT violation "
        f"{model.kkt_violation:.2e}, {len(model.support_indices)} support vectors)"
    )
    print(f"Train MSE {mse(predict_gram(model, train_gram), labels):.6g}")
    print(f"Weight norm {weight_norm(model, train_gram):.6g}")
    print(f"Wrote model to {output}")


def main():
    """Run the qklab train tool"""
    run_tool(prepare_qklab_train_argparser())


if __name__ == "__main__":
    main()
