"""
Parsers for qklab tools.

Each parser should have set_defaults(func=tool) called where tool is the core function
of a qklab tool. These are commonly <verb>_tool (e.g. gram_tool, train_tool)
"""

import argparse
import sys
from pathlib import Path
from typing import Any, Optional

from qklab.tools.config import (
    ALL_KERNELS,
    EXPERIMENT_CHOICES,
    PRESETS,
    QUANTUM_KERNELS,
    TASKS,
)
from qklab.tools.utils import DEFAULT_THREADS, is_qklab_debug


class SubcommandHelpFormatter(
    argparse.RawDescriptionHelpFormatter,
    argparse.ArgumentDefaultsHelpFormatter,
):
    """
    Helper function to prettier print subcommand help. This removes some
    extra lines of output when a final command parser is not selected.
    """

    def _format_action(self, action):
        parts = super(SubcommandHelpFormatter, self)._format_action(action)
        if action.nargs == argparse.PARSER:
            parts = "\n".join(parts.split("\n")[1:])
        return parts


def exit_code_for(exc: BaseException) -> int:
    """2 for validation errors, 3 for numerical failures, 1 otherwise"""
    return getattr(exc, "exit_code", 1)


def run_tool(parser: argparse.ArgumentParser) -> Any:
    """Run the tool prepared by an argparser"""
    kwargs = vars(parser.parse_args())
    tool_func = kwargs.pop("func")
    try:
        return tool_func(**kwargs)
    except Exception as exc:
        if is_qklab_debug():
            raise exc
        print(f"\nqklab has encountered an error: '{exc}'", file=sys.stderr)
        print("\nFor detailed information set QKLAB_DEBUG=1", file=sys.stderr)
        exit(exit_code_for(exc))


def _new_parser(
    parent: Optional[argparse._SubParsersAction], name: str, desc: str, epilog: str
) -> argparse.ArgumentParser:
    if parent is None:
        return argparse.ArgumentParser(description=desc)
    return parent.add_parser(
        name=name,
        description=desc,
        epilog=epilog,
        formatter_class=SubcommandHelpFormatter,
    )


def _flag(group: argparse._ActionsContainer, name: str, help: str) -> None:
    """Boolean switch that leaves the config value alone when absent"""
    group.add_argument(name, action="store_const", const=True, default=None, help=help)


def add_config_arguments(
    parser: argparse.ArgumentParser, sweep: bool = True
) -> argparse._ArgumentGroup:
    """
    Flags mirroring ExperimentConfig fields. Unset flags keep the value from
    --config or the preset.
    """
    group = parser.add_argument_group("experiment configuration")
    group.add_argument(
        "-c", "--config", type=Path, default=None, help="key = value config file"
    )
    group.add_argument(
        "--preset",
        default="desk",
        choices=list(PRESETS),
        dest="preset_name",
        help="Base settings, 'full' (alias 'paper-scale') is the expensive run",
    )
    group.add_argument(
        "-d", "--dimension", type=int, dest="d", help="Feature dimension"
    )
    group.add_argument(
        "-M", "--ensemble-size", type=int, help="Noise ensemble size per sample"
    )
    group.add_argument("--n-train", type=int, help="Training samples")
    group.add_argument("--n-test", type=int, help="Test samples")
    group.add_argument("--seed", type=int, help="Dataset seed")
    group.add_argument("--theta-seed", type=int, help="Benchmark theta seed")
    group.add_argument("--noise-seed", type=int, help="Noise ensemble seed")
    group.add_argument("--cv-seed", type=int, help="Cross-validation fold seed")
    group.add_argument(
        "--a-over-rb",
        type=float,
        nargs="+" if sweep else None,
        help="Interatomic spacing in blockade radii"
        + (", several values run a sweep" if sweep else ""),
    )
    group.add_argument(
        "--backend",
        choices=["auto", "dense-eigen", "krylov"],
        help="Analog propagation backend",
    )
    group.add_argument(
        "-t",
        "--threads",
        type=int,
        default=DEFAULT_THREADS,
        help="Set the number of worker threads",
    )
    group.add_argument("--cache-dir", type=str, help="Gram and dataset cache directory")
    group.add_argument(
        "--idx-images", type=str, help="IDX image file for the benchmark"
    )
    group.add_argument(
        "--idx-labels", type=str, help="IDX label file for the benchmark"
    )
    _flag(group, "--normalize-noisy", "Rescale noisy kernels to unit diagonal")
    _flag(group, "--standardize-labels", "Train the SVR on standardised labels")
    _flag(group, "--train-only-fit", "Fit PCA and min-max on the training split only")
    _flag(group, "--sigma-detuning-2pi", "Read the detuning sigma in MHz (x 2 pi)")
    return group


#
# GEN
#
def prepare_qklab_gen_argparser(
    parent: Optional[argparse._SubParsersAction] = None,
) -> argparse.ArgumentParser:
    """Create an argument parser for the qklab gen tool"""

    _desc = """
    Generate a regression dataset as CSV: the ZZ benchmark on PCA-reduced images
    or the spin-boson non-Markovianity task (labels are converged BLP measures)
    """
    parser = _new_parser(
        parent, "gen", _desc, "Example: qklab gen nonmarkov -o nonmarkov.csv"
    )
    parser.add_argument("task", choices=list(TASKS), help="Dataset to generate")
    parser.add_argument(
        "-o", "--output", type=Path, default=None, help="Output CSV, default <task>.csv"
    )
    parser.add_argument(
        "--raw",
        action="store_true",
        help="Write the 20 raw dephasing features instead of the d reduced ones "
        "(nonmarkov only)",
    )
    add_config_arguments(parser)

    def run(**kwargs):
        from qklab.tools.qklab_gen import gen_dataset

        return gen_dataset(**kwargs)

    parser.set_defaults(func=run)

    return parser


#
# GRAM
#
def prepare_qklab_gram_argparser(
    parent: Optional[argparse._SubParsersAction] = None,
) -> argparse.ArgumentParser:
    """Create an argument parser for the qklab gram tool"""

    _desc = """
    Compute the training Gram matrix and the test x train cross Gram matrix of a
    dataset CSV and write them as QKGM files
    """
    parser = _new_parser(
        parent,
        "gram",
        _desc,
        "Example: qklab gram nonmarkov.csv --kernel analog --noisy -o grams/",
    )
    parser.add_argument("dataset", type=Path, help="Dataset CSV written by qklab gen")
    parser.add_argument(
        "-k", "--kernel", choices=list(ALL_KERNELS), required=True, help="Kernel kind"
    )
    parser.add_argument(
        "--noisy", action="store_true", help="Average over the noise ensemble"
    )
    parser.add_argument(
        "-o", "--output", type=Path, default=Path("."), help="Output directory"
    )
    add_config_arguments(parser, sweep=False)

    def run(**kwargs):
        from qklab.tools.qklab_gram import gram_tool

        return gram_tool(**kwargs)

    parser.set_defaults(func=run)

    return parser


#
# TRAIN
#
def prepare_qklab_train_argparser(
    parent: Optional[argparse._SubParsersAction] = None,
) -> argparse.ArgumentParser:
    """Create an argument parser for the qklab train tool"""

    _desc = """
    Train an epsilon-SVR on a training Gram matrix. Without --C and --epsilon the
    hyperparameters are selected by k-fold cross-validation
    """
    parser = _new_parser(
        parent,
        "train",
        _desc,
        "Example: qklab train nonmarkov.csv grams/train.qkgm -o analog.model",
    )
    parser.add_argument("dataset", type=Path, help="Dataset CSV written by qklab gen")
    parser.add_argument("gram", type=Path, help="Training Gram QKGM file")
    parser.add_argument(
        "-o", "--output", type=Path, default=Path("svr.model"), help="Model file"
    )
    parser.add_argument("-C", dest="C", type=float, default=None, help="Box constraint")
    parser.add_argument(
        "-e", "--epsilon", type=float, default=None, help="Tube half width"
    )
    parser.add_argument("--k-folds", type=int, default=5, help="Cross-validation folds")
    parser.add_argument("--tol", type=float, default=1e-3, help="KKT tolerance")
    parser.add_argument("--cv-seed", type=int, default=0, help="Fold seed")
    parser.add_argument(
        "--standardize-labels", action="store_true", help="Train on standardised labels"
    )
    parser.add_argument(
        "-t",
        "--threads",
        default=DEFAULT_THREADS,
        type=int,
        help="Set the number of cross-validation threads",
    )

    def run(**kwargs):
        from qklab.tools.qklab_train import train_tool

        return train_tool(**kwargs)

    parser.set_defaults(func=run)

    return parser


#
# EVAL
#
def prepare_qklab_eval_argparser(
    parent: Optional[argparse._SubParsersAction] = None,
) -> argparse.ArgumentParser:
    """Create an argument parser for the qklab eval tool"""

    _desc = """
    Predict the test split of a dataset with a trained model and a test x train
    cross Gram matrix, reporting MSE and R^2
    """
    parser = _new_parser(
        parent,
        "eval",
        _desc,
        "Example: qklab eval nonmarkov.csv analog.model grams/test.qkgm",
    )
    parser.add_argument("dataset", type=Path, help="Dataset CSV written by qklab gen")
    parser.add_argument("model", type=Path, help="Model file written by qklab train")
    parser.add_argument("gram", type=Path, help="Test x train cross Gram QKGM file")
    parser.add_argument(
        "--train-gram",
        type=Path,
        default=None,
        help="Training Gram QKGM file, reports the weight norm when given",
    )
    parser.add_argument(
        "-o", "--output", type=Path, default=None, help="Predictions CSV"
    )

    def run(**kwargs):
        from qklab.tools.qklab_eval import eval_tool

        return eval_tool(**kwargs)

    parser.set_defaults(func=run)

    return parser


#
# REPRODUCE
#
def prepare_qklab_reproduce_argparser(
    parent: Optional[argparse._SubParsersAction] = None,
) -> argparse.ArgumentParser:
    """Create an argument parser for the qklab reproduce tool"""

    _desc = """
    Run an experiment end to end: fig2 (benchmark), fig3 (nonmarkov), fig4
    (spacing-mse, spacing sweep MSE) or fig5 (spacing-norm, spacing sweep weight
    norms). Outputs the report, models, CSVs and SVG figures under --output
    """
    parser = _new_parser(
        parent, "reproduce", _desc, "Example: qklab reproduce fig3 -o nm_out"
    )
    parser.add_argument(
        "experiment",
        choices=list(EXPERIMENT_CHOICES),
        help="Experiment to reproduce, descriptive names are aliases",
    )
    parser.add_argument(
        "-o", "--output", type=str, dest="output_dir", default=None,
        help="Output directory, default from the config",
    )
    group = add_config_arguments(parser)
    group.add_argument(
        "--kernels", nargs="+", choices=list(ALL_KERNELS), help="Kernel kinds to train"
    )
    group.add_argument(
        "--noisy-kernels",
        nargs="*",
        choices=list(QUANTUM_KERNELS),
        help="Quantum kernels also trained with noise",
    )

    def run(**kwargs):
        from qklab.tools.qklab_reproduce import reproduce

        return reproduce(**kwargs)

    parser.set_defaults(func=run)

    return parser


#
# SELFTEST
#
def prepare_qklab_selftest_argparser(
    parent: Optional[argparse._SubParsersAction] = None,
) -> argparse.ArgumentParser:
    """Create an argument parser for the qklab selftest tool"""

    _desc = """
    Run the fast numerical oracle checks: noisy CNOT identity and fidelity, special
    functions, dephasing closed form vs quadrature, optimal pair trace distance,
    BLP refinement, propagation backends and noisy encoding rank
    """
    parser = _new_parser(parent, "selftest", _desc, "Example: qklab selftest")
    parser.add_argument(
        "--skip-blp", action="store_true", help="Skip the slower BLP refinement check"
    )

    def run(**kwargs):
        from qklab.tools.qklab_selftest import selftest

        return selftest(**kwargs)

    parser.set_defaults(func=run)

    return parser
