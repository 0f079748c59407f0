"""Main entry point for qklab tools"""
import argparse
from typing import Any

from qklab import __version__
from qklab.tools.parsers import (
    SubcommandHelpFormatter,
    prepare_qklab_eval_argparser,
    prepare_qklab_gen_argparser,
    prepare_qklab_gram_argparser,
    prepare_qklab_reproduce_argparser,
    prepare_qklab_selftest_argparser,
    prepare_qklab_train_argparser,
    run_tool,
)


def main() -> Any:
    """
    The core qklab tools function which assembles the argparser and executes the
    required qklab tool.
    """
    desc = (
        "**********      qklab      **********\n\n"
        "Quantum kernel regression: datasets, Gram matrices, SVR training and "
        "experiment reproduction"
    )

    parser = argparse.ArgumentParser(
        prog="qklab",
        description=desc,
        epilog="Example: qklab reproduce fig3 --output nm_out",
        formatter_class=SubcommandHelpFormatter,
    )
    parser.add_argument(
        "-v",
        "--version",
        action="version",
        version="qklab version: {}".format(__version__),
        help="Show qklab version and exit.",
    )
    parser.set_defaults(func=lambda **_: parser.print_help())

    root = parser.add_subparsers(title="sub-commands")

    # add sub-parsers to the root argparser
    prepare_qklab_gen_argparser(root)
    prepare_qklab_gram_argparser(root)
    prepare_qklab_train_argparser(root)
    prepare_qklab_eval_argparser(root)
    prepare_qklab_reproduce_argparser(root)
    prepare_qklab_selftest_argparser(root)

    # Run the tool
    return run_tool(parser)


if __name__ == "__main__":
    main()
