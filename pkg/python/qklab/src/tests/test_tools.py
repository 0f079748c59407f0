"""
Testing qklab tools
"""
import argparse
from pathlib import Path
from typing import Callable, Dict, List
from unittest.mock import Mock, patch

import polars as pl
import pytest

import qklab
from qklab.api_utils import NumericalError, ValidationError
from qklab.datasets import read_dataset_csv
from qklab.gram_cache import read_gram
from qklab.svr import load_model
from qklab.tools import main, parsers


def assert_exit_code(func: Callable, func_kwargs: Dict, exit_code: int = 0) -> None:
    """Assert that a function returns the given SystemExit exit code"""
    try:
        func(**func_kwargs)
    except SystemExit as exc:
        assert exc.code == exit_code


def run_cli(args: List[str]) -> None:
    with patch("argparse._sys.argv", ["qklab"] + args):
        main.main()


class TestQklabTools:
    """Test the qklab tools interface"""

    @patch("qklab.tools.main.run_tool")
    def test_main_calls_run(self, m_run_tool: Mock) -> None:
        """Assert that main calls run_tool and that it returns to main"""
        m_run_tool.return_value = "_return_value"
        return_value = main.main()
        m_run_tool.assert_called()
        assert return_value == "_return_value"

    @pytest.mark.parametrize(
        "error,exit_code",
        [
            (Exception("Dummy Error String"), 1),
            (ValidationError("Dummy Error String"), 2),
            (NumericalError("Dummy Error String"), 3),
        ],
    )
    def test_run_tool_debug_env(
        self,
        error: Exception,
        exit_code: int,
        capsys: pytest.CaptureFixture,
        monkeypatch: pytest.MonkeyPatch,
    ) -> None:
        """Assert that exceptions are printed nicely without QKLAB_DEBUG"""

        def _func() -> None:
            raise error

        parser = argparse.ArgumentParser()
        parser.set_defaults(func=_func)

        with monkeypatch.context() as mkp:
            mkp.setenv("QKLAB_DEBUG", "0")
            mkp.setattr("argparse._sys.argv", ["_raises_an_exception"])
            with pytest.raises(SystemExit) as exc_info:
                parsers.run_tool(parser)
        assert exc_info.value.code == exit_code

        error_str: str = capsys.readouterr().err
        assert "QKLAB_DEBUG=1" in error_str
        assert "Dummy Error String" in error_str

    def test_run_tool_raises(self, monkeypatch: pytest.MonkeyPatch) -> None:
        """Assert that exceptions are raised if QKLAB_DEBUG is set"""

        def _func() -> None:
            raise ValidationError("Dummy Error String")

        parser = argparse.ArgumentParser()
        parser.set_defaults(func=_func)

        with monkeypatch.context() as mkp:
            mkp.setenv("QKLAB_DEBUG", "1")
            mkp.setattr("argparse._sys.argv", ["_raises_an_exception"])
            with pytest.raises(ValidationError, match="Dummy Error String"):
                parsers.run_tool(parser)

    def test_qklab_version_argument(self, capsys: pytest.CaptureFixture) -> None:
        """Assert that qklab has a --version argument"""
        with patch("argparse._sys.argv", ["qklab", "--version"]):
            assert_exit_code(main.main, {}, 0)

        assert f"qklab version: {qklab.__version__}" in capsys.readouterr().out.lower()

    @pytest.mark.parametrize(
        "command", ["gen", "gram", "train", "eval", "reproduce", "selftest"]
    )
    def test_tool_exists(self, command: str) -> None:
        """Assert that a qklab tool exists"""
        with patch("argparse._sys.argv", ["qklab", command, "--help"]):
            assert_exit_code(main.main, {}, 0)

    @pytest.mark.parametrize("name", ["fig2", "fig3", "fig4", "fig5"])
    def test_figure_experiment_names(self, name: str) -> None:
        """Assert that the figure-numbered experiment names parse"""
        args = parsers.prepare_qklab_reproduce_argparser().parse_args([name])
        assert args.experiment == name

    @pytest.mark.parametrize("name,weight_norm_plot", [("fig4", None), ("fig5", True)])
    def test_reproduce_figure_name(
        self, tmp_path: Path, name: str, weight_norm_plot
    ) -> None:
        """Assert that a figure name runs the matching experiment layout"""
        with patch("qklab.tools.qklab_reproduce.run_pipeline") as run, patch(
            "qklab.tools.qklab_reproduce.dump_config"
        ), patch("qklab.tools.qklab_reproduce.print_summary"):
            run_cli(["reproduce", name, "-o", str(tmp_path)])
        settings = run.call_args.args[0]
        assert settings.a_over_rb == (0.95, 1.0, 1.05, 1.1)
        assert settings.task == "nonmarkov"
        assert run.call_args.kwargs["weight_norm_plot"] is weight_norm_plot

    def test_unknown_experiment(self) -> None:
        """Assert that argparse rejects an unknown experiment name"""
        with patch("argparse._sys.argv", ["qklab", "reproduce", "everything"]):
            assert_exit_code(main.main, {}, 2)

    def test_missing_dataset_exit_code(
        self, tmp_path: Path, monkeypatch: pytest.MonkeyPatch
    ) -> None:
        """Assert that a validation failure exits with code 2"""
        monkeypatch.setenv("QKLAB_DEBUG", "0")
        paths = [str(tmp_path / name) for name in ("a.csv", "m", "g")]
        args = ["eval"] + paths
        with patch("argparse._sys.argv", ["qklab"] + args):
            assert_exit_code(main.main, {}, 2)

    def test_gen_dispatch(self) -> None:
        """Assert that config flags reach the gen tool as overrides"""
        with patch("qklab.tools.qklab_gen.gen_dataset") as gen:
            run_cli(
                ["gen", "benchmark", "-d", "4", "--n-train", "7", "--train-only-fit"]
            )
        kwargs = gen.call_args.kwargs
        assert kwargs["task"] == "benchmark"
        assert kwargs["d"] == 4
        assert kwargs["n_train"] == 7
        assert kwargs["train_only_fit"] is True
        assert kwargs["normalize_noisy"] is None
        assert kwargs["preset_name"] == "desk"

    def test_reproduce_dispatch(self) -> None:
        """Assert that a spacing sweep reaches the reproduce tool"""
        with patch("qklab.tools.qklab_reproduce.reproduce") as reproduce:
            run_cli(
                ["reproduce", "spacing-mse", "--a-over-rb", "0.9", "1.1", "-M", "8"]
            )
        kwargs = reproduce.call_args.kwargs
        assert kwargs["experiment"] == "spacing-mse"
        assert kwargs["a_over_rb"] == [0.9, 1.1]
        assert kwargs["ensemble_size"] == 8


class TestToolRoundTrip:
    """Test gen, gram, train and eval through the command line"""

    @pytest.mark.parametrize("kernel", ["rbf", "digital"])
    def test_round_trip(
        self, kernel: str, tmp_path: Path, capsys: pytest.CaptureFixture
    ) -> None:
        dataset = tmp_path / "benchmark.csv"
        grams = tmp_path / "grams"
        model = tmp_path / "svr.model"
        predictions = tmp_path / "predictions.csv"

        run_cli(
            ["gen", "benchmark", "-o", str(dataset), "-d", "3"]
            + ["--n-train", "10", "--n-test", "4", "-t", "1"]
        )
        data = read_dataset_csv(dataset)
        assert data.n_samples == 14 and data.dimension == 3

        run_cli(["gram", str(dataset), "-k", kernel, "-o", str(grams), "-t", "1"])
        train_ids = data.split_index("train").tolist()
        train_gram = read_gram(grams / "train.qkgm", train_ids, train_ids)
        assert train_gram.shape == (10, 10)

        run_cli(["train", str(dataset), str(grams / "train.qkgm"), "-o", str(model)])
        assert load_model(model).kernel_digest == train_gram.config_digest

        run_cli(
            ["eval", str(dataset), str(model), str(grams / "test.qkgm")]
            + ["--train-gram", str(grams / "train.qkgm"), "-o", str(predictions)]
        )
        out = capsys.readouterr().out
        assert "Cross-validation selected" in out
        assert "Test MSE" in out and "Weight norm" in out
        frame = pl.read_csv(predictions)
        assert frame.columns == ["sample_id", "truth", "prediction"]
        assert frame.height == 4

    def test_fixed_hyperparameters(
        self, dataset_csv: Path, tmp_path: Path, capsys: pytest.CaptureFixture
    ) -> None:
        grams = tmp_path / "grams"
        run_cli(["gram", str(dataset_csv), "-k", "rbf", "-o", str(grams)])
        run_cli(
            ["train", str(dataset_csv), str(grams / "train.qkgm")]
            + ["-C", "2.5", "-e", "0.05", "-o", str(tmp_path / "m.model")]
        )
        assert "Cross-validation" not in capsys.readouterr().out
        svr = load_model(tmp_path / "m.model")
        assert (svr.C, svr.epsilon) == (2.5, 0.05)

    def test_eval_with_wrong_gram(
        self, dataset_csv: Path, tmp_path: Path, monkeypatch: pytest.MonkeyPatch
    ) -> None:
        """A model evaluated with another kernel's training Gram exits with code 2"""
        monkeypatch.setenv("QKLAB_DEBUG", "0")
        run_cli(["gram", str(dataset_csv), "-k", "rbf", "-o", str(tmp_path / "rbf")])
        digital_dir = str(tmp_path / "dig")
        run_cli(["gram", str(dataset_csv), "-k", "digital", "-o", digital_dir])
        model = tmp_path / "m.model"
        run_cli(
            ["train", str(dataset_csv), str(tmp_path / "rbf" / "train.qkgm")]
            + ["-C", "1", "-e", "0.1", "-o", str(model)]
        )
        args = [
            "eval",
            str(dataset_csv),
            str(model),
            str(tmp_path / "rbf" / "test.qkgm"),
            "--train-gram",
            str(tmp_path / "dig" / "train.qkgm"),
        ]
        with patch("argparse._sys.argv", ["qklab"] + args):
            assert_exit_code(main.main, {}, 2)
