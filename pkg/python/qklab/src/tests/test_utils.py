"""
Testing qklab tool utilities
"""
import os
from pathlib import Path
from unittest.mock import patch

import pytest

from qklab.api_utils import ValidationError
from qklab.tools.utils import (
    LOCK_FILENAME,
    exclusive_output,
    is_disable_pbar,
    is_qklab_debug,
    limit_threads,
)


class TestLimitThreads:
    """Test clamping of worker thread counts"""

    @pytest.mark.parametrize("requested,expected", [(2, 2), (8, 4), (0, 4), (-1, 4)])
    def test_clamped_to_cores(self, requested: int, expected: int) -> None:
        with patch("os.cpu_count", return_value=4):
            assert limit_threads(requested) == expected

    def test_unknown_core_count(self) -> None:
        with patch("os.cpu_count", return_value=None):
            assert limit_threads(6) == 6
            assert limit_threads(0) == 4


class TestEnvironmentSwitches:
    """Test the QKLAB_PBAR and QKLAB_DEBUG switches"""

    @pytest.mark.parametrize(
        "value,disabled", [("0", True), ("1", False), ("x", False)]
    )
    def test_pbar(self, value: str, disabled: bool) -> None:
        with patch.dict(os.environ, {"QKLAB_PBAR": value}):
            assert is_disable_pbar() is disabled

    @pytest.mark.parametrize("value,debug", [("0", False), ("1", True), ("x", True)])
    def test_debug(self, value: str, debug: bool) -> None:
        with patch.dict(os.environ, {"QKLAB_DEBUG": value}):
            assert is_qklab_debug() is debug


class TestExclusiveOutput:
    """Test the output directory lock"""

    def test_lock_released(self, tmp_path: Path) -> None:
        output = tmp_path / "run"
        with exclusive_output(output) as directory:
            assert directory == output
            assert (output / LOCK_FILENAME).is_file()
        assert not (output / LOCK_FILENAME).exists()

    def test_second_holder_rejected(self, tmp_path: Path) -> None:
        with exclusive_output(tmp_path):
            with pytest.raises(ValidationError, match="locked by another run"):
                with exclusive_output(tmp_path):
                    pass
        assert not (tmp_path / LOCK_FILENAME).exists()
