"""
Exceptions and small helpers shared across the qklab API
"""

from typing import Optional, Sequence

import numpy as np
import numpy.typing as npt


class QklabException(Exception):
    """Generic qklab API Exception"""

    #: Process exit code used by the command line tools
    exit_code: int = 1


class ValidationError(QklabException, ValueError):
    """An input violated a documented precondition"""

    exit_code = 2


class DimensionMismatchError(ValidationError):
    """Two operands do not share the required dimension"""


class QubitIndexError(ValidationError, IndexError):
    """A qubit index is outside ``1..n_qubits`` or two indices coincide"""


class IdxParseError(ValidationError):
    """An IDX file could not be parsed"""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class DigestMismatchError(ValidationError):
    """A model was used with a Gram matrix it was not trained on"""


class NumericalError(QklabException, ArithmeticError):
    """A numerical routine failed to reach its tolerance"""

    exit_code = 3


class PropagationError(NumericalError):
    """Krylov propagation did not converge and no dense fallback was allowed"""


class QuadratureError(NumericalError):
    """Adaptive quadrature did not reach the requested tolerance"""


class RefinementError(NumericalError):
    """BLP grid refinement reached its cap before converging"""

    def __init__(self, message: str, achieved: float):
        super().__init__(message)
        self.achieved = achieved


class EncodingError(NumericalError):
    """Encoding a feature vector (or one noise ensemble member) failed"""

    def __init__(
        self,
        message: str,
        sample_id: Optional[int] = None,
        member: Optional[int] = None,
    ):
        where = []
        if sample_id is not None:
            where.append(f"sample_id={sample_id}")
        if member is not None:
            where.append(f"member={member}")
        suffix = f" [{', '.join(where)}]" if where else ""
        super().__init__(f"{message}{suffix}")
        self.sample_id = sample_id
        self.member = member


class StageError(QklabException):
    """A pipeline stage failed. Wraps the original cause"""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 1)


def as_real_vector(
    values: Sequence[float], name: str = "values"
) -> npt.NDArray[np.float64]:
    """
    Convert ``values`` to a 1D float64 array, raising ValidationError if any
    entry is non-finite
    """
    array = np.asarray(values, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(array)):
        raise ValidationError(f"{name} contains non-finite entries")
    return array


def require_same_length(first: Sequence, second: Sequence, what: str) -> None:
    """Raise DimensionMismatchError unless both sequences have equal length"""
    if len(first) != len(second):
        raise DimensionMismatchError(
            f"{what}: length mismatch ({len(first)} != {len(second)})"
        )
