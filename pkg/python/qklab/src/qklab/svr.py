"""
Epsilon-insensitive support vector regression on precomputed Gram matrices
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import numpy.typing as npt
import scipy.linalg

from qklab.api_utils import (
    DigestMismatchError,
    DimensionMismatchError,
    ValidationError,
    as_real_vector,
    require_same_length,
)
from qklab.qk_types import GramMatrix, PathOrStr, SvrModel
from qklab.tools.utils import DEFAULT_THREADS, logged

logger = logging.getLogger("qklab")

DEFAULT_C = 1.0
DEFAULT_EPSILON = 0.1
DEFAULT_TOL = 1e-3
MAX_ITER_PER_SAMPLE = 100_000

DEFAULT_C_GRID = (0.1, 1.0, 10.0, 100.0)
DEFAULT_EPSILON_GRID = (0.01, 0.1)

#: Gram matrices with lambda_min below -PSD_REJECT * lambda_max are rejected
PSD_REJECT = 1e-6
DIAGONAL_SHIFT_FLOOR = 1e-10

# Curvature floor of a two-variable step
_TAU = 1e-12

MODEL_FORMAT = "qklab-svr 1"


def _square_values(gram: GramMatrix) -> np.ndarray:
    values = gram.values
    if values.ndim != 2 or values.shape[0] != values.shape[1]:
        raise ValidationError(f"SVR training needs a square Gram, got {values.shape}")
    return values


def _guard_spectrum(kernel: np.ndarray) -> Tuple[np.ndarray, float]:
    """Shift an indefinite kernel by lambda I, rejecting clearly non-PSD input"""
    eigenvalues = scipy.linalg.eigvalsh(kernel)
    smallest, largest = float(eigenvalues[0]), float(eigenvalues[-1])
    if smallest < -PSD_REJECT * max(largest, 0.0):
        raise ValidationError(
            f"Gram matrix is not positive semidefinite "
            f"(lambda_min={smallest:.3e}, lambda_max={largest:.3e})"
        )
    if smallest >= 0.0:
        return kernel, 0.0
    shift = -smallest + DIAGONAL_SHIFT_FLOOR
    logger.warning(f"Shifting Gram diagonal by {shift:.3e} (lambda_min={smallest:.3e})")
    return kernel + shift * np.eye(kernel.shape[0]), shift


@dataclass
class _SmoState:
    """The 2N-variable dual in minimisation form

    min 1/2 a^T Q a + p^T a  s.t.  z^T a = 0, 0 <= a <= C

    with a = (alpha, alpha*), z = (+1, -1), Q_st = z_s z_t K and
    p = (eps - y, eps + y).
    """

    q: np.ndarray
    p: np.ndarray
    z: np.ndarray
    C: float
    a: np.ndarray = field(init=False)
    gradient: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        self.a = np.zeros_like(self.p)
        self.gradient = self.p.copy()

    def objective(self) -> float:
        return 0.5 * float(self.a @ (self.gradient + self.p))

    def violating_pair(self) -> Tuple[int, int, float]:
        """Maximal violating pair (i, j) and its violation m - M"""
        score = -self.z * self.gradient
        positive = self.z > 0
        up = np.where(positive, self.a < self.C, self.a > 0.0)
        low = np.where(positive, self.a > 0.0, self.a < self.C)
        if not up.any() or not low.any():
            return -1, -1, 0.0
        i = int(np.flatnonzero(up)[np.argmax(score[up])])
        j = int(np.flatnonzero(low)[np.argmin(score[low])])
        return i, j, float(score[i] - score[j])

    def update(self, i: int, j: int) -> None:
        """Optimise a_i, a_j analytically, clipped to the box and the hyperplane"""
        a, C, q, G = self.a, self.C, self.q, self.gradient
        old_i, old_j = a[i], a[j]
        if self.z[i] != self.z[j]:
            quad = max(q[i, i] + q[j, j] + 2.0 * q[i, j], _TAU)
            delta = (-G[i] - G[j]) / quad
            diff = a[i] - a[j]
            a[i] += delta
            a[j] += delta
            if diff > 0.0:
                if a[j] < 0.0:
                    a[j], a[i] = 0.0, diff
            elif a[i] < 0.0:
                a[i], a[j] = 0.0, -diff
            if diff > 0.0:
                if a[i] > C:
                    a[i], a[j] = C, C - diff
            elif a[j] > C:
                a[j], a[i] = C, C + diff
        else:
            quad = max(q[i, i] + q[j, j] - 2.0 * q[i, j], _TAU)
            delta = (G[i] - G[j]) / quad
            total = a[i] + a[j]
            a[i] -= delta
            a[j] += delta
            if total > C:
                if a[i] > C:
                    a[i], a[j] = C, total - C
            elif a[j] < 0.0:
                a[j], a[i] = 0.0, total
            if total > C:
                if a[j] > C:
                    a[j], a[i] = C, total - C
            elif a[i] < 0.0:
                a[i], a[j] = 0.0, total
        G += q[:, i] * (a[i] - old_i) + q[:, j] * (a[j] - old_j)

    def bias(self) -> float:
        """Offset from the free variables, else the midpoint of the feasible interval"""
        z_gradient = self.z * self.gradient
        at_upper = self.a >= self.C
        at_lower = self.a <= 0.0
        free = ~(at_upper | at_lower)
        if free.any():
            rho = float(z_gradient[free].mean())
        else:
            positive = self.z > 0
            upper_set = (at_upper & ~positive) | (at_lower & positive)
            lower_set = (at_upper & positive) | (at_lower & ~positive)
            ub = float(z_gradient[upper_set].min()) if upper_set.any() else math.inf
            lb = float(z_gradient[lower_set].max()) if lower_set.any() else -math.inf
            rho = 0.5 * (ub + lb)
        return -rho


@logged(log_time=True)
def train(
    gram: GramMatrix,
    y: Sequence[float],
    C: float = DEFAULT_C,
    epsilon: float = DEFAULT_EPSILON,
    tol: float = DEFAULT_TOL,
    max_iter: Optional[int] = None,
    standardize: bool = False,
    callback: Optional[Callable[[int, float], None]] = None,
) -> SvrModel:
    """
    Solve the epsilon-SVR dual by sequential minimal optimisation.

    Each step updates the maximal KKT-violating pair of the 2N-variable dual
    analytically; the solver stops when the violation is at most ``tol`` or
    after ``max_iter`` pair updates (reported on the model, not raised).

    Parameters
    ----------
    gram : GramMatrix
        Square training Gram. Slightly indefinite spectra are shifted by
        lambda I, recorded as ``diagonal_shift``
    y : sequence of float
        Finite training labels
    C : float
        Box constraint, > 0
    epsilon : float
        Tube half width, >= 0
    tol : float
        Stopping tolerance on the maximal KKT violation
    max_iter : int, optional
        Pair update limit, default 100000 N
    standardize : bool
        Train on (y - mean) / std and undo the scaling in predictions
    callback : callable, optional
        Called as callback(iteration, dual objective) after every update

    Returns
    -------
    SvrModel

    Raises
    ------
    ValidationError
        Non-square or clearly indefinite Gram, bad labels or hyperparameters
    """
    kernel = _square_values(gram)
    labels = as_real_vector(y, "labels")
    require_same_length(labels, kernel, "SVR labels and Gram rows")
    if not (math.isfinite(C) and C > 0.0):
        raise ValidationError(f"C must be positive, got {C}")
    if not (math.isfinite(epsilon) and epsilon >= 0.0):
        raise ValidationError(f"epsilon must be >= 0, got {epsilon}")
    if not tol > 0.0:
        raise ValidationError(f"tol must be positive, got {tol}")

    n = labels.shape[0]
    offset, scale = 0.0, 1.0
    if standardize:
        offset = float(labels.mean())
        spread = float(labels.std())
        scale = spread if spread > 0.0 else 1.0
        labels = (labels - offset) / scale
    if max_iter is None:
        max_iter = MAX_ITER_PER_SAMPLE * n

    kernel, shift = _guard_spectrum(np.array(kernel, dtype=np.float64))
    z = np.concatenate([np.ones(n), -np.ones(n)])
    tiled = np.block([[kernel, kernel], [kernel, kernel]])
    state = _SmoState(
        q=np.outer(z, z) * tiled,
        p=np.concatenate([epsilon - labels, epsilon + labels]),
        z=z,
        C=float(C),
    )

    n_iter = 0
    violation = 0.0
    while True:
        i, j, violation = state.violating_pair()
        if i < 0 or violation <= tol or n_iter >= max_iter:
            break
        state.update(i, j)
        n_iter += 1
        if callback is not None:
            callback(n_iter, -state.objective())

    converged = violation <= tol or n < 1
    if not converged:
        logger.warning(
            f"SMO stopped after {n_iter} updates with KKT violation "
            f"{violation:.3e} > {tol:.1e}"
        )

    beta = state.a[:n] - state.a[n:]
    return SvrModel(
        beta=beta,
        bias=state.bias(),
        support_indices=tuple(int(k) for k in np.flatnonzero(beta != 0.0)),
        C=float(C),
        epsilon=float(epsilon),
        kernel_digest=gram.config_digest,
        diagonal_shift=shift,
        kkt_violation=max(violation, 0.0),
        converged=converged,
        n_iter=n_iter,
        label_offset=offset,
        label_scale=scale,
    )


def predict(model: SvrModel, cross_gram_row: Sequence[float]) -> float:
    """f(x) = sum_j beta_j k(x, x_j) + b"""
    row = as_real_vector(cross_gram_row, "cross Gram row")
    if row.shape[0] != model.n_train:
        raise DimensionMismatchError(
            f"Cross Gram row has {row.shape[0]} entries, model has {model.n_train}"
        )
    value = float(model.beta @ row) + model.bias
    return value * model.label_scale + model.label_offset


def predict_gram(model: SvrModel, gram: GramMatrix) -> npt.NDArray[np.float64]:
    """Predictions for every row of a (test x train) Gram"""
    if gram.shape[1] != model.n_train:
        raise DimensionMismatchError(
            f"Gram has {gram.shape[1]} columns, model has {model.n_train}"
        )
    values = gram.values @ model.beta + model.bias
    return values * model.label_scale + model.label_offset


def weight_norm(model: SvrModel, gram: GramMatrix) -> float:
    """
    Feature-space weight norm |w|^2 = beta^T K beta on the training Gram.

    Raises
    ------
    DigestMismatchError
        ``gram`` is not the matrix the model was trained on
    """
    if gram.config_digest != model.kernel_digest:
        raise DigestMismatchError(
            f"Model was trained on Gram {model.kernel_digest.hex()[:12]}, "
            f"got {gram.digest_hex[:12]}"
        )
    kernel = _square_values(gram)
    if kernel.shape[0] != model.n_train:
        raise DimensionMismatchError("Gram size does not match the model")
    value = float(model.beta @ kernel @ model.beta)
    if -1e-10 < value < 0.0:
        value = 0.0
    return value


def dual_objective(
    beta: npt.ArrayLike, kernel: npt.ArrayLike, y: Sequence[float], epsilon: float
) -> float:
    """-1/2 beta^T K beta - epsilon sum |beta_j| + sum y_j beta_j"""
    coefficients = as_real_vector(beta, "beta")
    labels = as_real_vector(y, "labels")
    matrix = np.asarray(kernel, dtype=np.float64)
    require_same_length(coefficients, labels, "beta and labels")
    return float(
        -0.5 * coefficients @ matrix @ coefficients
        - epsilon * np.abs(coefficients).sum()
        + labels @ coefficients
    )


def mse(predictions: Sequence[float], ground_truth: Sequence[float]) -> float:
    """Mean squared error"""
    first = as_real_vector(predictions, "predictions")
    second = as_real_vector(ground_truth, "ground truth")
    require_same_length(first, second, "mse")
    if first.shape[0] < 1:
        raise ValidationError("mse needs at least one value")
    return float(np.mean((first - second) ** 2))


def r2_score(predictions: Sequence[float], ground_truth: Sequence[float]) -> float:
    """Coefficient of determination 1 - SS_res / SS_tot"""
    first = as_real_vector(predictions, "predictions")
    second = as_real_vector(ground_truth, "ground truth")
    require_same_length(first, second, "r2_score")
    if first.shape[0] < 1:
        raise ValidationError("r2_score needs at least one value")
    total = float(np.sum((second - second.mean()) ** 2))
    residual = float(np.sum((first - second) ** 2))
    if total == 0.0:
        return 1.0 if residual == 0.0 else -math.inf
    return 1.0 - residual / total


@dataclass(frozen=True)
class CvResult:
    """Grid search outcome"""

    C: float
    epsilon: float
    #: Mean validation MSE per (C, epsilon) cell
    scores: Dict[Tuple[float, float], float]


def fold_assignment(n: int, k_folds: int, seed: int) -> List[np.ndarray]:
    """Seeded permutation of 0..n-1 split into k nearly equal folds"""
    if k_folds < 2:
        raise ValidationError(f"k_folds must be >= 2, got {k_folds}")
    if k_folds > n:
        raise ValidationError(f"k_folds={k_folds} exceeds the {n} training samples")
    permutation = np.random.default_rng(seed).permutation(n)
    return [np.sort(fold) for fold in np.array_split(permutation, k_folds)]


@logged(log_time=True)
def cross_validate(
    gram: GramMatrix,
    y: Sequence[float],
    C_grid: Sequence[float] = DEFAULT_C_GRID,
    eps_grid: Sequence[float] = DEFAULT_EPSILON_GRID,
    k_folds: int = 5,
    seed: int = 0,
    tol: float = DEFAULT_TOL,
    standardize: bool = False,
    threads: int = DEFAULT_THREADS,
) -> CvResult:
    """
    k-fold grid search over (C, epsilon) on submatrices of ``gram``.

    Ties go to the smaller C, then the smaller epsilon.
    """
    _square_values(gram)
    labels = as_real_vector(y, "labels")
    require_same_length(labels, gram.rows, "labels and Gram rows")
    c_values = sorted(set(float(c) for c in C_grid))
    eps_values = sorted(set(float(e) for e in eps_grid))
    if not c_values or not eps_values:
        raise ValidationError("C and epsilon grids must be nonempty")

    folds = fold_assignment(labels.shape[0], k_folds, seed)
    everything = np.arange(labels.shape[0])
    cells = [(c, e) for c in c_values for e in eps_values]

    def score(cell: Tuple[float, float]) -> float:
        c, e = cell
        errors = []
        for fold in folds:
            train_index = np.setdiff1d(everything, fold)
            model = train(
                gram.submatrix(train_index, train_index),
                labels[train_index],
                C=c,
                epsilon=e,
                tol=tol,
                standardize=standardize,
            )
            predictions = predict_gram(model, gram.submatrix(fold, train_index))
            errors.append(mse(predictions, labels[fold]))
        return float(np.mean(errors))

    with ThreadPoolExecutor(max_workers=max(1, threads)) as executor:
        results = list(executor.map(score, cells))

    scores = dict(zip(cells, results))
    best = cells[0]
    for cell in cells[1:]:
        if scores[cell] < scores[best]:
            best = cell
    return CvResult(C=best[0], epsilon=best[1], scores=scores)


def _format_floats(values: Sequence[float]) -> str:
    return ",".join(repr(float(v)) for v in values)


def save_model(model: SvrModel, path: PathOrStr) -> Path:
    """Write ``model`` as key = value text with round-trip float formatting"""
    path = Path(path)
    lines = [
        f"format = {MODEL_FORMAT}",
        f"C = {model.C!r}",
        f"epsilon = {model.epsilon!r}",
        f"bias = {model.bias!r}",
        f"beta = {_format_floats(model.beta)}",
        f"support_indices = {','.join(str(i) for i in model.support_indices)}",
        f"kernel_digest = {model.kernel_digest.hex()}",
        f"diagonal_shift = {model.diagonal_shift!r}",
        f"kkt_violation = {model.kkt_violation!r}",
        f"converged = {str(model.converged).lower()}",
        f"n_iter = {model.n_iter}",
        f"label_offset = {model.label_offset!r}",
        f"label_scale = {model.label_scale!r}",
    ]
    path.write_text("\n".join(lines) + "\n")
    return path


def _parse_floats(text: str) -> List[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def load_model(path: PathOrStr) -> SvrModel:
    """Read a model written by save_model"""
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"Model file not found: {path}")
    entries: Dict[str, str] = {}
    for number, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValidationError(f"{path}:{number}: expected 'key = value'")
        entries[key.strip()] = value.strip()

    if entries.get("format") != MODEL_FORMAT:
        raise ValidationError(f"{path} is not a {MODEL_FORMAT} model file")
    try:
        return SvrModel(
            beta=np.array(_parse_floats(entries["beta"]), dtype=np.float64),
            bias=float(entries["bias"]),
            support_indices=tuple(
                int(v) for v in entries["support_indices"].split(",") if v.strip()
            ),
            C=float(entries["C"]),
            epsilon=float(entries["epsilon"]),
            kernel_digest=bytes.fromhex(entries["kernel_digest"]),
            diagonal_shift=float(entries["diagonal_shift"]),
            kkt_violation=float(entries["kkt_violation"]),
            converged=entries["converged"] == "true",
            n_iter=int(entries["n_iter"]),
            label_offset=float(entries["label_offset"]),
            label_scale=float(entries["label_scale"]),
        )
    except (KeyError, ValueError) as exc:
        raise ValidationError(f"Malformed model file {path}: {exc}") from exc
