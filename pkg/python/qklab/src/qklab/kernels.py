"""
Ideal and noisy quantum kernels, the RBF baseline, Gram assembly and the
expressivity diagnostics of noisy encodings
"""

import hashlib
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence

import numpy as np
import numpy.typing as npt
import scipy.linalg
from more_itertools import chunked
from tqdm.auto import tqdm

from qklab.api_utils import DimensionMismatchError, ValidationError, as_real_vector
from qklab.feature_maps import (
    DEFAULT_OPTIONS,
    build_ensembles,
    encode_dataset,
)
from qklab.gram_cache import GramCache
from qklab.qk_types import (
    GramMatrix,
    KernelKind,
    NoiseEnsemble,
    NoiseSpec,
    RydbergGeometry,
    StateVector,
)
from qklab.rydberg import PropagationOptions
from qklab.statevector import inner_product
from qklab.tools.utils import DEFAULT_THREADS, PBAR_DEFAULTS, logged

logger = logging.getLogger("qklab")

#: Relative eigenvalue floor of a valid (positive semidefinite) Gram matrix
PSD_REL_TOL = 1e-8

_ROWS_PER_TASK = 4


def kernel_ideal(psi_k: StateVector, psi_j: StateVector) -> float:
    """|<psi_k|psi_j>|^2"""
    return float(abs(inner_product(psi_k, psi_j)) ** 2)


def _ordered(ens_k: NoiseEnsemble, ens_j: NoiseEnsemble):
    # One evaluation order per pair keeps k(x, y) == k(y, x) bit for bit
    if ens_j.feature_id < ens_k.feature_id:
        return ens_j, ens_k
    return ens_k, ens_j


def kernel_noisy(ens_k: NoiseEnsemble, ens_j: NoiseEnsemble) -> float:
    """
    Tr[rho_k rho_j] of the ensemble mixtures, as the mean of the M x M
    squared member overlaps. Density matrices are never formed.
    """
    if ens_k.size != ens_j.size:
        raise DimensionMismatchError(
            f"Ensemble sizes differ ({ens_k.size} != {ens_j.size})"
        )
    if ens_k.dimension != ens_j.dimension:
        raise DimensionMismatchError(
            f"Ensemble dimensions differ ({ens_k.dimension} != {ens_j.dimension})"
        )
    first, second = _ordered(ens_k, ens_j)
    overlaps = first.states.conj() @ second.states.T
    return float(np.mean(overlaps.real**2 + overlaps.imag**2))


def kernel_rbf(x_k: npt.ArrayLike, x_j: npt.ArrayLike, gamma: float) -> float:
    """exp(-gamma ||x_k - x_j||^2)"""
    first = as_real_vector(x_k, "x_k")
    second = as_real_vector(x_j, "x_j")
    if first.shape != second.shape:
        raise DimensionMismatchError(
            f"Feature lengths differ ({first.shape[0]} != {second.shape[0]})"
        )
    if not gamma > 0.0:
        raise ValidationError(f"gamma must be positive, got {gamma}")
    return float(np.exp(-gamma * np.sum((first - second) ** 2)))


def default_rbf_gamma(train_features: npt.ArrayLike) -> float:
    """
    1 / (d * component variance), the variance of each feature column across
    the training samples averaged over the d columns
    """
    matrix = np.asarray(train_features, dtype=np.float64)
    if matrix.ndim != 2 or matrix.size == 0:
        raise ValidationError("Expected a nonempty N x d training matrix")
    variance = float(matrix.var(axis=0).mean())
    if variance <= 0.0:
        return 1.0
    return 1.0 / (matrix.shape[1] * variance)


@dataclass(frozen=True)
class KernelSpec:
    """
    Everything that determines a Gram matrix besides the features.

    ``noise`` of None is the ideal kernel; the RBF kind ignores the quantum
    fields.
    """

    kind: KernelKind
    noise: Optional[NoiseSpec] = None
    seed: int = 0
    geometry: Optional[RydbergGeometry] = None
    options: PropagationOptions = DEFAULT_OPTIONS
    rbf_gamma: Optional[float] = None
    #: Rescale noisy kernels to unit diagonal
    normalize: bool = False

    def __post_init__(self) -> None:
        analog = self.kind in (KernelKind.ANALOG, KernelKind.HYBRID)
        if analog and self.geometry is None:
            raise ValidationError(f"The {self.kind.label} kernel needs a geometry")
        if self.rbf_gamma is not None and not self.rbf_gamma > 0.0:
            raise ValidationError(f"rbf_gamma must be positive, got {self.rbf_gamma}")

    @property
    def noisy(self) -> bool:
        return self.noise is not None and self.kind is not KernelKind.RBF

    @property
    def label(self) -> str:
        """e.g. 'analog-noisy' or 'rbf'"""
        if self.kind is KernelKind.RBF:
            return "rbf"
        return f"{self.kind.label}-{'noisy' if self.noisy else 'ideal'}"

    def describe(self) -> str:
        """Canonical text of every field that changes kernel values"""
        parts = [f"kind={self.kind.label}", f"noisy={self.noisy}"]
        if self.kind is KernelKind.RBF:
            parts.append(f"gamma={self.rbf_gamma!r}")
            return ";".join(parts)
        if self.geometry is not None and self.kind is not KernelKind.DIGITAL:
            g = self.geometry
            parts.append(
                f"geometry={g.positions!r},{g.rabi_frequency!r},{g.detuning_scale!r},"
                f"{g.c6!r},{g.evolution_time!r}"
            )
            parts.append(
                f"backend={self.options.backend.value},"
                f"{self.options.krylov_max_subspace},"
                f"{self.options.dense_threshold}"
            )
        if self.noisy:
            n = self.noise
            assert n is not None
            parts.append(
                f"noise={n.sigma_detuning!r},{n.sigma_rabi_rel!r},{n.sigma_position!r},"
                f"{n.sigma_cnot_theta!r},{n.ensemble_size}"
            )
            parts.append(f"seed={self.seed}")
            parts.append(f"normalize={self.normalize}")
        return ";".join(parts)


def config_digest(
    kernel: KernelSpec,
    row_features: np.ndarray,
    col_features: np.ndarray,
    row_ids: Sequence[int],
    col_ids: Sequence[int],
) -> bytes:
    """sha256 over the kernel description, the sample ids and the feature bytes"""
    digest = hashlib.sha256(kernel.describe().encode())
    for ids, features in ((row_ids, row_features), (col_ids, col_features)):
        digest.update(np.asarray(ids, dtype="<i8").tobytes())
        digest.update(np.ascontiguousarray(features, dtype="<f8").tobytes())
    return digest.digest()


def _feature_matrix(features: npt.ArrayLike, name: str) -> np.ndarray:
    matrix = np.asarray(features, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[0] < 1 or matrix.shape[1] < 1:
        raise ValidationError(f"{name} must be a nonempty N x d matrix")
    if not np.all(np.isfinite(matrix)):
        raise ValidationError(f"{name} contains non-finite entries")
    return matrix


def _ids(n: int, ids: Optional[Sequence[int]], name: str) -> List[int]:
    if ids is None:
        return list(range(n))
    result = [int(i) for i in ids]
    if len(result) != n:
        raise DimensionMismatchError(f"{len(result)} {name} for {n} features")
    return result


def _mirror_upper(values: np.ndarray) -> np.ndarray:
    return np.triu(values) + np.triu(values, 1).T


def _rbf_values(rows: np.ndarray, cols: np.ndarray, gamma: float) -> np.ndarray:
    squared = ((rows[:, None, :] - cols[None, :, :]) ** 2).sum(axis=2)
    return np.exp(-gamma * squared)


def _overlap_values(row_states: np.ndarray, col_states: np.ndarray) -> np.ndarray:
    overlaps = row_states.conj() @ col_states.T
    return overlaps.real**2 + overlaps.imag**2


def _noisy_values(
    row_ensembles: List[NoiseEnsemble],
    col_ensembles: List[NoiseEnsemble],
    symmetric: bool,
    threads: int,
) -> np.ndarray:
    values = np.zeros((len(row_ensembles), len(col_ensembles)))

    def fill(row_block: List[int]) -> int:
        for i in row_block:
            start = i if symmetric else 0
            for j in range(start, len(col_ensembles)):
                values[i, j] = kernel_noisy(row_ensembles[i], col_ensembles[j])
        return len(row_block)

    blocks = list(chunked(range(len(row_ensembles)), _ROWS_PER_TASK))
    with ThreadPoolExecutor(max_workers=max(1, threads)) as executor:
        with tqdm(
            total=len(row_ensembles),
            desc="Noisy kernel rows",
            unit="row",
            leave=False,
            **PBAR_DEFAULTS,
        ) as pbar:
            for done in executor.map(fill, blocks):
                pbar.update(done)

    return _mirror_upper(values) if symmetric else values


def _purities(ensembles: List[NoiseEnsemble]) -> np.ndarray:
    return np.array([kernel_noisy(ens, ens) for ens in ensembles])


def normalize_gram(
    gram: GramMatrix,
    row_diagonal: Optional[npt.ArrayLike] = None,
    col_diagonal: Optional[npt.ArrayLike] = None,
) -> GramMatrix:
    """
    Rescale to k(x, y) / sqrt(k(x, x) k(y, y)).

    A square Gram uses its own diagonal; a cross Gram needs the diagonal
    kernel values (ensemble purities) of its rows and columns.
    """
    if row_diagonal is None or col_diagonal is None:
        if not gram.is_square:
            raise ValidationError("A cross Gram needs row and column diagonals")
        row_diagonal = col_diagonal = np.diag(gram.values)
    rows = as_real_vector(row_diagonal, "row diagonal")
    cols = as_real_vector(col_diagonal, "column diagonal")
    if rows.shape[0] != gram.shape[0] or cols.shape[0] != gram.shape[1]:
        raise DimensionMismatchError("Diagonal lengths do not match the Gram shape")
    if np.any(rows <= 0.0) or np.any(cols <= 0.0):
        raise ValidationError("Cannot normalise a Gram with non-positive diagonal")
    values = gram.values / np.sqrt(np.outer(rows, cols))
    if gram.is_square:
        values = _mirror_upper(values)
        np.fill_diagonal(values, 1.0)
    return replace(gram, values=values)


def _resolve(kernel: KernelSpec, train_features: np.ndarray) -> KernelSpec:
    if kernel.kind is KernelKind.RBF and kernel.rbf_gamma is None:
        return replace(kernel, rbf_gamma=default_rbf_gamma(train_features))
    return kernel


def _compute(
    kernel: KernelSpec,
    rows: np.ndarray,
    cols: np.ndarray,
    row_ids: List[int],
    col_ids: List[int],
    symmetric: bool,
    digest: bytes,
    threads: int,
) -> GramMatrix:
    if kernel.kind is KernelKind.RBF:
        assert kernel.rbf_gamma is not None
        values = _rbf_values(rows, cols, kernel.rbf_gamma)
        if symmetric:
            values = _mirror_upper(values)
    elif not kernel.noisy:
        map_kind = kernel.kind.map_kind
        assert map_kind is not None
        row_states = encode_dataset(
            rows, map_kind, kernel.geometry, kernel.options, row_ids, threads
        )
        col_states = (
            row_states
            if symmetric
            else encode_dataset(
                cols, map_kind, kernel.geometry, kernel.options, col_ids, threads
            )
        )
        values = _overlap_values(row_states, col_states)
        if symmetric:
            values = _mirror_upper(values)
    else:
        map_kind = kernel.kind.map_kind
        assert map_kind is not None and kernel.noise is not None
        row_ens = build_ensembles(
            rows, map_kind, kernel.noise, kernel.seed, row_ids,
            kernel.geometry, kernel.options, threads,
        )
        col_ens = (
            row_ens
            if symmetric
            else build_ensembles(
                cols, map_kind, kernel.noise, kernel.seed, col_ids,
                kernel.geometry, kernel.options, threads,
            )
        )
        values = _noisy_values(row_ens, col_ens, symmetric, threads)
        if kernel.normalize:
            values = values / np.sqrt(np.outer(_purities(row_ens), _purities(col_ens)))
            if symmetric:
                values = _mirror_upper(values)
                np.fill_diagonal(values, 1.0)

    return GramMatrix(
        rows=tuple(row_ids),
        cols=tuple(col_ids),
        values=values,
        kind=kernel.kind,
        noisy=kernel.noisy,
        config_digest=digest,
    )


@logged(log_time=True)
def gram(
    features: npt.ArrayLike,
    kernel: KernelSpec,
    feature_ids: Optional[Sequence[int]] = None,
    cache: Optional[GramCache] = None,
    threads: int = DEFAULT_THREADS,
) -> GramMatrix:
    """
    Square Gram matrix of ``features`` under ``kernel``.

    States and ensembles are encoded once per feature, only the upper
    triangle is evaluated and mirrored, and a ``cache`` hit on the config
    digest skips the computation entirely.

    Parameters
    ----------
    features : array_like
        N x d feature matrix
    kernel : KernelSpec
        Kernel kind, noise model, seed and geometry
    feature_ids : sequence of int, optional
        Sample ids of the rows (seed the noise streams), default 0..N-1
    cache : GramCache, optional
        Content-addressed store of previously computed matrices
    threads : int
        Worker threads for encoding and noisy kernel rows

    Raises
    ------
    EncodingError
        Encoding a sample failed; names the sample id
    """
    matrix = _feature_matrix(features, "features")
    ids = _ids(matrix.shape[0], feature_ids, "feature ids")
    kernel = _resolve(kernel, matrix)
    digest = config_digest(kernel, matrix, matrix, ids, ids)

    def compute() -> GramMatrix:
        return _compute(kernel, matrix, matrix, ids, ids, True, digest, threads)

    if cache is None:
        return compute()
    return cache.get_or_compute(digest, compute, ids, ids)


@logged(log_time=True)
def cross_gram(
    test_features: npt.ArrayLike,
    train_features: npt.ArrayLike,
    kernel: KernelSpec,
    test_ids: Optional[Sequence[int]] = None,
    train_ids: Optional[Sequence[int]] = None,
    cache: Optional[GramCache] = None,
    threads: int = DEFAULT_THREADS,
) -> GramMatrix:
    """
    Rectangular Gram with test samples as rows and training samples as
    columns. The default RBF gamma is taken from the training features.
    """
    rows = _feature_matrix(test_features, "test features")
    cols = _feature_matrix(train_features, "train features")
    if rows.shape[1] != cols.shape[1]:
        raise DimensionMismatchError(
            "Test and train feature lengths differ "
            f"({rows.shape[1]} != {cols.shape[1]})"
        )
    row_ids = _ids(rows.shape[0], test_ids, "test ids")
    col_ids = _ids(cols.shape[0], train_ids, "train ids")
    kernel = _resolve(kernel, cols)
    digest = config_digest(kernel, rows, cols, row_ids, col_ids)

    def compute() -> GramMatrix:
        return _compute(kernel, rows, cols, row_ids, col_ids, False, digest, threads)

    if cache is None:
        return compute()
    return cache.get_or_compute(digest, compute, row_ids, col_ids)


def psd_check(gram: GramMatrix) -> float:
    """Smallest eigenvalue of a square Gram matrix"""
    values = gram.values
    if values.shape[0] != values.shape[1]:
        raise ValidationError(f"psd_check needs a square Gram, got {values.shape}")
    return float(scipy.linalg.eigvalsh(values)[0])


def is_psd(gram: GramMatrix, rel_tol: float = PSD_REL_TOL) -> bool:
    """Smallest eigenvalue >= -rel_tol times the largest"""
    eigenvalues = scipy.linalg.eigvalsh(gram.values)
    return bool(eigenvalues[0] >= -rel_tol * max(eigenvalues[-1], 0.0))


@dataclass(frozen=True)
class RankDiagnostic:
    """Spectrum of a noisy encoded state"""

    rank: int
    #: Nonzero spectrum of rho in descending order
    eigenvalues: npt.NDArray[np.float64]
    #: Tr[rho^2]
    purity: float


def effective_rank(ens: NoiseEnsemble, tol: float = 1e-10) -> RankDiagnostic:
    """
    Rank and purity of the ensemble mixture rho.

    The spectrum comes from the M x M matrix G / M with G the member overlap
    matrix, which shares the nonzero eigenvalues of rho.
    """
    overlaps = ens.states.conj() @ ens.states.T
    eigenvalues = scipy.linalg.eigvalsh(overlaps / ens.size)[::-1]
    eigenvalues = np.clip(eigenvalues, 0.0, None)
    rank = max(1, int(np.count_nonzero(eigenvalues > tol)))
    return RankDiagnostic(rank, eigenvalues, float(np.sum(eigenvalues**2)))


def gram_summary(gram: GramMatrix) -> dict:
    """Diagnostics for reports: shape, diagonal range and spectrum bounds"""
    summary = {"rows": gram.shape[0], "cols": gram.shape[1], "digest": gram.digest_hex}
    if gram.values.shape[0] == gram.values.shape[1]:
        eigenvalues = scipy.linalg.eigvalsh(gram.values)
        diagonal = np.diag(gram.values)
        summary.update(
            min_eigenvalue=float(eigenvalues[0]),
            max_eigenvalue=float(eigenvalues[-1]),
            min_diagonal=float(diagonal.min()),
            max_diagonal=float(diagonal.max()),
        )
    if not math.isfinite(float(np.sum(gram.values))):
        raise ValidationError("Gram contains non-finite values")
    return summary
