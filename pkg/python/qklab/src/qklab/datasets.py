"""
Datasets: IDX image ingestion, synthetic images, PCA and min-max
preprocessing, the ZZ benchmark task and dataset CSV files
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
import numpy.typing as npt
import polars as pl
import scipy.linalg
from scipy.ndimage import gaussian_filter
from tqdm.auto import tqdm

from qklab.api_utils import IdxParseError, ValidationError
from qklab.feature_maps import apply_zz, encode_zz
from qklab.qk_types import (
    SPLIT_TEST,
    SPLIT_TRAIN,
    LabeledDataset,
    MinMaxModel,
    PathOrStr,
    PcaModel,
)
from qklab.statevector import expectation_z
from qklab.tools.utils import DEFAULT_THREADS, PBAR_DEFAULTS, logged

logger = logging.getLogger("qklab")

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

IMAGE_SIDE = 28
BENCHMARK_DIMENSION = 10


@dataclass(frozen=True)
class ImageSet:
    """Grayscale images flattened row-major, pixels in [0, 1]"""

    #: (n, rows * cols) pixel matrix
    pixels: npt.NDArray[np.float64] = field(compare=False)
    shape: Tuple[int, int]
    #: Optional class labels from an IDX label file
    labels: Optional[npt.NDArray[np.int64]] = field(default=None, compare=False)

    @property
    def n_images(self) -> int:
        return self.pixels.shape[0]


def _parse_idx(data: bytes, magic: int, what: str) -> np.ndarray:
    if len(data) < 4:
        raise IdxParseError(f"{what}: truncated magic number", len(data))
    found = int(np.frombuffer(data, dtype=">u4", count=1)[0])
    if found != magic:
        raise IdxParseError(
            f"{what}: bad magic 0x{found:08x}, expected 0x{magic:08x}", 0
        )
    n_dims = magic & 0xFF
    header_end = 4 + 4 * n_dims
    if len(data) < header_end:
        raise IdxParseError(f"{what}: truncated dimension sizes", len(data))
    sizes = np.frombuffer(data, dtype=">u4", count=n_dims, offset=4)
    dims = tuple(int(v) for v in sizes)
    count = int(np.prod(dims, dtype=np.int64))
    if len(data) < header_end + count:
        raise IdxParseError(
            f"{what}: truncated payload, {len(data) - header_end} of {count} bytes",
            len(data),
        )
    if len(data) > header_end + count:
        raise IdxParseError(
            f"{what}: trailing bytes after payload", header_end + count
        )
    payload = np.frombuffer(data, dtype=np.uint8, count=count, offset=header_end)
    return payload.reshape(dims)


def parse_idx_images(data: bytes) -> np.ndarray:
    """(n, rows, cols) unsigned byte images from IDX bytes"""
    return _parse_idx(data, IDX_IMAGES_MAGIC, "IDX images")


def parse_idx_labels(data: bytes) -> np.ndarray:
    """(n,) unsigned byte labels from IDX bytes"""
    return _parse_idx(data, IDX_LABELS_MAGIC, "IDX labels")


def read_idx(
    images_path: PathOrStr, labels_path: Optional[PathOrStr] = None
) -> ImageSet:
    """
    Read an IDX image file, and optionally its label file, rescaling pixels
    to [0, 1].

    Raises
    ------
    IdxParseError
        Bad magic, truncated data or an image/label count mismatch
    """
    images = parse_idx_images(Path(images_path).read_bytes())
    labels = None
    if labels_path is not None:
        labels = parse_idx_labels(Path(labels_path).read_bytes()).astype(np.int64)
        if labels.shape[0] != images.shape[0]:
            raise IdxParseError(
                f"{images.shape[0]} images but {labels.shape[0]} labels", 4
            )
    pixels = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    return ImageSet(pixels, (images.shape[1], images.shape[2]), labels)


def synth_images(n: int, seed: int = 0, side: int = IMAGE_SIDE) -> ImageSet:
    """
    Deterministic smooth random 28 x 28 fields, each rescaled to [0, 1], for
    runs without image files.
    """
    if n < 1:
        raise ValidationError(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal((n, side, side))
    fields = gaussian_filter(noise, sigma=(0.0, 2.5, 2.5), mode="wrap")
    low = fields.min(axis=(1, 2), keepdims=True)
    high = fields.max(axis=(1, 2), keepdims=True)
    pixels = (fields - low) / (high - low)
    return ImageSet(pixels.reshape(n, -1), (side, side))


def pca_fit(X: npt.ArrayLike, k: int) -> PcaModel:
    """
    Principal components of ``X`` from the eigendecomposition of its sample
    covariance, in descending eigenvalue order. Each component's
    largest-magnitude entry is made positive.
    """
    data = np.asarray(X, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] < 2:
        raise ValidationError("pca_fit needs an N x d matrix with N >= 2")
    if not 1 <= k <= min(data.shape):
        raise ValidationError(f"k must be in [1, {min(data.shape)}], got {k}")

    mean = data.mean(axis=0)
    centered = data - mean
    covariance = centered.T @ centered / (data.shape[0] - 1)
    eigenvalues, eigenvectors = scipy.linalg.eigh(covariance)
    order = np.argsort(eigenvalues)[::-1][:k]
    components = eigenvectors[:, order].T
    pivots = np.argmax(np.abs(components), axis=1)
    signs = np.sign(components[np.arange(k), pivots])
    components = components * np.where(signs == 0.0, 1.0, signs)[:, None]
    return PcaModel(
        mean=mean,
        components=components,
        eigenvalues=np.clip(eigenvalues[order], 0.0, None),
        total_variance=float(np.trace(covariance)),
    )


def pca_transform(model: PcaModel, X: npt.ArrayLike) -> npt.NDArray[np.float64]:
    data = np.asarray(X, dtype=np.float64)
    if data.ndim != 2 or data.shape[1] != model.mean.shape[0]:
        raise ValidationError(
            f"Expected {model.mean.shape[0]} input components, got shape {data.shape}"
        )
    return (data - model.mean) @ model.components.T


def pca_inverse_transform(model: PcaModel, Z: npt.ArrayLike) -> npt.NDArray[np.float64]:
    """Map reduced coordinates back to the input space"""
    reduced = np.asarray(Z, dtype=np.float64)
    if reduced.ndim != 2 or reduced.shape[1] != model.n_components:
        raise ValidationError(
            f"Expected {model.n_components} reduced components, "
            f"got shape {reduced.shape}"
        )
    return reduced @ model.components + model.mean


def explained_variance_ratio(model: PcaModel) -> npt.NDArray[np.float64]:
    return model.explained_variance_ratio()


def minmax_fit(X: npt.ArrayLike) -> MinMaxModel:
    """Component-wise minimum and maximum of ``X``"""
    data = np.asarray(X, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] < 1:
        raise ValidationError("minmax_fit needs a nonempty N x d matrix")
    model = MinMaxModel(minimum=data.min(axis=0), maximum=data.max(axis=0))
    constant = np.flatnonzero(model.constant_components)
    if constant.size:
        logger.warning(f"Min-max: constant components {constant.tolist()} map to 0")
    return model


def minmax_apply(model: MinMaxModel, X: npt.ArrayLike) -> npt.NDArray[np.float64]:
    """(x - min) / (max - min); constant components map to 0"""
    data = np.asarray(X, dtype=np.float64)
    if data.ndim != 2 or data.shape[1] != model.minimum.shape[0]:
        raise ValidationError(f"Expected {model.minimum.shape[0]} components")
    span = model.maximum - model.minimum
    constant = model.constant_components
    scaled = (data - model.minimum) / np.where(constant, 1.0, span)
    scaled[:, constant] = 0.0
    return scaled


def minmax_inverse(model: MinMaxModel, X: npt.ArrayLike) -> npt.NDArray[np.float64]:
    data = np.asarray(X, dtype=np.float64)
    return model.minimum + data * (model.maximum - model.minimum)


def preprocess(
    features: npt.ArrayLike,
    splits: Sequence[str],
    d: int,
    train_only_fit: bool = False,
) -> Tuple[npt.NDArray[np.float64], PcaModel, MinMaxModel]:
    """
    PCA to ``d`` components followed by min-max scaling to [0, 1].

    Both fits use every sample unless ``train_only_fit`` restricts them to
    the training split.
    """
    data = np.asarray(features, dtype=np.float64)
    fit_rows = np.arange(data.shape[0])
    if train_only_fit:
        fit_rows = np.array([i for i, tag in enumerate(splits) if tag == SPLIT_TRAIN])
        if fit_rows.size < 2:
            raise ValidationError(
                "Train-only preprocessing needs >= 2 training samples"
            )
    pca = pca_fit(data[fit_rows], d)
    reduced = pca_transform(pca, data)
    scaler = minmax_fit(reduced[fit_rows])
    return minmax_apply(scaler, reduced), pca, scaler


def benchmark_label(x: npt.ArrayLike, theta: npt.ArrayLike) -> float:
    """<sigma_z> on qubit 1 after the ZZ map of x followed by the ZZ map of theta"""
    state = apply_zz(encode_zz(x), theta)
    return expectation_z(state, 1)


def _split_tags(n_train: int, n_test: int, rng: np.random.Generator) -> Tuple[str, ...]:
    order = rng.permutation(n_train + n_test)
    tags = [SPLIT_TEST] * (n_train + n_test)
    for index in order[:n_train]:
        tags[index] = SPLIT_TRAIN
    return tuple(tags)


@logged(log_time=True)
def gen_benchmark(
    images: ImageSet,
    theta_seed: int = 0,
    n_train: int = 400,
    n_test: int = 200,
    d: int = BENCHMARK_DIMENSION,
    seed: int = 0,
    train_only_fit: bool = False,
    threads: int = DEFAULT_THREADS,
) -> LabeledDataset:
    """
    The ZZ benchmark regression task.

    ``n_train + n_test`` images are sampled with ``seed``, reduced to ``d``
    components and min-max scaled; theta is drawn once from U[0, 1]^d with
    ``theta_seed``; each label is the qubit 1 sigma_z expectation of the ZZ
    map of x followed by the ZZ map of theta. The split is a seeded shuffle.

    Raises
    ------
    ValidationError
        Fewer images than requested samples
    """
    n_total = n_train + n_test
    if n_train < 1 or n_test < 0:
        raise ValidationError("Need n_train >= 1 and n_test >= 0")
    if images.n_images < n_total:
        raise ValidationError(
            f"Benchmark needs {n_total} images, only {images.n_images} available"
        )
    if d < 1 or d > min(n_total, images.pixels.shape[1]):
        raise ValidationError(f"Benchmark dimension {d} out of range")

    rng = np.random.default_rng(seed)
    chosen = np.sort(rng.choice(images.n_images, size=n_total, replace=False))
    splits = _split_tags(n_train, n_test, rng)
    features, _, _ = preprocess(images.pixels[chosen], splits, d, train_only_fit)

    theta = np.random.default_rng(theta_seed).uniform(0.0, 1.0, size=d)

    def label(index: int) -> float:
        return benchmark_label(features[index], theta)

    with ThreadPoolExecutor(max_workers=max(1, threads)) as executor:
        labels = list(
            tqdm(
                executor.map(label, range(n_total)),
                total=n_total,
                desc="Benchmark labels",
                unit="sample",
                leave=False,
                **PBAR_DEFAULTS,
            )
        )
    return LabeledDataset(features, np.array(labels), splits)


def nm_features_to_dataset(
    raw: LabeledDataset, d: int, train_only_fit: bool = False
) -> LabeledDataset:
    """Reduce raw 20-component dephasing features to ``d`` components in [0, 1]"""
    features, _, _ = preprocess(raw.features, raw.splits, d, train_only_fit)
    return LabeledDataset(features, raw.labels, raw.splits, raw.params)


def _feature_columns(d: int) -> List[str]:
    return [f"f{i}" for i in range(1, d + 1)]


def write_dataset_csv(dataset: LabeledDataset, path: PathOrStr) -> Path:
    """
    Write columns [s, T,] f1..fd, label, split with shortest round-trip
    float formatting
    """
    path = Path(path)
    columns = {}
    if dataset.params is not None:
        columns["s"] = dataset.params[:, 0]
        columns["T"] = dataset.params[:, 1]
    for name, values in zip(_feature_columns(dataset.dimension), dataset.features.T):
        columns[name] = values
    columns["label"] = dataset.labels
    columns["split"] = list(dataset.splits)
    pl.DataFrame(columns).write_csv(path)
    return path


def read_dataset_csv(path: PathOrStr) -> LabeledDataset:
    """Read a dataset written by write_dataset_csv"""
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"Dataset file not found: {path}")
    # Read every column as text, then cast the numeric ones exactly
    frame = pl.read_csv(path, infer_schema_length=0)
    header = frame.columns
    if "label" not in header or "split" not in header:
        raise ValidationError(f"{path} lacks the label and split columns")
    frame = frame.with_columns(
        [pl.col(name).cast(pl.Float64) for name in header if name != "split"]
    )

    feature_names = [name for name in header if name.startswith("f")]
    if feature_names != _feature_columns(len(feature_names)) or not feature_names:
        raise ValidationError(f"{path} has malformed feature columns {feature_names}")
    params = None
    if "s" in header and "T" in header:
        params = frame.select(["s", "T"]).to_numpy()
    return LabeledDataset(
        features=frame.select(feature_names).to_numpy(),
        labels=frame.get_column("label").to_numpy(),
        splits=tuple(frame.get_column("split").to_list()),
        params=params,
    )
