"""
QKGM binary Gram matrix files and the content-addressed Gram cache
"""

import logging
import os
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from qklab.api_utils import ValidationError
from qklab.qk_types import GramMatrix, KernelKind, PathOrStr

logger = logging.getLogger("qklab")

QKGM_MAGIC = b"QKGM"
QKGM_VERSION = 1
QKGM_SUFFIX = ".qkgm"

#: Little-endian packed header: magic, version, kind tag, rows, cols, config digest
QKGM_HEADER = np.dtype(
    [
        ("magic", "S4"),
        ("version", "<u4"),
        ("kind", "u1"),
        ("rows", "<u4"),
        ("cols", "<u4"),
        ("digest", "V32"),
    ]
)

_NOISY_BIT = 0x10


def encode_gram(gram: GramMatrix) -> bytes:
    """Serialise ``gram`` to the QKGM byte layout"""
    header = np.zeros(1, dtype=QKGM_HEADER)
    header["magic"] = QKGM_MAGIC
    header["version"] = QKGM_VERSION
    header["kind"] = gram.kind_tag
    header["rows"], header["cols"] = gram.shape
    header["digest"] = np.void(gram.config_digest)
    values = np.ascontiguousarray(gram.values, dtype="<f8")
    return header.tobytes() + values.tobytes()


def decode_gram(
    data: bytes,
    rows: Optional[Sequence[int]] = None,
    cols: Optional[Sequence[int]] = None,
) -> GramMatrix:
    """
    Parse QKGM bytes. The format stores no sample ids, so ``rows`` and
    ``cols`` default to positional ids.

    Raises
    ------
    ValidationError
        Bad magic, unknown version or kind tag, or a truncated payload
    """
    if len(data) < QKGM_HEADER.itemsize:
        raise ValidationError(
            f"QKGM data truncated: {len(data)} bytes, "
            f"header needs {QKGM_HEADER.itemsize}"
        )
    header = np.frombuffer(data, dtype=QKGM_HEADER, count=1)[0]
    if bytes(header["magic"]) != QKGM_MAGIC:
        raise ValidationError(f"Not a QKGM file (magic {bytes(header['magic'])!r})")
    if int(header["version"]) != QKGM_VERSION:
        raise ValidationError(f"Unsupported QKGM version {int(header['version'])}")

    tag = int(header["kind"])
    if tag & ~(_NOISY_BIT | 0x0F):
        raise ValidationError(f"Unknown QKGM kind tag 0x{tag:02x}")
    try:
        kind = KernelKind(tag & 0x0F)
    except ValueError:
        raise ValidationError(f"Unknown QKGM kernel kind {tag & 0x0F}")

    n_rows, n_cols = int(header["rows"]), int(header["cols"])
    expected = QKGM_HEADER.itemsize + 8 * n_rows * n_cols
    if len(data) != expected:
        raise ValidationError(
            f"QKGM payload has {len(data)} bytes, expected {expected} "
            f"for a {n_rows}x{n_cols} matrix"
        )
    values = np.frombuffer(
        data, dtype="<f8", count=n_rows * n_cols, offset=QKGM_HEADER.itemsize
    ).reshape(n_rows, n_cols)
    return GramMatrix(
        rows=tuple(range(n_rows)) if rows is None else tuple(rows),
        cols=tuple(range(n_cols)) if cols is None else tuple(cols),
        values=values.astype(np.float64),
        kind=kind,
        noisy=bool(tag & _NOISY_BIT),
        config_digest=header["digest"].tobytes(),
    )


def write_gram(gram: GramMatrix, path: PathOrStr) -> Path:
    """Write ``gram`` to ``path``, replacing any existing file atomically"""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(encode_gram(gram))
    os.replace(tmp, path)
    return path


def read_gram(
    path: PathOrStr,
    rows: Optional[Sequence[int]] = None,
    cols: Optional[Sequence[int]] = None,
) -> GramMatrix:
    """Read a QKGM file"""
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"Gram file not found: {path}")
    return decode_gram(path.read_bytes(), rows, cols)


class GramCache:
    """
    Gram matrices stored as ``<digest hex>.qkgm`` files in a directory.
    A matrix whose config digest is present is never recomputed.
    """

    def __init__(self, directory: PathOrStr):
        self.directory = Path(directory)
        self.hits = 0
        self.misses = 0

    def path_for(self, digest: bytes) -> Path:
        return self.directory / f"{digest.hex()}{QKGM_SUFFIX}"

    def __contains__(self, digest: bytes) -> bool:
        return self.path_for(digest).is_file()

    def get(
        self,
        digest: bytes,
        rows: Optional[Sequence[int]] = None,
        cols: Optional[Sequence[int]] = None,
    ) -> Optional[GramMatrix]:
        """Return the cached matrix for ``digest`` or None"""
        path = self.path_for(digest)
        if not path.is_file():
            return None
        gram = read_gram(path, rows, cols)
        if gram.config_digest != digest:
            raise ValidationError(f"Cache entry {path} holds a different digest")
        return gram

    def put(self, gram: GramMatrix) -> Path:
        self.directory.mkdir(parents=True, exist_ok=True)
        return write_gram(gram, self.path_for(gram.config_digest))

    def get_or_compute(
        self,
        digest: bytes,
        compute: Callable[[], GramMatrix],
        rows: Optional[Sequence[int]] = None,
        cols: Optional[Sequence[int]] = None,
    ) -> GramMatrix:
        """Load the matrix for ``digest``, computing and storing it on a miss"""
        cached = self.get(digest, rows, cols)
        if cached is not None:
            self.hits += 1
            logger.debug(f"Gram cache hit {digest.hex()[:12]}")
            return cached
        self.misses += 1
        gram = compute()
        if gram.config_digest != digest:
            raise ValidationError("Computed Gram matrix digest does not match its key")
        self.put(gram)
        return gram
