"""Dataset containers and file formats.

Two on-disk formats are supported:

* CSV, one row per sample, integer label in the first column, features in
  [0, 1] written with full round-trip precision (``repr`` of the float).
* IDX, the classic big-endian digit-dataset format: images as an unsigned
  byte tensor (scaled to [0, 1] on load by dividing by 255) plus a separate
  label file.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .validation import check_X_y, check_vector

IDX_DTYPE_UBYTE = 0x08


class DatasetFormatError(ValueError):
    """Raised when a dataset file is malformed."""


@dataclass(frozen=True)
class ImageVec:
    """A flat feature vector together with its valid value range."""

    data: np.ndarray
    domain_lo: float = 0.0
    domain_hi: float = 1.0

    def __post_init__(self):
        v = check_vector(self.data, name="data")
        object.__setattr__(self, "data", v)
        if not self.domain_lo < self.domain_hi:
            raise ValueError("domain_lo must be < domain_hi")
        if v.size and (v.min() < self.domain_lo or v.max() > self.domain_hi):
            raise ValueError("image values fall outside the declared domain")

    @property
    def dim(self) -> int:
        return int(self.data.shape[0])


@dataclass
class LabeledDataset:
    """Feature matrix plus labels; the unit every evaluation runs over."""

    X: np.ndarray
    y: np.ndarray
    name: str = "dataset"
    domain_lo: float = 0.0
    domain_hi: float = 1.0
    n_classes: int = field(default=0)

    def __post_init__(self):
        self.X, self.y = check_X_y(self.X, self.y)
        if self.n_classes <= 0:
            self.n_classes = int(self.y.max()) + 1
        if np.any(self.y >= self.n_classes):
            raise ValueError("labels exceed declared class count")
        if not self.domain_lo < self.domain_hi:
            raise ValueError("domain_lo must be < domain_hi")

    def __len__(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return int(self.X.shape[1])

    def image(self, i: int) -> ImageVec:
        return ImageVec(self.X[i].copy(), self.domain_lo, self.domain_hi)


def save_csv(dataset: LabeledDataset, path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        for label, row in zip(dataset.y, dataset.X):
            fh.write(str(int(label)))
            for v in row:
                fh.write("," + repr(float(v)))
            fh.write("\n")


def load_csv(path, name: str | None = None) -> LabeledDataset:
    labels: list[int] = []
    rows: list[list[float]] = []
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) < 2:
                raise DatasetFormatError(f"{path}: line {lineno} has no feature columns")
            try:
                labels.append(int(parts[0]))
                rows.append([float(p) for p in parts[1:]])
            except ValueError as exc:
                raise DatasetFormatError(f"{path}: line {lineno}: {exc}") from exc
    if not rows:
        raise DatasetFormatError(f"{path}: no samples")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise DatasetFormatError(f"{path}: inconsistent row widths {sorted(widths)}")
    X = np.asarray(rows, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    return LabeledDataset(X, y, name=name or str(path))


def _read_idx_header(fh, path) -> tuple[int, list[int]]:
    head = fh.read(4)
    if len(head) != 4 or head[0] != 0 or head[1] != 0:
        raise DatasetFormatError(f"{path}: bad IDX magic {head!r}")
    dtype_code, ndim = head[2], head[3]
    if dtype_code != IDX_DTYPE_UBYTE:
        raise DatasetFormatError(f"{path}: unsupported IDX dtype 0x{dtype_code:02x}")
    dims = []
    for _ in range(ndim):
        raw = fh.read(4)
        if len(raw) != 4:
            raise DatasetFormatError(f"{path}: truncated IDX dimension header")
        dims.append(struct.unpack(">i", raw)[0])
    return dtype_code, dims


def _read_idx_body(fh, dims, path) -> np.ndarray:
    count = int(np.prod(dims)) if dims else 0
    raw = fh.read(count)
    if len(raw) != count:
        raise DatasetFormatError(f"{path}: truncated IDX data ({len(raw)} of {count} bytes)")
    return np.frombuffer(raw, dtype=np.uint8).reshape(dims)


def load_idx(images_path, labels_path, name: str | None = None) -> LabeledDataset:
    """Load an images/labels IDX pair; pixels map to [0, 1] as byte/255."""
    with open(images_path, "rb") as fh:
        _, dims = _read_idx_header(fh, images_path)
        if len(dims) < 2:
            raise DatasetFormatError(f"{images_path}: image file must have >= 2 dims")
        pixels = _read_idx_body(fh, dims, images_path)
    with open(labels_path, "rb") as fh:
        _, ldims = _read_idx_header(fh, labels_path)
        if len(ldims) != 1:
            raise DatasetFormatError(f"{labels_path}: label file must be 1-D")
        labels = _read_idx_body(fh, ldims, labels_path)
    if dims[0] != ldims[0]:
        raise DatasetFormatError(
            f"image/label counts disagree: {dims[0]} vs {ldims[0]}"
        )
    X = pixels.reshape(dims[0], -1).astype(np.float64) / 255.0
    y = labels.astype(np.int64)
    return LabeledDataset(X, y, name=name or str(images_path))


def save_idx(dataset: LabeledDataset, images_path, labels_path) -> None:
    """Write an IDX pair; features are quantized to unsigned bytes."""
    lo, hi = dataset.domain_lo, dataset.domain_hi
    scaled = np.clip((dataset.X - lo) / (hi - lo), 0.0, 1.0)
    pixels = np.rint(scaled * 255.0).astype(np.uint8)
    n, d = pixels.shape
    with open(images_path, "wb") as fh:
        fh.write(bytes([0, 0, IDX_DTYPE_UBYTE, 2]))
        fh.write(struct.pack(">i", n))
        fh.write(struct.pack(">i", d))
        fh.write(pixels.tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(bytes([0, 0, IDX_DTYPE_UBYTE, 1]))
        fh.write(struct.pack(">i", n))
        fh.write(dataset.y.astype(np.uint8).tobytes())
