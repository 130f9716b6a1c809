"""Dataset generation, file ingestion, and batching.

File formats owned here:

* dataset CSV            -- header ``label,f0,...,f{d-1}``
* probability-matrix CSV -- header ``label,p0,...,p{C-1}``, rows renormalized
                            when their sum is within 1e-3 of 1
* IDX                    -- big-endian MNIST layout (magic 0x803 images /
                            0x801 labels), pixels scaled to [0, 1]
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np

from .errors import EmptyClass, FormatError, InvalidInput
from .numerics import as_labels

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

#: Row sums farther than this from 1 are rejected; closer ones renormalized.
PROB_ROW_SUM_TOL = 1e-3


@dataclass
class Dataset:
    """Immutable-by-convention feature matrix with paired labels."""

    features: np.ndarray  # (N, d) float64, finite
    labels: np.ndarray  # (N,) int64 in [0, class_count)
    class_count: int

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2:
            raise InvalidInput("features must be 2-D")
        if not np.all(np.isfinite(self.features)):
            raise InvalidInput("features contain non-finite values")
        self.labels = as_labels(self.labels, self.features.shape[0], self.class_count)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.class_count)


def blob_centers(classes: int, dim: int, radius: float = 1.0,
                 offset: float = 0.0) -> np.ndarray:
    """Deterministic unit-norm class directions scaled by ``radius``.

    Classes sit at equal angles on the unit circle in the first two feature
    dimensions (evenly spaced on a line when dim == 1), so class geometry is
    reproducible and independent of the noise seed.
    """
    if classes < 2 or dim < 1:
        raise InvalidInput("need classes >= 2 and dim >= 1")
    centers = np.zeros((classes, dim))
    if dim == 1:
        centers[:, 0] = np.linspace(-1.0, 1.0, classes)
    else:
        angles = 2.0 * np.pi * np.arange(classes) / classes
        centers[:, 0] = np.cos(angles)
        centers[:, 1] = np.sin(angles)
    return centers * radius + offset


def gen_blobs(classes: int, per_class: int, dim: int, spread: float, seed: int,
              radius: float = 1.0, offset: float = 0.0,
              clip01: bool = False) -> Dataset:
    """Balanced isotropic Gaussian blobs around deterministic class centers.

    ``spread`` is the per-coordinate standard deviation. With ``clip01`` the
    features are clipped into [0, 1], which the adversarial-attack paths
    require.
    """
    if per_class < 1:
        raise InvalidInput("per_class must be >= 1")
    centers = blob_centers(classes, dim, radius=radius, offset=offset)
    rng = np.random.default_rng(seed)
    labels = np.repeat(np.arange(classes), per_class)
    noise = rng.standard_normal((classes * per_class, dim)) * float(spread)
    features = centers[labels] + noise
    if clip01:
        features = np.clip(features, 0.0, 1.0)
    return Dataset(features=features, labels=labels, class_count=classes)


def _format_float(x: float) -> str:
    return repr(float(x))


def save_dataset_csv(path, dataset: Dataset) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        cols = ",".join(f"f{i}" for i in range(dataset.dim))
        fh.write(f"label,{cols}\n")
        for y, row in zip(dataset.labels, dataset.features):
            fh.write(str(int(y)) + "," + ",".join(_format_float(v) for v in row) + "\n")


def load_dataset_csv(path, class_count: Optional[int] = None) -> Dataset:
    """Read a ``label,f0,...`` CSV; class count defaults to max label + 1."""
    labels, rows = _read_labeled_csv(path, "f")
    c = class_count if class_count is not None else int(max(labels)) + 1
    return Dataset(features=np.array(rows), labels=np.array(labels), class_count=c)


def _read_labeled_csv(path, prefix: str):
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        fields = header.split(",")
        if len(fields) < 2 or fields[0] != "label" or any(
                f != f"{prefix}{i}" for i, f in enumerate(fields[1:])):
            raise FormatError(f"{path}:1: bad header {header!r}")
        width = len(fields) - 1
        labels: List[int] = []
        rows: List[List[float]] = []
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != width + 1:
                raise FormatError(f"{path}:{lineno}: expected {width + 1} fields")
            try:
                labels.append(int(parts[0]))
                rows.append([float(v) for v in parts[1:]])
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from exc
        if not rows:
            raise FormatError(f"{path}: no data rows")
    return labels, rows


def load_probmatrix_csv(path):
    """Read a ``label,p0,...`` CSV as (probability matrix, labels).

    Rows whose sum is within ``PROB_ROW_SUM_TOL`` of 1 are renormalized to
    sum exactly to 1; larger violations raise FormatError with the line.
    """
    labels, rows = _read_labeled_csv(path, "p")
    probs = np.array(rows, dtype=np.float64)
    sums = probs.sum(axis=1)
    bad = np.abs(sums - 1.0) > PROB_ROW_SUM_TOL
    if bad.any():
        lineno = int(np.flatnonzero(bad)[0]) + 2
        raise FormatError(f"{path}:{lineno}: row sums to {sums[bad][0]!r}, not 1")
    if probs.min() < 0.0:
        lineno = int(np.flatnonzero((probs < 0).any(axis=1))[0]) + 2
        raise FormatError(f"{path}:{lineno}: negative probability")
    probs /= sums[:, np.newaxis]
    label_arr = as_labels(np.array(labels), probs.shape[0], probs.shape[1])
    return probs, label_arr


def save_probmatrix_csv(path, probs: np.ndarray, labels: np.ndarray) -> None:
    probs = np.asarray(probs, dtype=np.float64)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        cols = ",".join(f"p{i}" for i in range(probs.shape[1]))
        fh.write(f"label,{cols}\n")
        for y, row in zip(labels, probs):
            fh.write(str(int(y)) + "," + ",".join(_format_float(v) for v in row) + "\n")


def _read_exact(fh, count: int, path, what: str) -> bytes:
    offset = fh.tell()
    data = fh.read(count)
    if len(data) != count:
        raise FormatError(f"{path}: truncated {what} at byte {offset}")
    return data


def load_idx(images_path, labels_path) -> Dataset:
    """Load an IDX image/label file pair, scaling pixels to [0, 1]."""
    with open(images_path, "rb") as fh:
        magic, n_images, n_rows, n_cols = struct.unpack(
            ">IIII", _read_exact(fh, 16, images_path, "header"))
        if magic != IDX_IMAGES_MAGIC:
            raise FormatError(
                f"{images_path}: bad magic 0x{magic:08x} at byte 0, "
                f"expected 0x{IDX_IMAGES_MAGIC:08x}")
        pixels = _read_exact(fh, n_images * n_rows * n_cols, images_path, "pixels")
        if fh.read(1):
            raise FormatError(f"{images_path}: trailing bytes after pixel data")
    with open(labels_path, "rb") as fh:
        magic, n_labels = struct.unpack(
            ">II", _read_exact(fh, 8, labels_path, "header"))
        if magic != IDX_LABELS_MAGIC:
            raise FormatError(
                f"{labels_path}: bad magic 0x{magic:08x} at byte 0, "
                f"expected 0x{IDX_LABELS_MAGIC:08x}")
        raw_labels = _read_exact(fh, n_labels, labels_path, "labels")
        if fh.read(1):
            raise FormatError(f"{labels_path}: trailing bytes after label data")
    if n_labels != n_images:
        raise FormatError(
            f"{labels_path}: {n_labels} labels for {n_images} images")
    features = np.frombuffer(pixels, dtype=np.uint8).astype(np.float64) / 255.0
    features = features.reshape(n_images, n_rows * n_cols)
    labels = np.frombuffer(raw_labels, dtype=np.uint8).astype(np.int64)
    return Dataset(features=features, labels=labels, class_count=10)


def save_idx(images_path, labels_path, features01: np.ndarray,
             labels: np.ndarray, rows: int, cols: int) -> None:
    """Write an IDX pair from features in [0, 1] (rounded to uint8 pixels)."""
    features01 = np.asarray(features01, dtype=np.float64)
    n = features01.shape[0]
    if features01.shape[1] != rows * cols:
        raise InvalidInput(f"features width {features01.shape[1]} != {rows}*{cols}")
    pixels = np.clip(np.rint(features01 * 255.0), 0, 255).astype(np.uint8)
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, n, rows, cols))
        fh.write(pixels.tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">II", IDX_LABELS_MAGIC, n))
        fh.write(np.asarray(labels, dtype=np.uint8).tobytes())


def epoch_batches(n: int, batch_size: int, rng: np.random.Generator) -> List[np.ndarray]:
    """Shuffled index batches covering [0, n) exactly once; last may be short."""
    if batch_size < 1:
        raise InvalidInput("batch_size must be >= 1")
    perm = rng.permutation(n)
    return [perm[i:i + batch_size] for i in range(0, n, batch_size)]


def stratified_batches(dataset: Dataset, class_batch_size: int,
                       rng: np.random.Generator) -> Dict[int, np.ndarray]:
    """Per-class index batches of fixed size, sampled from each class's rows.

    Sampling is without replacement when a class has enough rows, with
    replacement otherwise. Raises EmptyClass if any class is absent.
    """
    if class_batch_size < 1:
        raise InvalidInput("class_batch_size must be >= 1")
    out: Dict[int, np.ndarray] = {}
    for cls in range(dataset.class_count):
        members = np.flatnonzero(dataset.labels == cls)
        if members.size == 0:
            raise EmptyClass(cls)
        replace = members.size < class_batch_size
        out[cls] = rng.choice(members, size=class_batch_size, replace=replace)
    return out
