"""Dataset ingestion (IDX, CIFAR-10 binary) and synthetic generators.

All datasets are normalized into [0,1]^n with one-hot labels.  Image data
keeps (H, W, C) shape metadata for convolutional networks; points are
stored flat and row-major (CIFAR-10 channel-planar, as on disk).
"""

import struct
from dataclasses import dataclass
from typing import Optional

import numpy as np

IDX_MAGIC_IMAGES = 0x00000803
IDX_MAGIC_LABELS = 0x00000801
CIFAR10_RECORD = 3073


class DataFormatError(ValueError):
    pass


@dataclass
class Dataset:
    points: np.ndarray  # (m, n), entries in [0, 1]
    labels: np.ndarray  # (m, c) one-hot
    image_shape: Optional[tuple] = None  # (H, W, C) when applicable
    name: str = ""

    def __post_init__(self):
        if len(self.points) != len(self.labels):
            raise ValueError("points/labels length mismatch")

    def __len__(self):
        return len(self.points)

    @property
    def n_classes(self):
        return self.labels.shape[1]


def one_hot(labels: np.ndarray, n_classes: int) -> np.ndarray:
    out = np.zeros((len(labels), n_classes), dtype=np.float64)
    out[np.arange(len(labels)), labels] = 1.0
    return out


def load_idx(images_path, labels_path, name: str = "idx") -> Dataset:
    """MNIST-style big-endian IDX image/label file pair, pixels scaled by 1/255."""
    with open(images_path, "rb") as fh:
        head = fh.read(16)
        if len(head) < 16:
            raise DataFormatError(f"{images_path}: truncated IDX header")
        magic, count, rows, cols = struct.unpack(">IIII", head)
        if magic != IDX_MAGIC_IMAGES:
            raise DataFormatError(f"{images_path}: bad magic 0x{magic:08x}")
        raw = fh.read(count * rows * cols)
    if len(raw) != count * rows * cols:
        raise DataFormatError(f"{images_path}: truncated pixel data")
    images = np.frombuffer(raw, dtype=np.uint8).reshape(count, rows * cols)

    with open(labels_path, "rb") as fh:
        head = fh.read(8)
        if len(head) < 8:
            raise DataFormatError(f"{labels_path}: truncated IDX header")
        magic, lcount = struct.unpack(">II", head)
        if magic != IDX_MAGIC_LABELS:
            raise DataFormatError(f"{labels_path}: bad magic 0x{magic:08x}")
        lraw = fh.read(lcount)
    if len(lraw) != lcount:
        raise DataFormatError(f"{labels_path}: truncated label data")
    if lcount != count:
        raise DataFormatError(f"label count {lcount} != image count {count}")
    labels = np.frombuffer(lraw, dtype=np.uint8).astype(np.int64)

    points = images.astype(np.float64) / 255.0
    return Dataset(points, one_hot(labels, int(labels.max()) + 1), (rows, cols, 1), name)


def load_cifar10(batch_paths, name: str = "cifar10") -> Dataset:
    """CIFAR-10 binary batches: 3073-byte records, channel-planar pixels."""
    points, labels = [], []
    for path in batch_paths:
        with open(path, "rb") as fh:
            raw = fh.read()
        if len(raw) == 0 or len(raw) % CIFAR10_RECORD != 0:
            raise DataFormatError(
                f"{path}: size {len(raw)} not a multiple of {CIFAR10_RECORD}"
            )
        rec = np.frombuffer(raw, dtype=np.uint8).reshape(-1, CIFAR10_RECORD)
        labels.append(rec[:, 0].astype(np.int64))
        points.append(rec[:, 1:].astype(np.float64) / 255.0)
    pts = np.concatenate(points)
    labs = np.concatenate(labels)
    return Dataset(pts, one_hot(labs, 10), (32, 32, 3), name)


def cifar10_to_hwc(points: np.ndarray) -> np.ndarray:
    """Reshape channel-planar CIFAR-10 rows to (m, 32, 32, 3) for conv nets."""
    return points.reshape(-1, 3, 32, 32).transpose(0, 2, 3, 1)


def make_synthetic(kind: str, m_per_class: int, seed: int = 0, dim: int = 2,
                   separation: float = 0.5, radius: float = 0.25,
                   std: float = 0.05) -> Dataset:
    """Two-class synthetic data in [0,1]^dim.

    "blobs": two Gaussians (given std) centered `separation` apart along
    the first axis, clipped to the cube; linearly separable when
    separation is comfortably above the noise.  "annulus": uniform cube
    samples labeled by an l2 ball of `radius` around the cube center.
    """
    if m_per_class < 1:
        raise ValueError("m_per_class must be >= 1")
    rng = np.random.Generator(np.random.Philox(key=(seed & ((1 << 64) - 1)) ^ 0x5D))
    if kind == "blobs":
        c0 = np.full(dim, 0.5)
        c1 = c0.copy()
        c0[0] -= separation / 2
        c1[0] += separation / 2
        p0 = rng.normal(c0, std, size=(m_per_class, dim))
        p1 = rng.normal(c1, std, size=(m_per_class, dim))
        pts = np.clip(np.concatenate([p0, p1]), 0.0, 1.0)
        labs = np.concatenate([np.zeros(m_per_class, int), np.ones(m_per_class, int)])
    elif kind == "annulus":
        pts = rng.random((2 * m_per_class, dim))
        center = np.full(dim, 0.5)
        labs = (np.linalg.norm(pts - center, axis=1) < radius).astype(int)
    else:
        raise ValueError(f"unknown synthetic kind {kind!r}")
    return Dataset(pts, one_hot(labs, 2), None, f"synthetic-{kind}")


def subset_split(dataset: Dataset, m_train: int, m_test: int, seed: int = 0):
    """Disjoint uniform (train, test) subsets; deterministic given seed."""
    m = len(dataset)
    if m_train + m_test > m:
        raise ValueError(f"requested {m_train}+{m_test} points from {m}")
    rng = np.random.Generator(np.random.Philox(key=(seed & ((1 << 64) - 1)) ^ 0x3A))
    order = rng.permutation(m)
    tr = np.sort(order[:m_train])
    te = np.sort(order[m_train : m_train + m_test])
    return (
        Dataset(dataset.points[tr], dataset.labels[tr], dataset.image_shape,
                dataset.name + "-train"),
        Dataset(dataset.points[te], dataset.labels[te], dataset.image_shape,
                dataset.name + "-test"),
    )


def class_subset(dataset: Dataset, label: int) -> np.ndarray:
    """Points of one class (by resolved one-hot label)."""
    return dataset.points[np.argmax(dataset.labels, axis=-1) == label]
