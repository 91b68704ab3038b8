"""Synthetic benchmark distributions and MNIST ingestion."""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .rbm import DataDistribution

MNIST_IMAGE_MAGIC = 2051
MNIST_LABEL_MAGIC = 2049


@dataclass(frozen=True)
class MnistSet:
    """Binarized MNIST images (labels kept for bookkeeping, unused in training)."""

    images: np.ndarray
    labels: np.ndarray
    count: int

    def __post_init__(self):
        if self.images.shape != (self.count, 784):
            raise ValueError("images must be (count, 784)")
        if not np.all((self.images == 0) | (self.images == 1)):
            raise ValueError("pixels must be binarized to {0,1}")


def shifting_bar(length: int, bar: int, inverted: bool = False) -> DataDistribution:
    """All cyclic shifts of a bar of `bar` consecutive ones in a length-`length`
    vector (periodic), each with mass 1/length. `inverted` swaps zeros and ones.
    """
    if not 0 < bar < length:
        raise ValueError(f"need 0 < bar < length, got bar={bar}, length={length}")
    patterns = np.zeros((length, length), dtype=np.uint8)
    for k in range(length):
        patterns[k, (k + np.arange(bar)) % length] = 1
    if inverted:
        patterns = 1 - patterns
    return DataDistribution.uniform(patterns)


def bars_and_stripes(d: int) -> DataDistribution:
    """Exhaustive enumeration of the bars-and-stripes generator on a DxD grid.

    Each of the 2^D row patterns is emitted unrotated and rotated by 90
    degrees (2^(D+1) outcomes); grids are flattened row-major and duplicate
    outcomes merged, so the all-zero and all-one grids carry twice the mass
    of the rest.
    """
    if d < 1:
        raise ValueError("grid size must be >= 1")
    outcomes = []
    for code in range(1 << d):
        rows = np.array([(code >> (d - 1 - i)) & 1 for i in range(d)], dtype=np.uint8)
        grid = np.repeat(rows[:, None], d, axis=1)
        outcomes.append(grid.ravel())
        outcomes.append(np.rot90(grid).ravel())
    outcomes = np.array(outcomes, dtype=np.uint8)
    uniq, counts = np.unique(outcomes, axis=0, return_counts=True)
    # np.unique sorts rows lexicographically, which is a stable order.
    return DataDistribution.from_counts(uniq, counts)


def random_support(n: int, n_d: int, rng: np.random.Generator) -> DataDistribution:
    """n_d distinct visible vectors drawn uniformly without replacement."""
    if n_d > (1 << n):
        raise ValueError(f"cannot draw {n_d} distinct vectors from 2^{n} states")
    seen: set[bytes] = set()
    patterns = []
    while len(patterns) < n_d:
        v = (rng.random(n) < 0.5).astype(np.uint8)
        key = v.tobytes()
        if key not in seen:
            seen.add(key)
            patterns.append(v)
    return DataDistribution.uniform(np.array(patterns, dtype=np.uint8))


def _read_be32(fh, path) -> int:
    raw = fh.read(4)
    if len(raw) != 4:
        raise ValueError(f"{path}: truncated header")
    return struct.unpack(">i", raw)[0]


def load_mnist(images_path, labels_path, threshold: float = 0.5) -> MnistSet:
    """Read an IDX image/label file pair and binarize pixels at
    pixel/255 >= threshold."""
    with open(images_path, "rb") as fh:
        magic = _read_be32(fh, images_path)
        if magic != MNIST_IMAGE_MAGIC:
            raise ValueError(f"{images_path}: bad magic {magic}, expected {MNIST_IMAGE_MAGIC}")
        count = _read_be32(fh, images_path)
        rows = _read_be32(fh, images_path)
        cols = _read_be32(fh, images_path)
        raw = fh.read(count * rows * cols)
        if len(raw) != count * rows * cols:
            raise ValueError(f"{images_path}: truncated pixel data")
        pixels = np.frombuffer(raw, dtype=np.uint8).reshape(count, rows * cols)
    with open(labels_path, "rb") as fh:
        magic = _read_be32(fh, labels_path)
        if magic != MNIST_LABEL_MAGIC:
            raise ValueError(f"{labels_path}: bad magic {magic}, expected {MNIST_LABEL_MAGIC}")
        label_count = _read_be32(fh, labels_path)
        raw = fh.read(label_count)
        if len(raw) != label_count:
            raise ValueError(f"{labels_path}: truncated label data")
        labels = np.frombuffer(raw, dtype=np.uint8).astype(int)
    if label_count != count:
        raise ValueError(f"image count {count} != label count {label_count}")
    binary = (pixels / 255.0 >= threshold).astype(np.uint8)
    return MnistSet(images=binary, labels=labels, count=count)
