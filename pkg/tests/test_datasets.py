import itertools
import struct

import numpy as np
import pytest

from modetrain.datasets import (
    MnistSet,
    bars_and_stripes,
    load_mnist,
    random_support,
    shifting_bar,
)
from modetrain.rbm import DataDistribution


# ---------------------------------------------------------------- shifting bar

def test_shifting_bar_one_hot():
    data = shifting_bar(9, 1)
    assert data.n_patterns == 9
    assert np.all(data.masses == 1.0 / 9.0)
    assert np.all(data.patterns.sum(axis=1) == 1)
    # every position is the bar exactly once
    assert np.all(data.patterns.sum(axis=0) == 1)


def test_shifting_bar_wide_bar_wraps():
    data = shifting_bar(14, 7)
    assert data.n_patterns == 14
    assert np.all(data.patterns.sum(axis=1) == 7)
    # pattern k has ones at k..k+6 mod 14
    for k in range(14):
        expected = np.zeros(14, dtype=np.uint8)
        expected[(k + np.arange(7)) % 14] = 1
        assert np.any(np.all(data.patterns == expected, axis=1))


def test_shifting_bar_inverted():
    data = shifting_bar(9, 2, inverted=True)
    assert np.all(data.patterns.sum(axis=1) == 7)


def test_shifting_bar_masses_and_distinctness():
    for length, bar in [(5, 1), (8, 3), (12, 11)]:
        data = shifting_bar(length, bar)
        assert abs(data.masses.sum() - 1.0) < 1e-12
        assert len({row.tobytes() for row in data.patterns}) == length


def test_shifting_bar_rejects_bad_bar():
    with pytest.raises(ValueError):
        shifting_bar(5, 5)
    with pytest.raises(ValueError):
        shifting_bar(5, 0)


# ---------------------------------------------------------------- bars & stripes

def brute_bars_and_stripes(d):
    """Enumerate the generative process directly: choose row bits, then
    rotate or not."""
    outcomes = []
    for bits in itertools.product((0, 1), repeat=d):
        grid = np.array([[b] * d for b in bits], dtype=np.uint8)
        outcomes.append(tuple(grid.ravel()))
        outcomes.append(tuple(np.rot90(grid).ravel()))
    return outcomes


def test_bars_and_stripes_d3():
    data = bars_and_stripes(3)
    assert data.n_patterns == 14
    assert int(data.multiset_counts.sum()) == 16
    all_zero = np.zeros(9, dtype=np.uint8)
    all_one = np.ones(9, dtype=np.uint8)
    for special in (all_zero, all_one):
        idx = np.flatnonzero(np.all(data.patterns == special, axis=1))
        assert len(idx) == 1
        assert data.masses[idx[0]] == 2.0 / 16.0


def test_bars_and_stripes_d2_enumeration():
    data = bars_and_stripes(2)
    outcomes = brute_bars_and_stripes(2)
    assert len(outcomes) == 8
    assert data.n_patterns == len(set(outcomes)) == 6
    from collections import Counter
    counts = Counter(outcomes)
    for pattern, count in zip(data.patterns, data.multiset_counts):
        assert counts[tuple(pattern)] == count


def test_bars_and_stripes_row_or_column_constant():
    data = bars_and_stripes(3)
    for pattern in data.patterns:
        grid = pattern.reshape(3, 3)
        rows_const = all(len(set(row)) == 1 for row in grid)
        cols_const = all(len(set(col)) == 1 for col in grid.T)
        assert rows_const or cols_const


def test_bars_and_stripes_masses_sum():
    for d in (1, 2, 3, 4):
        assert abs(bars_and_stripes(d).masses.sum() - 1.0) < 1e-12


# ---------------------------------------------------------------- random support

def test_random_support_basic():
    data = random_support(6, 10, np.random.default_rng(0))
    assert data.n_patterns == 10
    assert data.patterns.shape == (10, 6)
    assert np.all(data.masses == 0.1)
    assert len({row.tobytes() for row in data.patterns}) == 10


def test_random_support_full_cube():
    data = random_support(3, 8, np.random.default_rng(1))
    assert data.n_patterns == 8
    assert len({row.tobytes() for row in data.patterns}) == 8


def test_random_support_deterministic():
    a = random_support(6, 10, np.random.default_rng(42))
    b = random_support(6, 10, np.random.default_rng(42))
    assert np.array_equal(a.patterns, b.patterns)


def test_random_support_too_many():
    with pytest.raises(ValueError):
        random_support(3, 9, np.random.default_rng(0))


# ---------------------------------------------------------------- mnist idx

def write_idx_pair(tmp_path, images, labels, image_magic=2051, label_magic=2049,
                   declared_count=None, truncate_images=False):
    count, rows, cols = images.shape
    declared = count if declared_count is None else declared_count
    img_path = tmp_path / "images.idx"
    with open(img_path, "wb") as fh:
        fh.write(struct.pack(">iiii", image_magic, declared, rows, cols))
        payload = images.astype(np.uint8).tobytes()
        fh.write(payload[:-5] if truncate_images else payload)
    lbl_path = tmp_path / "labels.idx"
    with open(lbl_path, "wb") as fh:
        fh.write(struct.pack(">ii", label_magic, len(labels)))
        fh.write(np.asarray(labels, dtype=np.uint8).tobytes())
    return img_path, lbl_path


def test_load_mnist_binarizes(tmp_path):
    rng = np.random.default_rng(7)
    images = rng.integers(0, 256, (5, 28, 28), dtype=np.uint8)
    labels = rng.integers(0, 10, 5)
    img, lbl = write_idx_pair(tmp_path, images, labels)
    got = load_mnist(img, lbl, threshold=0.5)
    assert got.count == 5
    assert got.images.shape == (5, 784)
    expected = (images.reshape(5, 784) / 255.0 >= 0.5).astype(np.uint8)
    assert np.array_equal(got.images, expected)
    assert np.array_equal(got.labels, labels)


def test_load_mnist_threshold_boundaries(tmp_path):
    images = np.zeros((2, 28, 28), dtype=np.uint8)
    img, lbl = write_idx_pair(tmp_path, images, [0, 1])
    assert np.all(load_mnist(img, lbl, threshold=0.5).images == 0)
    # threshold 0: every pixel value >= 0 maps to one
    assert np.all(load_mnist(img, lbl, threshold=0.0).images == 1)


def test_load_mnist_bad_magic(tmp_path):
    images = np.zeros((1, 28, 28), dtype=np.uint8)
    img, lbl = write_idx_pair(tmp_path, images, [3], image_magic=1234)
    with pytest.raises(ValueError, match="magic"):
        load_mnist(img, lbl)


def test_load_mnist_truncated(tmp_path):
    images = np.zeros((2, 28, 28), dtype=np.uint8)
    img, lbl = write_idx_pair(tmp_path, images, [0, 1], truncate_images=True)
    with pytest.raises(ValueError, match="truncated"):
        load_mnist(img, lbl)


def test_load_mnist_count_mismatch(tmp_path):
    images = np.zeros((2, 28, 28), dtype=np.uint8)
    img, lbl = write_idx_pair(tmp_path, images, [0, 1, 2])
    with pytest.raises(ValueError, match="count"):
        load_mnist(img, lbl)


# ---------------------------------------------------------------- export

def test_dataset_json_round_trip():
    data = bars_and_stripes(2)
    back = DataDistribution.from_json(data.to_json())
    assert np.array_equal(back.patterns, data.patterns)
    assert np.array_equal(back.masses, data.masses)
    assert np.array_equal(back.multiset_counts, data.multiset_counts)
