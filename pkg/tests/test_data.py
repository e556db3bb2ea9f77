import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mppd_lab.data import (
    BadMagicError,
    CountMismatchError,
    DatasetSpec,
    TruncatedError,
    encode_idx_images,
    encode_idx_labels,
    load_idx,
    make_blobs,
    parse_idx,
    parse_idx_images,
    robustness_blobs,
)


def test_idx_header_arithmetic():
    buf = struct.pack(">IIII", 0x00000803, 2, 28, 28) + bytes(1568)
    X = parse_idx_images(buf)
    assert X.shape == (2, 784)


def test_idx_full_intensity_is_one():
    buf = encode_idx_images(np.full((1, 2, 2), 255, dtype=np.uint8))
    assert np.all(parse_idx_images(buf) == 1.0)


def test_idx_truncated_payload_names_counts():
    buf = struct.pack(">IIII", 0x00000803, 2, 28, 28) + bytes(1000)
    with pytest.raises(TruncatedError, match="truncated.*1568.*1000"):
        parse_idx_images(buf)


def test_idx_bad_magic():
    with pytest.raises(BadMagicError):
        parse_idx_images(struct.pack(">IIII", 0x00000801, 1, 1, 1) + b"\x00")


def test_idx_count_mismatch():
    imgs = encode_idx_images(np.zeros((3, 2, 2), dtype=np.uint8))
    with pytest.raises(CountMismatchError):
        parse_idx(imgs, encode_idx_labels(np.zeros(2)))


@settings(max_examples=30, deadline=None)
@given(arrays(np.uint8, st.tuples(st.integers(1, 5), st.integers(1, 6), st.integers(1, 6))))
def test_idx_round_trip(images):
    labels = np.arange(len(images)) % 10
    ds = parse_idx(encode_idx_images(images), encode_idx_labels(labels))
    assert np.array_equal(np.rint(ds.X * 255).astype(np.uint8), images.reshape(len(images), -1))
    assert ds.y.tolist() == labels.tolist()


def test_load_idx_subset(tmp_path):
    (tmp_path / "i").write_bytes(encode_idx_images(np.zeros((5, 2, 2), dtype=np.uint8)))
    (tmp_path / "l").write_bytes(encode_idx_labels(np.arange(5)))
    assert len(load_idx(tmp_path / "i", tmp_path / "l", subset=3)) == 3


def test_blobs_linearly_separable():
    ds = make_blobs(DatasetSpec(centers=np.array([[0.2, 0.2], [0.8, 0.8]]), samples_per_class=500, noise_std=0.05, seed=0))
    centers = np.array([[0.2, 0.2], [0.8, 0.8]])
    pred = np.argmin(((ds.X[:, None, :] - centers[None]) ** 2).sum(-1), axis=1)
    assert np.mean(pred == ds.y) >= 0.99


def test_blobs_zero_noise_equal_centers():
    c = np.array([[0.1, 0.9, 0.5], [0.6, 0.2, 0.3]])
    ds = make_blobs(DatasetSpec(centers=c, samples_per_class=4, noise_std=0.0, seed=1))
    assert np.array_equal(ds.X, c[ds.y])


def test_blobs_seed_determinism_and_range():
    spec = DatasetSpec(centers=np.array([[0.0, 0.0], [1.0, 1.0]]), samples_per_class=50, noise_std=0.3, seed=4)
    a, b = make_blobs(spec), make_blobs(spec)
    assert np.array_equal(a.X, b.X) and np.array_equal(a.y, b.y)
    assert a.X.min() >= 0 and a.X.max() <= 1


@pytest.mark.parametrize(
    "spec",
    [
        DatasetSpec(centers=None, samples_per_class=3),
        DatasetSpec(centers=np.array([[0.5, 0.5]]), samples_per_class=3),
        DatasetSpec(centers=np.array([[0.2], [0.8]]), samples_per_class=0),
        DatasetSpec(centers=np.array([[0.2], [0.8]]), samples_per_class=3, noise_std=-1.0),
    ],
)
def test_degenerate_blob_specs_rejected(spec):
    with pytest.raises(ValueError):
        make_blobs(spec)


def test_robustness_blobs_layout():
    ds = robustness_blobs(50, seed=0)
    assert ds.X.shape == (100, 784)
    assert sorted(set(ds.y.tolist())) == [0, 1]
    gap = ds.X[ds.y == 1].mean(0) - ds.X[ds.y == 0].mean(0)
    assert np.all(gap[:8] > 0.3)
    assert abs(np.median(gap[8:]) - 0.02) < 0.01
