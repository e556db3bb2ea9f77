"""Datasets: seeded Gaussian blobs and the IDX binary format."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .numerics import Rng, gaussian_vector

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


class IdxError(ValueError):
    """Malformed IDX data."""


class BadMagicError(IdxError):
    pass


class TruncatedError(IdxError):
    pass


class CountMismatchError(IdxError):
    pass


@dataclass
class Dataset:
    X: np.ndarray  # (n, features) in [0, 1]
    y: np.ndarray  # (n,) int

    def __len__(self) -> int:
        return len(self.y)

    def subset(self, n: int) -> "Dataset":
        return Dataset(self.X[:n], self.y[:n])


@dataclass
class DatasetSpec:
    kind: str = "blobs"
    # blobs
    centers: Optional[np.ndarray] = None
    samples_per_class: int = 0
    noise_std: float | np.ndarray = 0.05
    seed: int = 0
    # idx
    images_path: Optional[str] = None
    labels_path: Optional[str] = None
    subset: Optional[int] = None


def _header(buf: bytes, expected_magic: int, what: str) -> tuple[list[int], int]:
    if len(buf) < 4:
        raise TruncatedError(f"{what}: truncated header (expected at least 4 bytes, got {len(buf)})")
    (magic,) = struct.unpack(">I", buf[:4])
    if magic != expected_magic:
        raise BadMagicError(f"{what}: bad magic 0x{magic:08x}, expected 0x{expected_magic:08x}")
    ndim = magic & 0xFF
    end = 4 + 4 * ndim
    if len(buf) < end:
        raise TruncatedError(f"{what}: truncated header (expected {end} bytes, got {len(buf)})")
    dims = list(struct.unpack(f">{ndim}I", buf[4:end]))
    return dims, end


def _payload(buf: bytes, dims: list[int], offset: int, what: str) -> np.ndarray:
    expected = int(np.prod(dims, dtype=np.int64))
    actual = len(buf) - offset
    if actual < expected:
        raise TruncatedError(f"{what}: truncated payload, expected {expected} bytes but got {actual}")
    return np.frombuffer(buf, dtype=np.uint8, count=expected, offset=offset)


def parse_idx_images(buf: bytes) -> np.ndarray:
    """Images as ``(count, rows * cols)`` floats scaled by ``1/255``."""
    dims, off = _header(buf, IDX_IMAGES_MAGIC, "images")
    raw = _payload(buf, dims, off, "images")
    return raw.reshape(dims[0], -1).astype(np.float64) / 255.0


def parse_idx_labels(buf: bytes) -> np.ndarray:
    dims, off = _header(buf, IDX_LABELS_MAGIC, "labels")
    return _payload(buf, dims, off, "labels").astype(np.int64)


def parse_idx(image_bytes: bytes, label_bytes: bytes) -> Dataset:
    X = parse_idx_images(image_bytes)
    y = parse_idx_labels(label_bytes)
    if len(X) != len(y):
        raise CountMismatchError(f"{len(X)} images but {len(y)} labels")
    return Dataset(X, y)


def load_idx(images_path, labels_path, subset: Optional[int] = None) -> Dataset:
    ds = parse_idx(Path(images_path).read_bytes(), Path(labels_path).read_bytes())
    return ds if subset is None else ds.subset(subset)


def encode_idx_images(images: np.ndarray) -> bytes:
    """Inverse of :func:`parse_idx_images` for ``uint8`` arrays ``(count, rows, cols)``."""
    images = np.asarray(images, dtype=np.uint8)
    return struct.pack(">I", IDX_IMAGES_MAGIC) + struct.pack(">3I", *images.shape) + images.tobytes()


def encode_idx_labels(labels: np.ndarray) -> bytes:
    labels = np.asarray(labels, dtype=np.uint8)
    return struct.pack(">II", IDX_LABELS_MAGIC, len(labels)) + labels.tobytes()


def make_blobs(spec: DatasetSpec, rng: Optional[Rng] = None) -> Dataset:
    """Gaussian clusters around ``spec.centers``, clipped into [0, 1].

    Samples are ordered by class then shuffled with the same generator.
    ``noise_std`` may be a scalar or one value per feature.
    """
    if spec.centers is None:
        raise ValueError("blobs need centers")
    centers = np.atleast_2d(np.asarray(spec.centers, dtype=np.float64))
    k, dim = centers.shape
    if k < 2:
        raise ValueError("blobs need at least two classes")
    if spec.samples_per_class < 1:
        raise ValueError("blobs need at least one sample per class")
    std = np.broadcast_to(np.asarray(spec.noise_std, dtype=np.float64), (dim,))
    if np.any(std < 0):
        raise ValueError("noise_std must be nonnegative")
    if rng is None:
        from .numerics import make_rng

        rng = make_rng(spec.seed)
    n = spec.samples_per_class
    X = np.repeat(centers, n, axis=0) + gaussian_vector(rng, (k * n, dim)) * std
    y = np.repeat(np.arange(k), n)
    order = rng.permutation(k * n)
    return Dataset(np.clip(X[order], 0.0, 1.0), y[order])


def robustness_blobs(
    samples_per_class: int,
    seed: int,
    dim: int = 784,
    robust_dims: int = 8,
    robust_gap: float = 0.5,
    robust_std: float = 0.2,
    weak_gap: float = 0.02,
    weak_std: float = 0.05,
    background: float = 0.1,
    rng: Optional[Rng] = None,
) -> Dataset:
    """Two blobs whose mean difference splits into few strong and many faint features.

    The first ``robust_dims`` coordinates separate the classes by
    ``robust_gap`` each; the rest by ``weak_gap``.  Faint features are
    individually below an 8/255 budget yet jointly very predictive, so a
    naturally trained classifier leans on them and is easy to attack.
    """
    c0 = np.full(dim, background - weak_gap / 2)
    c1 = np.full(dim, background + weak_gap / 2)
    c0[:robust_dims] = 0.5 - robust_gap / 2
    c1[:robust_dims] = 0.5 + robust_gap / 2
    std = np.full(dim, weak_std)
    std[:robust_dims] = robust_std
    spec = DatasetSpec(centers=np.stack([c0, c1]), samples_per_class=samples_per_class, noise_std=std, seed=seed)
    return make_blobs(spec, rng)
