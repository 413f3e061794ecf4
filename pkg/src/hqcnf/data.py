"""MNIST IDX ingestion and conversion between images and flow samples."""
from __future__ import annotations

import gzip
import struct
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .flow import SampleVector

__all__ = [
    "ImageDataset",
    "IdxFormatError",
    "BadMagicError",
    "TruncatedError",
    "CountMismatchError",
    "parse_idx",
    "write_idx",
    "load_idx_files",
    "filter_digits",
    "downscale",
    "to_sample",
    "from_sample",
    "holdout_split",
]

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801
DEQUANT = 1.0 / 255.0


class IdxFormatError(ValueError):
    pass


class BadMagicError(IdxFormatError):
    pass


class TruncatedError(IdxFormatError):
    pass


class CountMismatchError(IdxFormatError):
    pass


@dataclass
class ImageDataset:
    images: np.ndarray  # (N, H, W) in [0, 1]
    labels: np.ndarray  # (N,)
    source: str = ""

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise ValueError(f"{len(self.images)} images but {len(self.labels)} labels")

    def __len__(self):
        return len(self.labels)

    def subset(self, idx):
        return ImageDataset(self.images[idx], self.labels[idx], self.source)


def _header(blob, magic, n_dims, what):
    need = 4 * (1 + n_dims)
    if len(blob) < 4:
        raise TruncatedError(f"{what}: stream shorter than the magic number")
    (found,) = struct.unpack(">I", blob[:4])
    if found != magic:
        raise BadMagicError(f"{what}: magic 0x{found:08x}, expected 0x{magic:08x}")
    if len(blob) < need:
        raise TruncatedError(f"{what}: header truncated")
    return struct.unpack(">" + "I" * n_dims, blob[4:need]), need


def parse_idx(image_bytes, label_bytes, source=""):
    (count, rows, cols), off = _header(image_bytes, IMAGE_MAGIC, 3, "images")
    (n_labels,), loff = _header(label_bytes, LABEL_MAGIC, 1, "labels")
    if count != n_labels:
        raise CountMismatchError(f"{count} images but {n_labels} labels")
    body = image_bytes[off:off + count * rows * cols]
    if len(body) != count * rows * cols:
        raise TruncatedError(f"images: expected {count * rows * cols} pixel bytes, got {len(body)}")
    lbody = label_bytes[loff:loff + n_labels]
    if len(lbody) != n_labels:
        raise TruncatedError(f"labels: expected {n_labels} bytes, got {len(lbody)}")
    pixels = np.frombuffer(body, dtype=np.uint8).reshape(count, rows, cols)
    labels = np.frombuffer(lbody, dtype=np.uint8).astype(np.int64)
    return ImageDataset(pixels / 255.0, labels, source)


def write_idx(ds):
    """Inverse of :func:`parse_idx`: pixels are rounded back to uint8."""
    n, rows, cols = ds.images.shape
    pix = np.clip(np.rint(ds.images * 255.0), 0, 255).astype(np.uint8)
    images = struct.pack(">IIII", IMAGE_MAGIC, n, rows, cols) + pix.tobytes()
    labels = struct.pack(">II", LABEL_MAGIC, n) + np.asarray(ds.labels, dtype=np.uint8).tobytes()
    return images, labels


def _read_maybe_gzip(path):
    raw = Path(path).read_bytes()
    return gzip.decompress(raw) if raw[:2] == b"\x1f\x8b" else raw


def load_idx_files(images_path, labels_path):
    return parse_idx(_read_maybe_gzip(images_path), _read_maybe_gzip(labels_path),
                     source=str(images_path))


def filter_digits(ds, keep):
    keep = set(keep)
    mask = np.isin(ds.labels, sorted(keep))
    out = ds.subset(np.flatnonzero(mask))
    if len(out) == 0:
        warnings.warn(f"no samples with labels in {sorted(keep)}", stacklevel=2)
    return out


def downscale(images, target):
    """Center-crop to the largest multiple of ``target`` and block-average.

    Works on a single ``(H, W)`` image or a stack ``(..., H, W)``; for 28x28
    and ``target=8`` the crop is 24x24 and the blocks are 3x3.
    """
    images = np.asarray(images, dtype=np.float64)
    H, W = images.shape[-2:]
    if target < 1 or target > min(H, W):
        raise ValueError(f"cannot downscale {H}x{W} to {target}x{target}")
    k = min(H, W) // target
    side = k * target
    top, left = (H - side) // 2, (W - side) // 2
    crop = images[..., top:top + side, left:left + side]
    blocks = crop.reshape(crop.shape[:-2] + (target, k, target, k))
    return blocks.mean(axis=(-3, -1))


def to_sample(images, d2, rng=None):
    """Flatten row-major; the first ``d2`` pixels are classical, the rest quantum.

    With ``rng`` each pixel gets dequantization noise drawn from U[0, 1/255).
    """
    images = np.asarray(images, dtype=np.float64)
    flat = images.reshape(len(images), -1) if images.ndim == 3 else images.reshape(1, -1)
    if rng is not None:
        flat = flat + rng.uniform(0.0, DEQUANT, size=flat.shape)
    if not 0 < d2 <= flat.shape[1]:
        raise ValueError(f"d2={d2} does not fit {flat.shape[1]} pixels")
    return SampleVector(flat[:, :d2], flat[:, d2:].astype(np.complex128))


def from_sample(y, shape):
    """Real parts of the quantum segment rejoin the classical ones; clamp to [0, 1]."""
    flat = np.concatenate([y.classical, y.quantum.real], axis=1)
    if flat.shape[1] != int(np.prod(shape)):
        raise ValueError(f"sample of size {flat.shape[1]} cannot fill an image of shape {shape}")
    return np.clip(flat, 0.0, 1.0).reshape((len(y),) + tuple(shape))


def holdout_split(ds, n_holdout, rng, n_train=None):
    """Seeded shuffle, then ``(train, holdout)`` with the holdout taken first."""
    n = len(ds)
    if n_holdout >= n:
        raise ValueError(f"holdout of {n_holdout} leaves nothing from {n} samples")
    order = rng.permutation(n)
    hold = order[:n_holdout]
    train = order[n_holdout:]
    if n_train is not None:
        if n_train > len(train):
            raise ValueError(f"asked for {n_train} training samples, only {len(train)} left")
        train = train[:n_train]
    return ds.subset(np.sort(train)), ds.subset(np.sort(hold))
