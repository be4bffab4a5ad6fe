"""IDX dataset ingestion and seeded balanced-subset construction.

The benchmark image sets (MNIST, Fashion-MNIST, Kuzushiji-MNIST) ship
as big-endian IDX files: a u32 magic (0x00000803 for u8 image tensors,
0x00000801 for u8 label vectors), the dimension sizes, then the raw
bytes. Files may be gzip-compressed; compression is sniffed from the
leading bytes, not the filename. Pixels are scaled to [0, 1].

Dataset acquisition is out of band: callers hand in file paths, and
expected SHA-256 digests can be verified against configuration.
"""

from __future__ import annotations

import gzip
import hashlib
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "IdxError", "BadMagicError", "TruncatedPayloadError", "CountMismatchError",
    "DataError",
    "load_idx_images", "load_idx_labels", "load_labeled_images",
    "sha256_file", "verify_checksum",
    "DatasetSpec", "balanced_subset",
]

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801


class DataError(ValueError):
    """Dataset-level problem (missing data, bad checksum, thin classes)."""


class IdxError(DataError):
    """Malformed IDX file."""


class BadMagicError(IdxError):
    pass


class TruncatedPayloadError(IdxError):
    pass


class CountMismatchError(IdxError):
    pass


def _read_raw(path) -> bytes:
    blob = Path(path).read_bytes()
    if blob[:2] == b"\x1f\x8b":
        return gzip.decompress(blob)
    return blob


def load_idx_images(path) -> np.ndarray:
    """Parse an IDX u8 image tensor into (n, rows, cols) floats in [0, 1]."""
    raw = _read_raw(path)
    if len(raw) < 16:
        raise TruncatedPayloadError(f"{path}: header shorter than 16 bytes")
    magic, count, rows, cols = struct.unpack(">IIII", raw[:16])
    if magic != IMAGE_MAGIC:
        raise BadMagicError(
            f"{path}: magic 0x{magic:08x}, expected 0x{IMAGE_MAGIC:08x}")
    need = 16 + count * rows * cols
    if len(raw) != need:
        raise TruncatedPayloadError(
            f"{path}: expected {need} bytes for {count} images, got {len(raw)}")
    pixels = np.frombuffer(raw, dtype=np.uint8, offset=16)
    return pixels.reshape(count, rows, cols).astype(np.float64) / 255.0


def load_idx_labels(path) -> np.ndarray:
    """Parse an IDX u8 label vector."""
    raw = _read_raw(path)
    if len(raw) < 8:
        raise TruncatedPayloadError(f"{path}: header shorter than 8 bytes")
    magic, count = struct.unpack(">II", raw[:8])
    if magic != LABEL_MAGIC:
        raise BadMagicError(
            f"{path}: magic 0x{magic:08x}, expected 0x{LABEL_MAGIC:08x}")
    if len(raw) != 8 + count:
        raise TruncatedPayloadError(
            f"{path}: expected {8 + count} bytes for {count} labels, got {len(raw)}")
    return np.frombuffer(raw, dtype=np.uint8, offset=8).astype(np.int64)


def load_labeled_images(image_path, label_path) -> tuple[np.ndarray, np.ndarray]:
    images = load_idx_images(image_path)
    labels = load_idx_labels(label_path)
    if images.shape[0] != labels.shape[0]:
        raise CountMismatchError(
            f"{image_path} holds {images.shape[0]} images but {label_path} "
            f"holds {labels.shape[0]} labels")
    return images, labels


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def verify_checksum(path, expected: str) -> None:
    got = sha256_file(path)
    if got != expected.lower():
        raise DataError(f"{path}: sha256 {got} != expected {expected}")


@dataclass
class DatasetSpec:
    """Balanced-subset recipe: per-class count, split fraction and seed."""

    name: str = "mnist"
    per_class: int = 100
    train_fraction: float = 0.7
    rng_seed: int = 0

    def __post_init__(self):
        if self.per_class < 1:
            raise ValueError("per_class must be >= 1")
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must lie in (0, 1)")


def balanced_subset(images: np.ndarray, labels: np.ndarray,
                    spec: DatasetSpec) -> tuple[np.ndarray, np.ndarray]:
    """Seeded per-class draw split into disjoint train/test index arrays.

    Each class contributes exactly per_class samples; the split is
    stratified, with ceil(train_fraction * per_class) of every class in
    the training set and the remainder in the test set. The same spec
    always yields the same index sets.
    """
    labels = np.asarray(labels)
    classes = np.unique(labels)
    rng = np.random.default_rng(spec.rng_seed)
    n_train = int(np.ceil(spec.train_fraction * spec.per_class))
    train_idx, test_idx = [], []
    for cls in classes:
        pool = np.flatnonzero(labels == cls)
        if pool.size < spec.per_class:
            raise DataError(
                f"class {cls} has {pool.size} samples, need {spec.per_class}")
        pick = rng.choice(pool, size=spec.per_class, replace=False)
        train_idx.append(pick[:n_train])
        test_idx.append(pick[n_train:])
    return np.concatenate(train_idx), np.concatenate(test_idx)
