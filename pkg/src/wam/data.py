"""IDX dataset files: the big-endian image/label format MNIST ships in."""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import CorruptHeaderError, DimensionMismatchError, TruncatedPayloadError

__all__ = ["Dataset", "load_idx", "save_idx_images", "save_idx_labels"]

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801


@dataclass
class Dataset:
    """Grayscale images normalized to [0, 1] plus their integer labels."""

    images: np.ndarray  # (N, H, W) float32
    labels: np.ndarray  # (N,) int64

    def __post_init__(self):
        if self.images.shape[0] != self.labels.shape[0]:
            raise DimensionMismatchError(f"{self.images.shape[0]} images vs {self.labels.shape[0]} labels")

    def __len__(self) -> int:
        return self.images.shape[0]


def _read_exact(fh, count: int, what: str) -> bytes:
    data = fh.read(count)
    if len(data) < count:
        raise TruncatedPayloadError(f"{what}: wanted {count} bytes, file ends after {len(data)}")
    return data


def load_idx(images_path: str, labels_path: str) -> Dataset:
    """Parse a matching pair of IDX image and label files.

    Raises CorruptHeaderError on a bad magic number, TruncatedPayloadError
    when a file ends early, and DimensionMismatchError when the two files
    disagree on the item count.
    """
    with open(images_path, "rb") as fh:
        magic, count, rows, cols = struct.unpack(">IIII", _read_exact(fh, 16, "image header"))
        if magic != IMAGE_MAGIC:
            raise CorruptHeaderError(f"image file magic 0x{magic:08x}, expected 0x{IMAGE_MAGIC:08x}")
        raw = _read_exact(fh, count * rows * cols, "image payload")
        images = np.frombuffer(raw, dtype=np.uint8).reshape(count, rows, cols)
    with open(labels_path, "rb") as fh:
        magic, label_count = struct.unpack(">II", _read_exact(fh, 8, "label header"))
        if magic != LABEL_MAGIC:
            raise CorruptHeaderError(f"label file magic 0x{magic:08x}, expected 0x{LABEL_MAGIC:08x}")
        labels = np.frombuffer(_read_exact(fh, label_count, "label payload"), dtype=np.uint8)
    if count != label_count:
        raise DimensionMismatchError(f"{count} images vs {label_count} labels")
    return Dataset(images=images.astype(np.float32) / 255.0, labels=labels.astype(np.int64))


def save_idx_images(path: str, images: np.ndarray) -> None:
    """Write images as an IDX file; floats in [0, 1] are scaled back to bytes."""
    images = np.asarray(images)
    if images.ndim != 3:
        raise ValueError(f"expected (N, H, W) images, got shape {images.shape}")
    if images.dtype != np.uint8:
        images = np.rint(np.clip(images, 0.0, 1.0) * 255.0).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(struct.pack(">IIII", IMAGE_MAGIC, *images.shape))
        fh.write(images.tobytes())


def save_idx_labels(path: str, labels: np.ndarray) -> None:
    labels = np.asarray(labels)
    if labels.ndim != 1:
        raise ValueError(f"expected flat labels, got shape {labels.shape}")
    if labels.min(initial=0) < 0 or labels.max(initial=0) > 255:
        raise ValueError("labels must fit in a byte")
    with open(path, "wb") as fh:
        fh.write(struct.pack(">II", LABEL_MAGIC, labels.shape[0]))
        fh.write(labels.astype(np.uint8).tobytes())
