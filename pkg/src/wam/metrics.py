"""Evaluation metrics over binary images and sparse codes."""

from __future__ import annotations

import math
from typing import NamedTuple, Sequence

import numpy as np

from .bitvec import BitVector

__all__ = ["binarize", "mse", "mse_split", "bit_stats", "BitStats", "optimal_sparsity"]


def binarize(images: np.ndarray, threshold: float = 0.5) -> np.ndarray:
    """Threshold grayscale images to 0/1 uint8."""
    return (np.asarray(images) > threshold).astype(np.uint8)


def _check_binary_pair(originals, reconstructions):
    p = np.asarray(originals)
    q = np.asarray(reconstructions)
    if p.shape != q.shape:
        raise ValueError(f"shape mismatch: {p.shape} vs {q.shape}")
    if p.ndim < 2:
        raise ValueError("expected a batch axis plus pixel axes")
    for name, arr in (("originals", p), ("reconstructions", q)):
        if not np.isin(arr, (0, 1)).all():
            raise ValueError(f"{name} must be binary valued")
    return p.astype(bool), q.astype(bool)


def _split_fractions(p: np.ndarray, q: np.ndarray) -> tuple[float, float]:
    total = p.size
    lost = int(np.count_nonzero(p & ~q))
    extra = int(np.count_nonzero(~p & q))
    return lost / total, extra / total


def mse(originals: np.ndarray, reconstructions: np.ndarray) -> float:
    """Mean over images of the mean squared per-pixel difference.

    For binary inputs the squared difference is the disagreement indicator,
    so this is the average fraction of differing pixels. Computed as the sum
    of the two :func:`mse_split` components so the decomposition is exact in
    floating point, not just mathematically.
    """
    p, q = _check_binary_pair(originals, reconstructions)
    lost, extra = _split_fractions(p, q)
    return lost + extra


def mse_split(originals: np.ndarray, reconstructions: np.ndarray) -> tuple[float, float]:
    """Split the error into (lost, extra) components.

    ``lost`` counts pixels where the original is 1 and the reconstruction 0,
    ``extra`` the reverse; the two always sum to :func:`mse` exactly.
    """
    p, q = _check_binary_pair(originals, reconstructions)
    return _split_fractions(p, q)


class BitStats(NamedTuple):
    mean: float
    std: float
    min: int
    max: int


def bit_stats(codes: Sequence[BitVector]) -> BitStats:
    """Population statistics of the popcounts of a set of codes."""
    if not len(codes):
        raise ValueError("bit_stats of an empty set")
    counts = np.array([c.popcount for c in codes], dtype=np.int64)
    return BitStats(float(counts.mean()), float(counts.std()), int(counts.min()), int(counts.max()))


def optimal_sparsity(n: int) -> float:
    """Active-bit count at which a binary associative matrix of n-bit patterns
    stores the most information: log2(n / 4)."""
    if n <= 4:
        raise ValueError(f"pattern length must exceed 4, got {n}")
    return math.log2(n / 4)
