"""Fixed-length binary patterns stored sparsely as their active positions.

A BitVector is the currency every other module trades in: codes, cues and
retrieved patterns are all BitVectors. Only the active positions are kept,
so popcount is O(1) and iterating a sparse pattern costs its popcount, not
its length.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

__all__ = ["BitVector", "pack_words", "codes_to_csr"]


class BitVector:
    """Immutable binary vector of a fixed length with sorted active positions.

    ``active`` is canonicalized on construction: positions are sorted,
    de-duplicated, bounds-checked and stored as a read-only int64 array.
    """

    __slots__ = ("length", "active")

    def __init__(self, length: int, active: Iterable[int] = ()):
        length = int(length)
        if length <= 0:
            raise ValueError(f"length must be positive, got {length}")
        arr = np.unique(np.asarray(list(active) if not isinstance(active, np.ndarray) else active, dtype=np.int64))
        if arr.size and (arr[0] < 0 or arr[-1] >= length):
            raise ValueError(f"active positions must lie in [0, {length}), got range [{arr[0]}, {arr[-1]}]")
        arr.setflags(write=False)
        object.__setattr__(self, "length", length)
        object.__setattr__(self, "active", arr)

    def __setattr__(self, name, value):
        raise AttributeError("BitVector is immutable")

    @classmethod
    def from_dense(cls, dense) -> "BitVector":
        """Build from a 0/1 (or boolean) array; nonzero entries become active."""
        dense = np.asarray(dense)
        if dense.ndim != 1:
            raise ValueError(f"expected a 1-d array, got shape {dense.shape}")
        return cls(dense.shape[0], np.flatnonzero(dense))

    def to_dense(self, dtype=np.uint8) -> np.ndarray:
        out = np.zeros(self.length, dtype=dtype)
        out[self.active] = 1
        return out

    @property
    def popcount(self) -> int:
        return int(self.active.size)

    def issubset(self, other: "BitVector") -> bool:
        if self.length != other.length:
            return False
        return bool(np.isin(self.active, other.active, assume_unique=True).all())

    def __eq__(self, other) -> bool:
        if not isinstance(other, BitVector):
            return NotImplemented
        return self.length == other.length and np.array_equal(self.active, other.active)

    __hash__ = None  # mutable-array payload; equality only

    def __repr__(self) -> str:
        shown = ", ".join(map(str, self.active[:8]))
        more = ", ..." if self.popcount > 8 else ""
        return f"BitVector(length={self.length}, active=[{shown}{more}] ({self.popcount} bits))"


def pack_words(bv: BitVector) -> np.ndarray:
    """Pack a BitVector into 64-bit words, LSB = lowest position in each word."""
    n_words = (bv.length + 63) // 64
    words = np.zeros(n_words, dtype=np.uint64)
    if bv.active.size:
        np.bitwise_or.at(words, bv.active >> 6, np.uint64(1) << (bv.active & 63).astype(np.uint64))
    return words


def codes_to_csr(codes: Sequence[BitVector], length: int) -> tuple[np.ndarray, np.ndarray]:
    """Concatenate the active sets of many equal-length codes into CSR arrays.

    Returns (indptr int64 of size len(codes)+1, indices int32). Used by the
    batch kernels; every code must have the given length.
    """
    indptr = np.zeros(len(codes) + 1, dtype=np.int64)
    for i, c in enumerate(codes):
        if c.length != length:
            raise ValueError(f"code {i} has length {c.length}, expected {length}")
        indptr[i + 1] = indptr[i] + c.popcount
    indices = np.empty(indptr[-1], dtype=np.int32)
    for i, c in enumerate(codes):
        indices[indptr[i]:indptr[i + 1]] = c.active
    return indptr, indices
