"""Binary associative memory with single-pass Hebbian storage.

The memory is an m x n binary matrix. Storing an association (question x,
answer y) ORs the outer product of the two patterns into the matrix, so a
weight is 1 as soon as any stored pair correlates the two positions and
training needs exactly one pass over the data. Retrieval computes each
output unit's dendritic potential (the count of active cue positions it is
connected to) and fires every unit whose potential reaches the maximum:
the soft-threshold rule. An empty cue, or a cue no unit responds to, yields
an empty output.

The matrix is stored row-major, bit-packed into 64-bit words with the
least-significant bit of each word holding the lowest column of its span.
Training mutates the matrix; word-level OR updates commute, so any
storage order yields the same matrix. After training the memory is
effectively immutable and retrieval is read-only, so it can be shared
freely across threads or processes.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass
from typing import BinaryIO, Sequence

import numpy as np

from . import _kernels
from .bitvec import BitVector, codes_to_csr, pack_words
from .errors import (
    CorruptHeaderError,
    DimensionMismatchError,
    FormatError,
    TruncatedPayloadError,
    VersionMismatchError,
)

__all__ = ["WillshawMemory", "RetrievalResult", "PotentialsSummary"]

_MAGIC = b"WAM1"
_VERSION = 1
_HEADER = struct.Struct("<4sIQQQ")  # magic, version, m, n, stored_count


@dataclass(frozen=True)
class PotentialsSummary:
    """Min / mean / max of the dendritic potentials seen during a retrieval."""

    min: int
    mean: float
    max: int


@dataclass(frozen=True)
class RetrievalResult:
    """Output pattern plus the soft threshold that produced it.

    Every active output bit had a potential equal to ``max_potential``; when
    ``max_potential`` is 0 the output is empty.
    """

    output: BitVector
    max_potential: int
    potentials_summary: PotentialsSummary


class WillshawMemory:
    """m x n binary weight matrix with OR-accumulation storage.

    ``m`` is the question (cue) dimension, ``n`` the answer dimension. The
    auto-associative case stores each pattern against itself with m == n;
    heteroassociative pairs are supported by the same operations.
    """

    def __init__(self, m: int, n: int | None = None):
        if n is None:
            n = m
        if m <= 0 or n <= 0:
            raise ValueError(f"dimensions must be positive, got {m}x{n}")
        self.m = int(m)
        self.n = int(n)
        self._n_words = (self.n + 63) // 64
        self.words = np.zeros((self.m, self._n_words), dtype=np.uint64)
        self.stored_count = 0
        self._dense_cache: np.ndarray | None = None

    # -- training ---------------------------------------------------------

    def store(self, question: BitVector, answer: BitVector | None = None) -> None:
        """OR the outer product of (question, answer) into the matrix.

        ``answer=None`` stores the question against itself (auto-association).
        Weights only ever go from 0 to 1; re-storing a pair is a no-op on the
        matrix. ``stored_count`` counts store calls, including empty patterns.
        """
        if answer is None:
            answer = question
        self._check_dims(question, answer)
        if question.popcount and answer.popcount:
            self.words[question.active] |= pack_words(answer)
        self.stored_count += 1
        self._dense_cache = None

    def store_batch(self, questions: Sequence[BitVector], answers: Sequence[BitVector] | None = None) -> None:
        """Fold a whole dataset into the matrix in one pass.

        Produces exactly the matrix that storing each pair with ``store``
        would, in any order. ``answers=None`` auto-associates.
        """
        if answers is None:
            answers = questions
        if len(questions) != len(answers):
            raise ValueError(f"{len(questions)} questions vs {len(answers)} answers")
        for q, a in zip(questions, answers):
            self._check_dims(q, a)
        if not questions:
            return
        indptr, indices = codes_to_csr(questions, self.m)
        pat_words = np.stack([pack_words(a) for a in answers])
        _kernels.or_rows(self.words, indptr, indices, pat_words)
        self.stored_count += len(questions)
        self._dense_cache = None

    # -- retrieval --------------------------------------------------------

    def potentials(self, cue: BitVector) -> np.ndarray:
        """Dendritic potential of every output unit for this cue.

        Exact integer counts: potential j is the number of active cue
        positions whose row has a 1 in column j.
        """
        if cue.length != self.m:
            raise DimensionMismatchError(f"cue has length {cue.length}, memory expects {self.m}")
        if not cue.popcount:
            return np.zeros(self.n, dtype=np.int32)
        return np.sum(self._dense()[cue.active], axis=0, dtype=np.int32)

    def potentials_batch(self, cues: Sequence[BitVector]) -> np.ndarray:
        """Potentials for many cues at once; integer array of shape (len(cues), n)."""
        indptr, indices = codes_to_csr(cues, self.m)
        return _kernels.gather_sum(self._dense(), indptr, indices)

    def retrieve(self, cue: BitVector) -> RetrievalResult:
        """Soft-threshold retrieval: fire every unit whose potential is maximal.

        The threshold is the maximum potential over all units; a maximum of 0
        (empty cue, or untrained rows) yields an empty output.
        """
        s = self.potentials(cue)
        theta = int(s.max()) if s.size else 0
        if theta > 0:
            out = BitVector(self.n, np.flatnonzero(s == theta))
        else:
            out = BitVector(self.n)
        summary = PotentialsSummary(min=int(s.min()), mean=float(s.mean()), max=theta)
        return RetrievalResult(output=out, max_potential=theta, potentials_summary=summary)

    # -- inspection -------------------------------------------------------

    def dense_weights(self) -> np.ndarray:
        """The weight matrix as a fresh (m, n) uint8 array of 0/1 entries."""
        return self._dense().copy()

    def density(self) -> float:
        """Fraction of weights that are 1."""
        return float(self._dense().sum(dtype=np.int64)) / (self.m * self.n)

    def _dense(self) -> np.ndarray:
        # Unpacked uint8 copy, cached between stores; this is the array the
        # retrieval kernels read. astype('<u8') is free on little-endian
        # hosts and byteswaps on big-endian ones, so the uint8 view always
        # reads words LSB-first.
        if self._dense_cache is None:
            as_bytes = self.words.astype("<u8", copy=False).view(np.uint8)
            bits = np.unpackbits(as_bytes, axis=1, bitorder="little")
            self._dense_cache = np.ascontiguousarray(bits[:, : self.n])
        return self._dense_cache

    def _check_dims(self, question: BitVector, answer: BitVector) -> None:
        if question.length != self.m:
            raise DimensionMismatchError(f"question has length {question.length}, memory expects {self.m}")
        if answer.length != self.n:
            raise DimensionMismatchError(f"answer has length {answer.length}, memory expects {self.n}")

    def __eq__(self, other) -> bool:
        if not isinstance(other, WillshawMemory):
            return NotImplemented
        return (
            self.m == other.m
            and self.n == other.n
            and self.stored_count == other.stored_count
            and np.array_equal(self.words, other.words)
        )

    __hash__ = None

    def __repr__(self) -> str:
        return f"WillshawMemory(m={self.m}, n={self.n}, stored_count={self.stored_count})"

    # -- serialization ----------------------------------------------------
    #
    # Binary format, bit-exact:
    #   magic "WAM1" | version u32 LE | m u64 LE | n u64 LE | stored u64 LE
    #   then ceil(m*n/8) payload bytes: the matrix flattened row-major, each
    #   byte holding 8 consecutive bits with bit 0 (LSB) the lowest index.
    #   Trailing pad bits of the last byte must be zero.

    def save(self, sink: str | BinaryIO) -> None:
        """Write the memory to a path or binary file object."""
        payload = np.packbits(self._dense().ravel(), bitorder="little").tobytes()
        header = _HEADER.pack(_MAGIC, _VERSION, self.m, self.n, self.stored_count)
        if isinstance(sink, (str, bytes)) or hasattr(sink, "__fspath__"):
            with open(sink, "wb") as fh:
                fh.write(header)
                fh.write(payload)
        else:
            sink.write(header)
            sink.write(payload)

    @classmethod
    def load(cls, source: str | bytes | BinaryIO) -> "WillshawMemory":
        """Read a memory written by :meth:`save`; the round trip is bit-exact.

        Raises CorruptHeaderError, VersionMismatchError or
        TruncatedPayloadError depending on what is wrong with the file.
        """
        if isinstance(source, (str, bytes)) or hasattr(source, "__fspath__"):
            with open(source, "rb") as fh:
                return cls._load_stream(fh)
        return cls._load_stream(source)

    @classmethod
    def _load_stream(cls, fh: BinaryIO) -> "WillshawMemory":
        header = fh.read(_HEADER.size)
        if len(header) < _HEADER.size:
            raise CorruptHeaderError(f"header is {len(header)} bytes, expected {_HEADER.size}")
        magic, version, m, n, stored = _HEADER.unpack(header)
        if magic != _MAGIC:
            raise CorruptHeaderError(f"bad magic bytes {magic!r}")
        if version != _VERSION:
            raise VersionMismatchError(f"format version {version}, this reader supports {_VERSION}")
        if m == 0 or n == 0:
            raise CorruptHeaderError(f"zero dimension {m}x{n}")
        expected = (m * n + 7) // 8
        payload = fh.read(expected + 1)
        if len(payload) < expected:
            raise TruncatedPayloadError(f"payload is {len(payload)} bytes, expected {expected}")
        if len(payload) > expected:
            raise FormatError(f"trailing data after {expected} payload bytes")
        flat = np.unpackbits(np.frombuffer(payload, dtype=np.uint8), bitorder="little")
        if flat[m * n:].any():
            raise FormatError("nonzero padding bits in final payload byte")
        bits = flat[: m * n].reshape(m, n)
        mem = cls(m, n)
        pad = np.zeros((m, mem._n_words * 64 - n), dtype=np.uint8)
        packed = np.packbits(np.concatenate([bits, pad], axis=1), axis=1, bitorder="little")
        mem.words = packed.view("<u8").astype(np.uint64, copy=False)
        mem.stored_count = int(stored)
        return mem


def roundtrip_bytes(memory: WillshawMemory) -> bytes:
    """Serialize to bytes in the standard format (mainly for tests)."""
    buf = io.BytesIO()
    memory.save(buf)
    return buf.getvalue()
