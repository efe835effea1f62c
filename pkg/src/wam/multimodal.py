"""Multi-modality layer: named segments concatenated into one stored code.

The memory itself has no notion of modality; it stores flat binary vectors.
This module supplies the bookkeeping that makes that useful: a schema naming
the segments of a concatenated code, cue construction by zeroing segments,
and the higher-level operations built on segment masking. Classification
deletes the description segment and lets the memory fill it back in;
generation walks the opposite direction, growing a visual pattern from a
description through retrieve/thin-out rounds until its activity lands in an
acceptance interval.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from .bitvec import BitVector
from .codecs import NxhConfig, delete_bits, nxh_decode, nxh_encode, sparsify
from .errors import DimensionMismatchError, NoEvidenceError
from .memory import WillshawMemory

__all__ = [
    "ModalitySchema",
    "DesCode",
    "GenerationConfig",
    "GenerationResult",
    "TraceStep",
    "Classification",
    "concat",
    "mask_modality",
    "classify",
    "make_blob",
    "estimate_acceptance_interval",
    "generate",
]


@dataclass(frozen=True)
class ModalitySchema:
    """Ordered named segments partitioning a concatenated code."""

    segments: tuple[tuple[str, int], ...]

    def __post_init__(self):
        segs = tuple((str(n), int(l)) for n, l in self.segments)
        names = [n for n, _ in segs]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate modality names in {names}")
        if not segs:
            raise ValueError("schema needs at least one segment")
        if any(l <= 0 for _, l in segs):
            raise ValueError("segment lengths must be positive")
        object.__setattr__(self, "segments", segs)

    @property
    def total_length(self) -> int:
        return sum(l for _, l in self.segments)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.segments)

    def range(self, name: str) -> tuple[int, int]:
        """Half-open position range [start, stop) of the named segment."""
        start = 0
        for n, l in self.segments:
            if n == name:
                return start, start + l
            start += l
        raise KeyError(f"unknown modality {name!r}; schema has {self.names}")

    def length_of(self, name: str) -> int:
        start, stop = self.range(name)
        return stop - start


@dataclass(frozen=True)
class DesCode:
    """A BitVector interpreted through a modality schema."""

    bits: BitVector
    schema: ModalitySchema

    def __post_init__(self):
        if self.bits.length != self.schema.total_length:
            raise DimensionMismatchError(
                f"bits have length {self.bits.length}, schema totals {self.schema.total_length}")

    @classmethod
    def from_segments(cls, schema: ModalitySchema, parts: Mapping[str, BitVector]) -> "DesCode":
        """Assemble a code from per-modality patterns; omitted segments are zero."""
        unknown = set(parts) - set(schema.names)
        if unknown:
            raise KeyError(f"unknown modalities {sorted(unknown)}; schema has {schema.names}")
        chunks = []
        for name, length in schema.segments:
            bv = parts.get(name)
            if bv is None:
                continue
            if bv.length != length:
                raise DimensionMismatchError(f"segment {name!r} expects length {length}, got {bv.length}")
            start, _ = schema.range(name)
            chunks.append(bv.active + start)
        active = np.concatenate(chunks) if chunks else []
        return cls(BitVector(schema.total_length, active), schema)

    def extract(self, name: str) -> BitVector:
        """The named segment as a standalone BitVector."""
        start, stop = self.schema.range(name)
        a = self.bits.active
        lo, hi = np.searchsorted(a, (start, stop))
        return BitVector(stop - start, a[lo:hi] - start)

    def replace(self, name: str, segment: BitVector) -> "DesCode":
        """A copy with the named segment swapped for ``segment``."""
        start, stop = self.schema.range(name)
        if segment.length != stop - start:
            raise DimensionMismatchError(f"segment {name!r} expects length {stop - start}, got {segment.length}")
        a = self.bits.active
        keep = a[(a < start) | (a >= stop)]
        return DesCode(BitVector(self.bits.length, np.concatenate([keep, segment.active + start])), self.schema)

    def zero(self, name: str) -> "DesCode":
        """A copy with the named segment cleared."""
        start, stop = self.schema.range(name)
        return self.replace(name, BitVector(stop - start))

    def segment_popcount(self, name: str) -> int:
        start, stop = self.schema.range(name)
        a = self.bits.active
        lo, hi = np.searchsorted(a, (start, stop))
        return int(hi - lo)


def concat(parts: Sequence[tuple[str, BitVector]]) -> DesCode:
    """Concatenate named patterns into one code, building the schema from the order given."""
    schema = ModalitySchema(tuple((name, bv.length) for name, bv in parts))
    return DesCode.from_segments(schema, dict(parts))


def mask_modality(dc: DesCode, name: str) -> DesCode:
    """Clear one modality, leaving the rest untouched: the standard cue constructor."""
    return dc.zero(name)


class Classification(NamedTuple):
    label: int | None  # None when the retrieved description is empty
    confidence: float


def classify(
    memory: WillshawMemory,
    cue: DesCode,
    nxh_cfg: NxhConfig,
    description: str = "description",
) -> Classification:
    """Retrieve a description-less cue and decode the description it comes back with.

    The cue's description segment must be all-zero (that is the task: the
    memory fills it in). When the retrieval leaves the description empty
    there is no evidence to decode and the label is None; scoring treats
    that as a misclassification.
    """
    if cue.schema.length_of(description) != nxh_cfg.code_length:
        raise DimensionMismatchError(
            f"description segment is {cue.schema.length_of(description)} bits, "
            f"label config expects {nxh_cfg.code_length}")
    if cue.segment_popcount(description):
        raise ValueError("cue must have an all-zero description segment")
    result = memory.retrieve(cue.bits)
    desc = DesCode(result.output, cue.schema).extract(description)
    if desc.popcount == 0:
        return Classification(None, 0.0)
    decoded = nxh_decode(desc, nxh_cfg)
    return Classification(decoded.label, decoded.confidence)


def _full_interval_description(label: int, nxh_cfg: NxhConfig) -> BitVector:
    # Deterministic all-bits-on description: the whole interval, so the cue
    # matches every stored code of the class regardless of which half of the
    # interval each one drew.
    if not 0 <= label < nxh_cfg.classes:
        raise ValueError(f"label {label} out of range [0, {nxh_cfg.classes})")
    x = nxh_cfg.bits_per_class
    return BitVector(nxh_cfg.code_length, np.arange(label * x, (label + 1) * x))


def make_blob(
    memory: WillshawMemory,
    label: int,
    nxh_cfg: NxhConfig,
    schema: ModalitySchema,
    description: str = "description",
) -> DesCode:
    """Retrieve from a description-only cue: the class's aggregate feature mass.

    The result collects every feature the memory associates with the class,
    typically far denser than any single stored pattern. An untrained memory
    yields an all-zero blob.
    """
    cue = DesCode.from_segments(schema, {description: _full_interval_description(label, nxh_cfg)})
    return DesCode(memory.retrieve(cue.bits).output, schema)


def estimate_acceptance_interval(
    memory: WillshawMemory,
    samples: Sequence[DesCode],
    p_del: float,
    rng: np.random.Generator,
    band: tuple[float, float] = (25.0, 75.0),
    visual: str = "visual",
) -> tuple[float, float]:
    """Percentile band of retrieved visual popcounts under bit-deletion noise.

    Each sample keeps its description, loses visual bits with probability
    ``p_del``, and is retrieved; the distribution of retrieved visual
    popcounts characterizes healthy completions, and its central band is a
    usable acceptance interval for :func:`generate`.
    """
    if not len(samples):
        raise ValueError("cannot estimate an interval from an empty sample")
    counts = np.empty(len(samples), dtype=np.int64)
    for i, dc in enumerate(samples):
        noisy = dc.replace(visual, delete_bits(dc.extract(visual), p_del, rng))
        out = DesCode(memory.retrieve(noisy.bits).output, dc.schema)
        counts[i] = out.segment_popcount(visual)
    low, high = np.percentile(counts, band)
    return float(low), float(high)


@dataclass(frozen=True)
class GenerationConfig:
    """Knobs of the iterative generation loop.

    ``interval_min``/``interval_max`` bound (exclusively) the visual popcount
    a retrieval must reach to be accepted. ``sparsity_initial`` is the bit
    budget the first thin-out keeps and ``sparsity_increment`` is added to it
    every iteration, so later rounds feed the memory progressively more
    evidence. ``max_iters`` caps the loop; the underlying procedure has no
    bound of its own, and the cap is what distinguishes divergence from slow
    convergence.
    """

    interval_min: float
    interval_max: float
    sparsity_initial: int
    sparsity_increment: int
    max_iters: int = 100
    seed: int | None = None

    def __post_init__(self):
        if not self.interval_min < self.interval_max:
            raise ValueError(f"interval_min ({self.interval_min}) must be below interval_max ({self.interval_max})")
        if self.sparsity_initial < 0 or self.sparsity_increment < 0:
            raise ValueError("sparsity knobs must be non-negative")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be at least 1, got {self.max_iters}")


class TraceStep(NamedTuple):
    iteration: int
    bits_after_retrieve: int
    bits_after_sparsify: int | None  # None on the accepting iteration
    sparsity_target: int


@dataclass(frozen=True)
class GenerationResult:
    code: DesCode
    iterations: int
    converged: bool
    trace: tuple[TraceStep, ...]


def generate(
    memory: WillshawMemory,
    label: int,
    gen_cfg: GenerationConfig,
    nxh_cfg: NxhConfig,
    schema: ModalitySchema,
    rng: np.random.Generator,
    description: str = "description",
    visual: str = "visual",
) -> GenerationResult:
    """Grow a pattern of the requested class by iterative retrieve/thin-out.

    The description is encoded once and held fixed. Starting from an empty
    visual segment, each iteration retrieves the (description | visual) cue;
    if the retrieved visual popcount falls strictly inside the acceptance
    interval the retrieval is returned, otherwise the retrieved visual
    segment is thinned to the current bit budget and becomes the next cue.
    A retrieval with no active output at all raises NoEvidenceError; running
    out of iterations returns the last retrieval flagged as non-convergent.
    """
    if schema.length_of(description) != nxh_cfg.code_length:
        raise DimensionMismatchError(
            f"description segment is {schema.length_of(description)} bits, "
            f"label config expects {nxh_cfg.code_length}")
    desc = nxh_encode(label, nxh_cfg, rng)
    code = BitVector(schema.length_of(visual))
    budget = gen_cfg.sparsity_initial
    trace: list[TraceStep] = []
    last: DesCode | None = None
    for iteration in range(1, gen_cfg.max_iters + 1):
        cue = DesCode.from_segments(schema, {description: desc, visual: code})
        result = memory.retrieve(cue.bits)
        if result.max_potential == 0:
            raise NoEvidenceError(f"retrieval for label {label} produced no active output")
        last = DesCode(result.output, schema)
        retrieved_visual = last.extract(visual)
        n_visual = retrieved_visual.popcount
        if gen_cfg.interval_min < n_visual < gen_cfg.interval_max:
            trace.append(TraceStep(iteration, n_visual, None, budget))
            return GenerationResult(last, iteration, True, tuple(trace))
        code = sparsify(retrieved_visual, budget, rng)
        trace.append(TraceStep(iteration, n_visual, code.popcount, budget))
        budget += gen_cfg.sparsity_increment
    return GenerationResult(last, gen_cfg.max_iters, False, tuple(trace))
