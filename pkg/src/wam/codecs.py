"""Codecs between raw data and sparse binary codes, plus bit-deletion noise.

Two encoders live here. The label codec turns an integer class into a long
stochastic code: each class owns an interval of positions, positions inside
the label's interval activate with a high probability and positions outside
with a low one (usually zero). Decoding picks the interval with the most
active bits. The image codec is a patch-dictionary code: the image is
binarized, cut into a grid of receptive fields, and each non-blank field
activates the positions of its best-matching learned prototypes, giving a
location-by-feature binary code of fixed length.

All stochastic operations take an explicit numpy Generator and are
reproducible from its state; nothing here keeps hidden randomness.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import BinaryIO, NamedTuple, Sequence

import numpy as np

from .bitvec import BitVector
from .errors import (
    CorruptHeaderError,
    DimensionMismatchError,
    FormatError,
    TruncatedPayloadError,
    UntrainedDictionaryError,
    VersionMismatchError,
)

__all__ = [
    "NxhConfig",
    "DecodedLabel",
    "nxh_encode",
    "nxh_encode_batch",
    "nxh_decode",
    "interval_counts",
    "PatchEncoderConfig",
    "learn_dictionary",
    "patch_encode",
    "patch_encode_batch",
    "patch_decode",
    "patch_decode_batch",
    "patch_decode_array",
    "save_dictionary",
    "load_dictionary",
    "delete_bits",
    "sparsify",
]


# ---------------------------------------------------------------------------
# Label codec
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NxhConfig:
    """Noisy X-hot label code: ``classes`` intervals of ``bits_per_class`` bits.

    Positions inside the label's interval activate with ``p_class``, all other
    positions with ``p_rest``; ``p_class`` must exceed ``p_rest``.
    """

    classes: int
    bits_per_class: int
    p_class: float
    p_rest: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.classes <= 0 or self.bits_per_class <= 0:
            raise ValueError(f"classes and bits_per_class must be positive, got {self.classes}, {self.bits_per_class}")
        if not (0.0 <= self.p_rest <= 1.0 and 0.0 <= self.p_class <= 1.0):
            raise ValueError(f"probabilities must lie in [0, 1], got p_class={self.p_class}, p_rest={self.p_rest}")
        if self.p_class <= self.p_rest:
            raise ValueError(f"p_class ({self.p_class}) must exceed p_rest ({self.p_rest})")

    @property
    def code_length(self) -> int:
        return self.classes * self.bits_per_class


class DecodedLabel(NamedTuple):
    label: int
    confidence: float  # winning interval popcount / total popcount; 0.0 for an empty code


def nxh_encode(label: int, cfg: NxhConfig, rng: np.random.Generator) -> BitVector:
    """Draw one stochastic label code.

    Each position in the label's own interval is active independently with
    probability ``p_class``; every other position with ``p_rest``.
    """
    if not 0 <= label < cfg.classes:
        raise ValueError(f"label {label} out of range [0, {cfg.classes})")
    x = cfg.bits_per_class
    if cfg.p_rest == 0.0:
        inside = np.flatnonzero(rng.random(x) < cfg.p_class)
        return BitVector(cfg.code_length, label * x + inside)
    u = rng.random(cfg.code_length)
    threshold = np.full(cfg.code_length, cfg.p_rest)
    threshold[label * x:(label + 1) * x] = cfg.p_class
    return BitVector(cfg.code_length, np.flatnonzero(u < threshold))


def nxh_encode_batch(labels: Sequence[int], cfg: NxhConfig, rng: np.random.Generator) -> list[BitVector]:
    """Vectorized :func:`nxh_encode` over many labels."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= cfg.classes):
        raise ValueError(f"labels out of range [0, {cfg.classes})")
    x = cfg.bits_per_class
    if cfg.p_rest == 0.0:
        hits = rng.random((labels.size, x)) < cfg.p_class
        offs = labels * x
        return [BitVector(cfg.code_length, offs[i] + np.flatnonzero(hits[i])) for i in range(labels.size)]
    return [nxh_encode(int(l), cfg, rng) for l in labels]


def interval_counts(code: BitVector, cfg: NxhConfig) -> np.ndarray:
    """Active-bit count of each class interval."""
    if code.length != cfg.code_length:
        raise DimensionMismatchError(f"code has length {code.length}, config expects {cfg.code_length}")
    return np.bincount(code.active // cfg.bits_per_class, minlength=cfg.classes)


def nxh_decode(code: BitVector, cfg: NxhConfig) -> DecodedLabel:
    """Map a label code back to its class: argmax of interval activity.

    Ties break toward the lowest interval index, so an all-zero code decodes
    to label 0 with confidence 0.0 (the zero-confidence flag).
    """
    counts = interval_counts(code, cfg)
    label = int(counts.argmax())
    total = int(counts.sum())
    return DecodedLabel(label, counts[label] / total if total else 0.0)


# ---------------------------------------------------------------------------
# Patch-dictionary image codec
# ---------------------------------------------------------------------------

@dataclass
class PatchEncoderConfig:
    """Grid-of-receptive-fields image codec backed by learned patch prototypes.

    The image is binarized at ``binarize_threshold`` and split into a
    ``grid_rows`` x ``grid_cols`` grid of square fields of ``patch_size``
    pixels. Each non-blank field activates the ``winners_per_field`` best
    correlated of the ``dictionary_size`` prototypes, at code position
    field_index * dictionary_size + prototype_index. Blank fields emit no
    bits, so codes of blank-ish images are sparser than the k-per-field
    ceiling.
    """

    grid_rows: int = 7
    grid_cols: int = 7
    patch_size: int = 4
    dictionary_size: int = 16
    winners_per_field: int = 2
    binarize_threshold: float = 0.5
    dictionary: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if min(self.grid_rows, self.grid_cols, self.patch_size, self.dictionary_size, self.winners_per_field) <= 0:
            raise ValueError("all patch encoder dimensions must be positive")
        if self.winners_per_field > self.dictionary_size:
            raise ValueError(f"winners_per_field ({self.winners_per_field}) exceeds dictionary_size ({self.dictionary_size})")
        if self.dictionary is not None:
            d = np.asarray(self.dictionary, dtype=np.float32)
            if d.shape != (self.dictionary_size, self.patch_size * self.patch_size):
                raise ValueError(f"dictionary shape {d.shape} does not match (K={self.dictionary_size}, {self.patch_size}^2)")
            self.dictionary = d

    @property
    def code_length(self) -> int:
        return self.grid_rows * self.grid_cols * self.dictionary_size

    @property
    def field_count(self) -> int:
        return self.grid_rows * self.grid_cols

    @property
    def image_shape(self) -> tuple[int, int]:
        return (self.grid_rows * self.patch_size, self.grid_cols * self.patch_size)


def _binary_fields(images: np.ndarray, cfg: PatchEncoderConfig) -> np.ndarray:
    """Binarize and regroup images into (batch, field, pixel) float32."""
    images = np.asarray(images)
    if images.ndim == 2:
        images = images[None]
    if images.shape[1:] != cfg.image_shape:
        raise DimensionMismatchError(f"image shape {images.shape[1:]} does not match encoder grid {cfg.image_shape}")
    ps = cfg.patch_size
    binar = images > cfg.binarize_threshold
    fields = (
        binar.reshape(-1, cfg.grid_rows, ps, cfg.grid_cols, ps)
        .transpose(0, 1, 3, 2, 4)
        .reshape(-1, cfg.field_count, ps * ps)
    )
    return fields.astype(np.float32)


def _fields_to_image(fields: np.ndarray, cfg: PatchEncoderConfig) -> np.ndarray:
    ps = cfg.patch_size
    return (
        fields.reshape(-1, cfg.grid_rows, cfg.grid_cols, ps, ps)
        .transpose(0, 1, 3, 2, 4)
        .reshape(-1, *cfg.image_shape)
    )


def learn_dictionary(
    images: np.ndarray,
    cfg: PatchEncoderConfig,
    rng: np.random.Generator,
    n_patches: int = 20000,
    n_iters: int = 25,
) -> np.ndarray:
    """Learn prototype patches by k-means over sampled non-blank fields.

    Plain Lloyd iterations with centers seeded from distinct sampled patches,
    so the result is a pure function of the data, the config and the
    generator state. Returns a (dictionary_size, patch_size^2) float32 array;
    assign it to ``cfg.dictionary`` to arm the codec.
    """
    images = np.asarray(images)
    if images.size == 0:
        raise ValueError("cannot learn a dictionary from an empty training set")
    fields = _binary_fields(images, cfg).reshape(-1, cfg.patch_size ** 2)
    fields = fields[fields.sum(axis=1) > 0]
    if fields.shape[0] == 0:
        raise ValueError("no non-blank patches in the training set")
    if fields.shape[0] > n_patches:
        fields = fields[rng.choice(fields.shape[0], n_patches, replace=False)]
    distinct = np.unique(fields, axis=0)
    k = cfg.dictionary_size
    if distinct.shape[0] < k:
        raise ValueError(f"only {distinct.shape[0]} distinct patches sampled, need at least {k}")
    centers = distinct[rng.choice(distinct.shape[0], k, replace=False)].astype(np.float64)
    assign = None
    for _ in range(max(1, n_iters)):
        # squared distance argmin via the dot-product expansion
        d2 = (centers ** 2).sum(axis=1)[None, :] - 2.0 * (fields @ centers.T)
        new_assign = d2.argmin(axis=1)
        if assign is not None and np.array_equal(new_assign, assign):
            break
        assign = new_assign
        for c in range(k):
            members = fields[assign == c]
            if members.shape[0]:
                centers[c] = members.mean(axis=0)
    return centers.astype(np.float32)


def _require_dictionary(cfg: PatchEncoderConfig) -> np.ndarray:
    if cfg.dictionary is None:
        raise UntrainedDictionaryError("patch encoder has no dictionary; run learn_dictionary first")
    return cfg.dictionary


def patch_encode_batch(images: np.ndarray, cfg: PatchEncoderConfig) -> list[BitVector]:
    """Encode a batch of grayscale images into sparse codes."""
    dictionary = _require_dictionary(cfg)
    fields = _binary_fields(images, cfg)
    norms = np.linalg.norm(dictionary, axis=1)
    norms[norms == 0] = 1.0
    scores = fields @ (dictionary / norms[:, None]).T  # (B, F, K)
    k = cfg.winners_per_field
    # stable order makes ties deterministic: lowest prototype index wins
    winners = np.argsort(-scores, axis=2, kind="stable")[:, :, :k]
    winners.sort(axis=2)
    blank = fields.sum(axis=2) == 0
    field_base = np.arange(cfg.field_count, dtype=np.int64) * cfg.dictionary_size
    positions = field_base[None, :, None] + winners
    out = []
    for b in range(fields.shape[0]):
        out.append(BitVector(cfg.code_length, positions[b][~blank[b]].ravel()))
    return out


def patch_encode(image: np.ndarray, cfg: PatchEncoderConfig) -> BitVector:
    """Encode one grayscale image; active bits are (field, prototype) pairs."""
    return patch_encode_batch(np.asarray(image)[None], cfg)[0]


def _decode_weights(weights: np.ndarray, cfg: PatchEncoderConfig) -> np.ndarray:
    dictionary = _require_dictionary(cfg)
    totals = weights.sum(axis=2, keepdims=True)
    fields = (weights @ dictionary) / np.maximum(totals, 1.0)
    fields = (fields >= 0.5).astype(np.float32)
    return _fields_to_image(fields, cfg)


def patch_decode_batch(codes: Sequence[BitVector], cfg: PatchEncoderConfig) -> np.ndarray:
    """Decode codes back to binary grayscale images of shape (B, H, W).

    Every active bit stamps its prototype into its field; multiple stamps in
    one field average, and the result is thresholded at 0.5.
    """
    _require_dictionary(cfg)
    n_fields, k_size = cfg.field_count, cfg.dictionary_size
    weights = np.zeros((len(codes), n_fields, k_size), dtype=np.float32)
    for b, code in enumerate(codes):
        if code.length != cfg.code_length:
            raise DimensionMismatchError(f"code has length {code.length}, encoder expects {cfg.code_length}")
        weights[b, code.active // k_size, code.active % k_size] = 1.0
    return _decode_weights(weights, cfg)


def patch_decode_array(codes: np.ndarray, cfg: PatchEncoderConfig) -> np.ndarray:
    """Decode a dense (B, code_length) 0/1 array; the batch-pipeline fast path."""
    codes = np.asarray(codes)
    if codes.ndim != 2 or codes.shape[1] != cfg.code_length:
        raise DimensionMismatchError(f"code array shape {codes.shape}, encoder expects (B, {cfg.code_length})")
    weights = codes.astype(np.float32).reshape(codes.shape[0], cfg.field_count, cfg.dictionary_size)
    return _decode_weights(weights, cfg)


def patch_decode(code: BitVector, cfg: PatchEncoderConfig) -> np.ndarray:
    """Decode one code to a binary grayscale image."""
    return patch_decode_batch([code], cfg)[0]


# ---------------------------------------------------------------------------
# Dictionary file format
# ---------------------------------------------------------------------------
#
# magic "WDC1" | version u32 LE | K u32 LE | patch_size u32 LE
# then K * patch_size^2 float32 little-endian prototype values.

_DICT_MAGIC = b"WDC1"
_DICT_VERSION = 1
_DICT_HEADER = struct.Struct("<4sIII")


def save_dictionary(sink: str | BinaryIO, dictionary: np.ndarray, patch_size: int) -> None:
    dictionary = np.asarray(dictionary, dtype=np.float32)
    if dictionary.ndim != 2 or dictionary.shape[1] != patch_size * patch_size:
        raise ValueError(f"dictionary shape {dictionary.shape} does not match patch_size {patch_size}")
    header = _DICT_HEADER.pack(_DICT_MAGIC, _DICT_VERSION, dictionary.shape[0], patch_size)
    payload = dictionary.astype("<f4").tobytes()
    if isinstance(sink, (str, bytes)) or hasattr(sink, "__fspath__"):
        with open(sink, "wb") as fh:
            fh.write(header)
            fh.write(payload)
    else:
        sink.write(header)
        sink.write(payload)


def load_dictionary(source: str | BinaryIO) -> tuple[np.ndarray, int]:
    """Read a prototype dictionary; returns (array of shape (K, patch_size^2), patch_size)."""
    if isinstance(source, (str, bytes)) or hasattr(source, "__fspath__"):
        with open(source, "rb") as fh:
            return _load_dictionary_stream(fh)
    return _load_dictionary_stream(source)


def _load_dictionary_stream(fh: BinaryIO) -> tuple[np.ndarray, int]:
    header = fh.read(_DICT_HEADER.size)
    if len(header) < _DICT_HEADER.size:
        raise CorruptHeaderError(f"header is {len(header)} bytes, expected {_DICT_HEADER.size}")
    magic, version, k, patch_size = _DICT_HEADER.unpack(header)
    if magic != _DICT_MAGIC:
        raise CorruptHeaderError(f"bad magic bytes {magic!r}")
    if version != _DICT_VERSION:
        raise VersionMismatchError(f"format version {version}, this reader supports {_DICT_VERSION}")
    if k == 0 or patch_size == 0:
        raise CorruptHeaderError(f"zero-sized dictionary header (K={k}, patch_size={patch_size})")
    expected = k * patch_size * patch_size * 4
    payload = fh.read(expected + 1)
    if len(payload) < expected:
        raise TruncatedPayloadError(f"payload is {len(payload)} bytes, expected {expected}")
    if len(payload) > expected:
        raise FormatError(f"trailing data after {expected} payload bytes")
    arr = np.frombuffer(payload, dtype="<f4").reshape(k, patch_size * patch_size).astype(np.float32)
    return arr, patch_size


# ---------------------------------------------------------------------------
# Stochastic bit deletion
# ---------------------------------------------------------------------------

def delete_bits(code: BitVector, p_del: float, rng: np.random.Generator) -> BitVector:
    """Drop each active bit independently with probability ``p_del``.

    Never adds a bit: the result is a subset of the input.
    """
    if not 0.0 <= p_del <= 1.0:
        raise ValueError(f"p_del must lie in [0, 1], got {p_del}")
    keep = rng.random(code.popcount) >= p_del
    return BitVector(code.length, code.active[keep])


def sparsify(code: BitVector, target_bits: int, rng: np.random.Generator) -> BitVector:
    """Thin a code to exactly ``target_bits`` uniformly chosen active bits.

    Codes already at or below the target are returned unchanged.
    """
    if target_bits < 0:
        raise ValueError(f"target_bits must be non-negative, got {target_bits}")
    if code.popcount <= target_bits:
        return code
    return BitVector(code.length, rng.choice(code.active, target_bits, replace=False))
