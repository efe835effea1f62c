"""Binary associative memory over sparse distributed codes.

Single-pass Hebbian storage and soft-threshold retrieval on a bit-packed
binary matrix, plus the layers a working system needs around it: sparse
codecs for labels and images, schema-aware multi-modal codes, evaluation
metrics, and an experiment CLI.
"""

from .bitvec import BitVector
from .codecs import (
    NxhConfig,
    PatchEncoderConfig,
    delete_bits,
    learn_dictionary,
    nxh_decode,
    nxh_encode,
    patch_decode,
    patch_encode,
    sparsify,
)
from .memory import RetrievalResult, WillshawMemory
from .multimodal import (
    DesCode,
    GenerationConfig,
    ModalitySchema,
    classify,
    concat,
    estimate_acceptance_interval,
    generate,
    make_blob,
    mask_modality,
)

__version__ = "0.1.0"

__all__ = [
    "BitVector",
    "WillshawMemory",
    "RetrievalResult",
    "NxhConfig",
    "PatchEncoderConfig",
    "nxh_encode",
    "nxh_decode",
    "learn_dictionary",
    "patch_encode",
    "patch_decode",
    "delete_bits",
    "sparsify",
    "ModalitySchema",
    "DesCode",
    "GenerationConfig",
    "concat",
    "mask_modality",
    "classify",
    "make_blob",
    "estimate_acceptance_interval",
    "generate",
]
