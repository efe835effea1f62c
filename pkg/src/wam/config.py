"""Plain-text key=value configuration for the experiment harness.

One file drives every command: dataset paths, codec parameters, the
modality schema, checkpoint cadence, noise levels and generation knobs.
Lines are ``key = value``; blank lines and ``#`` comment lines are ignored;
keys must be unique and known. Relative paths resolve against the config
file's directory.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .codecs import NxhConfig, PatchEncoderConfig
from .errors import ConfigError
from .multimodal import ModalitySchema

__all__ = ["ExperimentConfig", "GenerationSettings", "parse_kv", "substream", "default_checkpoints"]


def parse_kv(path: str | Path) -> dict[str, str]:
    """Parse a key=value file into an ordered dict of raw strings."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value, got {line!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if key in out:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        out[key] = value.strip()
    return out


def substream(seed: int, name: str) -> np.random.Generator:
    """A named random stream derived from the global seed.

    Every stochastic stage of the harness pulls from its own named stream,
    so stages are individually re-runnable and adding draws to one stage
    never shifts another.
    """
    return np.random.default_rng(np.random.SeedSequence([seed, zlib.crc32(name.encode())]))


def default_checkpoints(n_train: int) -> tuple[int, ...]:
    """Every 1000 stored patterns up to 10000, then every 5000, ending at n_train."""
    points = list(range(1000, min(n_train, 10000) + 1, 1000))
    points += list(range(15000, n_train + 1, 5000))
    if not points or points[-1] != n_train:
        points.append(n_train)
    return tuple(points)


@dataclass(frozen=True)
class GenerationSettings:
    """Harness-level generation knobs (the loop itself takes a GenerationConfig)."""

    band: tuple[float, float] = (25.0, 75.0)
    interval_p_del: float = 0.5
    interval_sample: int = 500
    sparsity_initial: int = 40
    sparsity_increment: int = 10
    max_iters: int = 100
    per_class: int = 5
    checkpoint: int | None = None  # which snapshot to generate from; None = final


_DEFAULTS = {
    "seed": "0",
    "out": "",
    "data.test_images": "",
    "data.test_labels": "",
    "nxh.classes": "10",
    "nxh.bits_per_class": "500",
    "nxh.p_class": "0.5",
    "nxh.p_rest": "0.0",
    "encoder.grid_rows": "7",
    "encoder.grid_cols": "7",
    "encoder.patch_size": "4",
    "encoder.dictionary_size": "16",
    "encoder.winners_per_field": "2",
    "encoder.binarize_threshold": "0.5",
    "encoder.sample_patches": "20000",
    "encoder.kmeans_iters": "25",
    "checkpoints": "",
    "p_del": "0.25,0.5,0.75",
    "eval.sample": "0",
    "montage.samples": "10",
    "generation.band_low": "25",
    "generation.band_high": "75",
    "generation.interval_p_del": "0.5",
    "generation.interval_sample": "500",
    "generation.sparsity_initial": "40",
    "generation.sparsity_increment": "10",
    "generation.max_iters": "100",
    "generation.per_class": "5",
    "generation.checkpoint": "",
}

_REQUIRED = ("data.train_images", "data.train_labels", "modality.description.length", "modality.visual.length")


def _to_int(raw: dict, key: str) -> int:
    try:
        return int(raw[key])
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {raw[key]!r}") from None


def _to_float(raw: dict, key: str) -> float:
    try:
        return float(raw[key])
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {raw[key]!r}") from None


def _to_list(value: str, conv, key: str):
    if not value:
        return ()
    try:
        return tuple(conv(v.strip()) for v in value.split(","))
    except ValueError:
        raise ConfigError(f"{key}: expected comma-separated values, got {value!r}") from None


@dataclass
class ExperimentConfig:
    """Everything a harness command needs, validated and cross-checked."""

    seed: int
    train_images: Path
    train_labels: Path
    test_images: Path | None
    test_labels: Path | None
    schema: ModalitySchema
    nxh: NxhConfig
    encoder: PatchEncoderConfig
    sample_patches: int
    kmeans_iters: int
    checkpoints: tuple[int, ...]  # empty = derive from the train set size
    p_del: tuple[float, ...]
    eval_sample: int
    montage_samples: int
    generation: GenerationSettings
    out: Path | None = None
    raw: dict[str, str] = field(default_factory=dict, repr=False)

    @classmethod
    def from_file(cls, path: str | Path) -> "ExperimentConfig":
        path = Path(path)
        return cls.from_dict(parse_kv(path), base_dir=path.parent)

    @classmethod
    def from_dict(cls, given: dict[str, str], base_dir: str | Path = ".") -> "ExperimentConfig":
        base_dir = Path(base_dir)
        raw = dict(_DEFAULTS)
        known = set(raw) | set(_REQUIRED)
        for key, value in given.items():
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
            raw[key] = value
        missing = [k for k in _REQUIRED if k not in raw]
        if missing:
            raise ConfigError(f"missing required config keys: {', '.join(missing)}")

        def path_of(key, required):
            value = raw.get(key, "")
            if not value:
                if required:
                    raise ConfigError(f"missing required config key {key!r}")
                return None
            p = Path(value)
            return p if p.is_absolute() else base_dir / p

        try:
            nxh = NxhConfig(
                classes=_to_int(raw, "nxh.classes"),
                bits_per_class=_to_int(raw, "nxh.bits_per_class"),
                p_class=_to_float(raw, "nxh.p_class"),
                p_rest=_to_float(raw, "nxh.p_rest"),
                seed=_to_int(raw, "seed"),
            )
            encoder = PatchEncoderConfig(
                grid_rows=_to_int(raw, "encoder.grid_rows"),
                grid_cols=_to_int(raw, "encoder.grid_cols"),
                patch_size=_to_int(raw, "encoder.patch_size"),
                dictionary_size=_to_int(raw, "encoder.dictionary_size"),
                winners_per_field=_to_int(raw, "encoder.winners_per_field"),
                binarize_threshold=_to_float(raw, "encoder.binarize_threshold"),
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

        desc_len = _to_int(raw, "modality.description.length")
        vis_len = _to_int(raw, "modality.visual.length")
        if desc_len != nxh.code_length:
            raise ConfigError(
                f"modality.description.length is {desc_len} but the label codec produces {nxh.code_length}")
        if vis_len != encoder.code_length:
            raise ConfigError(
                f"modality.visual.length is {vis_len} but the patch encoder produces {encoder.code_length}")
        schema = ModalitySchema((("description", desc_len), ("visual", vis_len)))

        checkpoints = _to_list(raw["checkpoints"], int, "checkpoints")
        if any(c <= 0 for c in checkpoints) or any(b <= a for a, b in zip(checkpoints, checkpoints[1:])):
            raise ConfigError(f"checkpoints must be positive and strictly increasing, got {checkpoints}")
        p_del = _to_list(raw["p_del"], float, "p_del")
        if any(not 0.0 <= p <= 1.0 for p in p_del):
            raise ConfigError(f"p_del values must lie in [0, 1], got {p_del}")

        band = (_to_float(raw, "generation.band_low"), _to_float(raw, "generation.band_high"))
        if not 0.0 <= band[0] < band[1] <= 100.0:
            raise ConfigError(f"generation band must satisfy 0 <= low < high <= 100, got {band}")
        generation = GenerationSettings(
            band=band,
            interval_p_del=_to_float(raw, "generation.interval_p_del"),
            interval_sample=_to_int(raw, "generation.interval_sample"),
            sparsity_initial=_to_int(raw, "generation.sparsity_initial"),
            sparsity_increment=_to_int(raw, "generation.sparsity_increment"),
            max_iters=_to_int(raw, "generation.max_iters"),
            per_class=_to_int(raw, "generation.per_class"),
            checkpoint=_to_int(raw, "generation.checkpoint") if raw["generation.checkpoint"] else None,
        )
        if generation.interval_sample <= 0 or generation.per_class <= 0 or generation.max_iters <= 0:
            raise ConfigError("generation sample, per_class and max_iters must be positive")
        if not 0.0 <= generation.interval_p_del <= 1.0:
            raise ConfigError(f"generation.interval_p_del must lie in [0, 1], got {generation.interval_p_del}")

        seed = _to_int(raw, "seed")
        if seed < 0:
            raise ConfigError(f"seed must be non-negative, got {seed}")
        eval_sample = _to_int(raw, "eval.sample")
        if eval_sample < 0:
            raise ConfigError(f"eval.sample must be non-negative, got {eval_sample}")

        return cls(
            seed=seed,
            train_images=path_of("data.train_images", required=True),
            train_labels=path_of("data.train_labels", required=True),
            test_images=path_of("data.test_images", required=False),
            test_labels=path_of("data.test_labels", required=False),
            schema=schema,
            nxh=nxh,
            encoder=encoder,
            sample_patches=_to_int(raw, "encoder.sample_patches"),
            kmeans_iters=_to_int(raw, "encoder.kmeans_iters"),
            checkpoints=checkpoints,
            p_del=p_del,
            eval_sample=eval_sample,
            montage_samples=_to_int(raw, "montage.samples"),
            generation=generation,
            out=path_of("out", required=False),
            raw=raw,
        )
