"""Experiment harness behind the CLI: train once, then measure everything.

Training encodes the dataset into two-modality codes, folds them into the
memory in a single pass, and snapshots the matrix at every configured
checkpoint so the scoring commands can replay any load level. Scoring
commands re-derive the exact stored codes from the manifest seed (encoding
is deterministic per named random stream), so nothing but the matrix
snapshots, the dictionary and the manifest needs to persist.

Every command writes schema-stable CSVs; checkpoint metrics use the long
(checkpoint, metric, value) form. Montages are binary PGM files, each
accompanied by a CSV naming its tiles.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .bitvec import BitVector
from .codecs import (
    learn_dictionary,
    load_dictionary,
    nxh_encode_batch,
    patch_decode_array,
    patch_encode_batch,
    save_dictionary,
)
from .config import ExperimentConfig, default_checkpoints, parse_kv, substream
from .data import Dataset, load_idx
from .errors import ConfigError, ConvergenceFailure, NoEvidenceError
from .memory import WillshawMemory
from .metrics import binarize, bit_stats, optimal_sparsity
from .montage import montage, write_pgm
from .multimodal import DesCode, GenerationConfig, estimate_acceptance_interval, generate, make_blob

MANIFEST_NAME = "manifest.txt"
DICTIONARY_NAME = "dictionary.wdc"
CHUNK = 1024
ENCODE_CHUNK = 8192

METRICS_HEADER = ("checkpoint", "metric", "value")


# ---------------------------------------------------------------------------
# small shared plumbing
# ---------------------------------------------------------------------------

def _log(msg: str) -> None:
    print(msg, file=sys.stderr, flush=True)


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.6g}"
    return str(value)


def _write_csv(path: Path, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _snapshot_name(checkpoint: int) -> str:
    return f"memory_{checkpoint:07d}.wam"


@dataclass
class Artifacts:
    """What cmd_train leaves behind, as the scoring commands see it."""

    seed: int
    n_train: int
    checkpoints: tuple[int, ...]
    out: Path

    def snapshot_path(self, checkpoint: int) -> Path:
        if checkpoint not in self.checkpoints:
            raise ConfigError(f"no snapshot at checkpoint {checkpoint}; trained ones: {self.checkpoints}")
        return self.out / _snapshot_name(checkpoint)

    def load_memory(self, checkpoint: int) -> WillshawMemory:
        return WillshawMemory.load(str(self.snapshot_path(checkpoint)))


def _effective_checkpoints(cfg: ExperimentConfig, n_train: int) -> tuple[int, ...]:
    points = cfg.checkpoints or default_checkpoints(n_train)
    if points[-1] > n_train:
        raise ConfigError(f"checkpoint {points[-1]} exceeds the {n_train}-pattern train set")
    return points


def _manifest_pairs(cfg: ExperimentConfig, seed: int, n_train: int, checkpoints) -> list[tuple[str, str]]:
    pairs = [
        ("format", "wam-manifest-v1"),
        ("seed", str(seed)),
        ("n_train", str(n_train)),
        ("checkpoints", ",".join(map(str, checkpoints))),
        ("dictionary", DICTIONARY_NAME),
        ("code_length", str(cfg.schema.total_length)),
        ("modality.description.length", str(cfg.schema.length_of("description"))),
        ("modality.visual.length", str(cfg.schema.length_of("visual"))),
        ("nxh.classes", str(cfg.nxh.classes)),
        ("nxh.bits_per_class", str(cfg.nxh.bits_per_class)),
        ("nxh.p_class", repr(cfg.nxh.p_class)),
        ("nxh.p_rest", repr(cfg.nxh.p_rest)),
        ("encoder.grid_rows", str(cfg.encoder.grid_rows)),
        ("encoder.grid_cols", str(cfg.encoder.grid_cols)),
        ("encoder.patch_size", str(cfg.encoder.patch_size)),
        ("encoder.dictionary_size", str(cfg.encoder.dictionary_size)),
        ("encoder.winners_per_field", str(cfg.encoder.winners_per_field)),
        ("encoder.binarize_threshold", repr(cfg.encoder.binarize_threshold)),
    ]
    pairs += [(f"snapshot.{ck}", _snapshot_name(ck)) for ck in checkpoints]
    return pairs


def _load_artifacts(cfg: ExperimentConfig, out: Path) -> Artifacts:
    manifest_path = out / MANIFEST_NAME
    if not manifest_path.exists():
        raise FileNotFoundError(f"no manifest at {manifest_path}; run train first")
    manifest = parse_kv(manifest_path)
    if manifest.get("format") != "wam-manifest-v1":
        raise ConfigError(f"{manifest_path}: unknown manifest format {manifest.get('format')!r}")
    seed = int(manifest["seed"])
    n_train = int(manifest["n_train"])
    checkpoints = tuple(int(v) for v in manifest["checkpoints"].split(","))
    # the scoring commands re-derive the stored codes, so the codec settings
    # in the config must be the ones the memory was trained with
    expected = dict(_manifest_pairs(cfg, seed, n_train, checkpoints))
    for key, value in expected.items():
        if key in ("seed", "n_train", "checkpoints"):
            continue
        if manifest.get(key) != value:
            raise ConfigError(
                f"config does not match trained artifacts: {key} is {manifest.get(key)!r} "
                f"in the manifest but {value!r} in the config; retrain or fix the config")
    return Artifacts(seed=seed, n_train=n_train, checkpoints=checkpoints, out=out)


# ---------------------------------------------------------------------------
# dataset + encoding
# ---------------------------------------------------------------------------

def _load_train(cfg: ExperimentConfig) -> Dataset:
    ds = load_idx(str(cfg.train_images), str(cfg.train_labels))
    _validate_dataset(cfg, ds, "train")
    return ds


def _load_test(cfg: ExperimentConfig) -> Dataset:
    if cfg.test_images is None or cfg.test_labels is None:
        raise ConfigError("this command needs data.test_images and data.test_labels")
    ds = load_idx(str(cfg.test_images), str(cfg.test_labels))
    _validate_dataset(cfg, ds, "test")
    return ds


def _validate_dataset(cfg: ExperimentConfig, ds: Dataset, name: str) -> None:
    if ds.images.shape[1:] != cfg.encoder.image_shape:
        raise ConfigError(
            f"{name} images are {ds.images.shape[1:]}, encoder expects {cfg.encoder.image_shape}")
    if len(ds) and int(ds.labels.max()) >= cfg.nxh.classes:
        raise ConfigError(f"{name} labels reach {int(ds.labels.max())}, nxh.classes is {cfg.nxh.classes}")


def _encode_visual(images: np.ndarray, cfg: ExperimentConfig) -> list[BitVector]:
    codes: list[BitVector] = []
    for lo in range(0, images.shape[0], ENCODE_CHUNK):
        codes.extend(patch_encode_batch(images[lo:lo + ENCODE_CHUNK], cfg.encoder))
    return codes


def _encode_descriptions(labels: np.ndarray, cfg: ExperimentConfig, seed: int) -> list[BitVector]:
    return nxh_encode_batch(labels, cfg.nxh, substream(seed, "encoder.nxh"))


def _combine(cfg: ExperimentConfig, desc: Sequence[BitVector], vis: Sequence[BitVector]) -> list[BitVector]:
    offset = cfg.schema.range("visual")[0]
    total = cfg.schema.total_length
    return [
        BitVector(total, np.concatenate([d.active, v.active + offset]))
        for d, v in zip(desc, vis)
    ]


def _masked_cues(cfg: ExperimentConfig, vis: Sequence[BitVector]) -> list[BitVector]:
    offset = cfg.schema.range("visual")[0]
    total = cfg.schema.total_length
    return [BitVector(total, v.active + offset) for v in vis]


def _delete_bits_batch(codes: Sequence[BitVector], p_del: float, rng: np.random.Generator) -> list[BitVector]:
    # same per-bit Bernoulli semantics as codecs.delete_bits, one draw pass
    lengths = np.fromiter((c.popcount for c in codes), dtype=np.int64, count=len(codes))
    u = rng.random(int(lengths.sum()))
    out = []
    pos = 0
    for c, k in zip(codes, lengths):
        keep = u[pos:pos + k] >= p_del
        pos += k
        out.append(BitVector(c.length, c.active[keep]))
    return out


# ---------------------------------------------------------------------------
# batch scoring primitives
# ---------------------------------------------------------------------------

def _fired_matrix(potentials: np.ndarray, lo: int, hi: int) -> np.ndarray:
    """Which of columns [lo, hi) fired: potential equals a positive maximum."""
    theta = potentials.max(axis=1)
    return (potentials[:, lo:hi] == theta[:, None]) & (theta[:, None] > 0)


def _predict_labels(potentials: np.ndarray, cfg: ExperimentConfig) -> np.ndarray:
    """Decode the description segment of each retrieval; -1 marks no evidence."""
    lo, hi = cfg.schema.range("description")
    fired = _fired_matrix(potentials, lo, hi)
    counts = fired.reshape(fired.shape[0], cfg.nxh.classes, cfg.nxh.bits_per_class).sum(axis=2, dtype=np.int32)
    pred = counts.argmax(axis=1).astype(np.int64)
    pred[counts.sum(axis=1) == 0] = -1
    return pred


def _decode_code_labels(codes: Sequence[BitVector], cfg: ExperimentConfig) -> np.ndarray:
    """nxh_decode of raw description codes, vectorized (argmax, lowest-index ties)."""
    x = cfg.nxh.bits_per_class
    out = np.empty(len(codes), dtype=np.int64)
    for i, c in enumerate(codes):
        counts = np.bincount(c.active // x, minlength=cfg.nxh.classes)
        out[i] = counts.argmax()
    return out


@dataclass
class _ErrorCounter:
    """Streaming lost/extra pixel counts against binarized originals."""

    lost: int = 0
    extra: int = 0
    pixels: int = 0

    def add(self, originals_bin: np.ndarray, reconstructions: np.ndarray) -> None:
        p = originals_bin.astype(bool)
        q = reconstructions.astype(bool)
        self.lost += int(np.count_nonzero(p & ~q))
        self.extra += int(np.count_nonzero(~p & q))
        self.pixels += p.size

    @property
    def mse_lost(self) -> float:
        return self.lost / self.pixels if self.pixels else 0.0

    @property
    def mse_extra(self) -> float:
        return self.extra / self.pixels if self.pixels else 0.0

    @property
    def mse(self) -> float:
        return self.mse_lost + self.mse_extra


def _stats_rows(checkpoint: int, prefix: str, counts: np.ndarray):
    return [
        (checkpoint, f"{prefix}_mean", float(counts.mean())),
        (checkpoint, f"{prefix}_std", float(counts.std())),
        (checkpoint, f"{prefix}_min", int(counts.min())),
        (checkpoint, f"{prefix}_max", int(counts.max())),
    ]


def _eval_indices(n: int, cfg: ExperimentConfig, seed: int, stream: str) -> np.ndarray:
    """Which items to score: the full split unless eval.sample caps it."""
    if cfg.eval_sample and cfg.eval_sample < n:
        picked = substream(seed, stream).choice(n, cfg.eval_sample, replace=False)
        return np.sort(picked)
    return np.arange(n)


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

def cmd_train(cfg: ExperimentConfig, out: Path) -> None:
    """Learn the dictionary, encode the train set, store it, snapshot per checkpoint."""
    out.mkdir(parents=True, exist_ok=True)
    train = _load_train(cfg)
    checkpoints = _effective_checkpoints(cfg, len(train))
    _log(f"[train] {len(train)} patterns, checkpoints {checkpoints[0]}..{checkpoints[-1]}")

    dictionary = learn_dictionary(
        train.images, cfg.encoder, substream(cfg.seed, "encoder.dictionary"),
        n_patches=cfg.sample_patches, n_iters=cfg.kmeans_iters)
    save_dictionary(str(out / DICTIONARY_NAME), dictionary, cfg.encoder.patch_size)
    cfg.encoder.dictionary = dictionary
    ps = cfg.encoder.patch_size
    tiles = [dictionary[i].reshape(ps, ps) for i in range(dictionary.shape[0])]
    write_pgm(str(out / "dictionary_montage.pgm"), montage(tiles, cols=min(8, len(tiles))))
    _write_csv(out / "dictionary_montage.csv", ("tile", "row", "col", "description"),
               [(i, i // min(8, len(tiles)), i % min(8, len(tiles)), f"prototype {i}") for i in range(len(tiles))])

    _log("[train] encoding patterns")
    desc = _encode_descriptions(train.labels, cfg, cfg.seed)
    vis = _encode_visual(train.images, cfg)
    codes = _combine(cfg, desc, vis)

    memory = WillshawMemory(cfg.schema.total_length)
    stored = 0
    for ck in checkpoints:
        memory.store_batch(codes[stored:ck])
        stored = ck
        memory.save(str(out / _snapshot_name(ck)))
        _log(f"[train] checkpoint {ck}: density {memory.density():.4f}")

    with open(out / MANIFEST_NAME, "w") as fh:
        for key, value in _manifest_pairs(cfg, cfg.seed, len(train), checkpoints):
            fh.write(f"{key} = {value}\n")
    _log(f"[train] wrote manifest and {len(checkpoints)} snapshots to {out}")


# ---------------------------------------------------------------------------
# retrieve
# ---------------------------------------------------------------------------

def cmd_retrieve(cfg: ExperimentConfig, out: Path) -> None:
    """Cue every snapshot with its own stored codes; log bit stats and reconstruction error."""
    art, train, desc, vis, codes = _prepare_train_side(cfg, out)
    originals = binarize(train.images, cfg.encoder.binarize_threshold)
    vis_lo, vis_hi = cfg.schema.range("visual")

    # the cue reconstruction is load-independent: decode each stored code once
    cue_err_per_item = _per_item_errors(cfg, vis, originals)

    rows = []
    for ck in art.checkpoints:
        memory = art.load_memory(ck)
        idx = _eval_indices(ck, cfg, art.seed, f"eval.sample.{ck}")
        err = _ErrorCounter()
        cue_tot = np.fromiter((codes[i].popcount for i in idx), dtype=np.int64, count=idx.size)
        cue_vis = np.fromiter((vis[i].popcount for i in idx), dtype=np.int64, count=idx.size)
        ret_tot = np.empty(idx.size, dtype=np.int64)
        ret_vis = np.empty(idx.size, dtype=np.int64)
        for lo in range(0, idx.size, CHUNK):
            sel = idx[lo:lo + CHUNK]
            pots = memory.potentials_batch([codes[i] for i in sel])
            theta = pots.max(axis=1)
            fired_all = (pots == theta[:, None]) & (theta[:, None] > 0)
            ret_tot[lo:lo + sel.size] = fired_all.sum(axis=1)
            fired_vis = fired_all[:, vis_lo:vis_hi]
            ret_vis[lo:lo + sel.size] = fired_vis.sum(axis=1)
            err.add(originals[sel], patch_decode_array(fired_vis, cfg.encoder))
        rows += _stats_rows(ck, "cue_total_bits", cue_tot)
        rows += _stats_rows(ck, "cue_visual_bits", cue_vis)
        rows += _stats_rows(ck, "retrieved_total_bits", ret_tot)
        rows += _stats_rows(ck, "retrieved_visual_bits", ret_vis)
        cue_counts = cue_err_per_item[idx]
        pixels = idx.size * originals[0].size
        rows.append((ck, "mse_cue", float(cue_counts[:, 0].sum() / pixels + cue_counts[:, 1].sum() / pixels)))
        rows.append((ck, "mse_retrieved", err.mse))
        rows.append((ck, "n_scored", idx.size))
        _log(f"[retrieve] checkpoint {ck}: mse_retrieved {err.mse:.4f}, "
             f"bits {cue_vis.mean():.1f} -> {ret_vis.mean():.1f}")
    _write_csv(out / "retrieve_metrics.csv", METRICS_HEADER, rows)

    _montage_triples(cfg, art, out, "retrieve_montage", codes, vis, originals,
                     noisy_label="stored cue")
    _log(f"[retrieve] wrote retrieve_metrics.csv to {out}")


def _prepare_train_side(cfg: ExperimentConfig, out: Path):
    art = _load_artifacts(cfg, out)
    train = _load_train(cfg)
    if len(train) != art.n_train:
        raise ConfigError(f"train set has {len(train)} patterns, manifest says {art.n_train}")
    dictionary, ps = load_dictionary(str(out / DICTIONARY_NAME))
    if ps != cfg.encoder.patch_size:
        raise ConfigError(f"dictionary patch size {ps} does not match encoder {cfg.encoder.patch_size}")
    cfg.encoder.dictionary = dictionary
    _log(f"[harness] re-encoding {len(train)} stored codes")
    desc = _encode_descriptions(train.labels, cfg, art.seed)
    vis = _encode_visual(train.images, cfg)
    codes = _combine(cfg, desc, vis)
    return art, train, desc, vis, codes


def _per_item_errors(cfg: ExperimentConfig, vis: Sequence[BitVector], originals: np.ndarray) -> np.ndarray:
    """(lost, extra) pixel counts of each code's own reconstruction."""
    out = np.empty((len(vis), 2), dtype=np.int64)
    for lo in range(0, len(vis), ENCODE_CHUNK):
        chunk = vis[lo:lo + ENCODE_CHUNK]
        dense = np.zeros((len(chunk), cfg.encoder.code_length), dtype=np.uint8)
        for i, c in enumerate(chunk):
            dense[i, c.active] = 1
        recon = patch_decode_array(dense, cfg.encoder).astype(bool)
        orig = originals[lo:lo + len(chunk)].astype(bool)
        out[lo:lo + len(chunk), 0] = (orig & ~recon).sum(axis=(1, 2))
        out[lo:lo + len(chunk), 1] = (~orig & recon).sum(axis=(1, 2))
    return out


def _montage_triples(cfg, art, out: Path, name: str, cues, vis_codes, originals, noisy_label: str) -> None:
    """Original / cue reconstruction / retrieval reconstruction tiles at full load."""
    memory = art.load_memory(art.checkpoints[-1])
    n = min(cfg.montage_samples, art.n_train)
    vis_lo, vis_hi = cfg.schema.range("visual")
    pots = memory.potentials_batch(cues[:n])
    fired_vis = _fired_matrix(pots, vis_lo, vis_hi)
    completed = patch_decode_array(fired_vis, cfg.encoder)
    dense = np.zeros((n, cfg.encoder.code_length), dtype=np.uint8)
    for i, c in enumerate(vis_codes[:n]):
        dense[i, c.active] = 1
    cue_imgs = patch_decode_array(dense, cfg.encoder)
    tiles, names = [], []
    for kind, batch in (("original", originals[:n].astype(np.float32)),
                        (noisy_label, cue_imgs), ("retrieved", completed)):
        for i in range(n):
            tiles.append(batch[i])
            names.append(f"{kind} {i}")
    canvas = montage(tiles, cols=n)
    write_pgm(str(out / f"{name}.pgm"), canvas)
    _write_csv(out / f"{name}.csv", ("tile", "row", "col", "description"),
               [(i, i // n, i % n, names[i]) for i in range(len(tiles))])


# ---------------------------------------------------------------------------
# complete
# ---------------------------------------------------------------------------

def cmd_complete(cfg: ExperimentConfig, out: Path) -> None:
    """Delete visual bits at each noise level, retrieve, log the split error."""
    art, train, desc, vis, codes = _prepare_train_side(cfg, out)
    originals = binarize(train.images, cfg.encoder.binarize_threshold)
    vis_lo, vis_hi = cfg.schema.range("visual")
    vis_offset = vis_lo
    total = cfg.schema.total_length

    rows = []
    for p_del in cfg.p_del:
        for ck in art.checkpoints:
            memory = art.load_memory(ck)
            idx = _eval_indices(ck, cfg, art.seed, f"eval.sample.{ck}")
            noisy = _delete_bits_batch([vis[i] for i in idx], p_del,
                                       substream(art.seed, f"noise.complete.{p_del:g}.{ck}"))
            cue_err = _ErrorCounter()
            mem_err = _ErrorCounter()
            for lo in range(0, idx.size, CHUNK):
                sel = idx[lo:lo + CHUNK]
                chunk_noisy = noisy[lo:lo + sel.size]
                cues = [
                    BitVector(total, np.concatenate([desc[i].active, nv.active + vis_offset]))
                    for i, nv in zip(sel, chunk_noisy)
                ]
                pots = memory.potentials_batch(cues)
                fired_vis = _fired_matrix(pots, vis_lo, vis_hi)
                dense = np.zeros((len(chunk_noisy), cfg.encoder.code_length), dtype=np.uint8)
                for i, c in enumerate(chunk_noisy):
                    dense[i, c.active] = 1
                orig = originals[sel]
                cue_err.add(orig, patch_decode_array(dense, cfg.encoder))
                mem_err.add(orig, patch_decode_array(fired_vis, cfg.encoder))
            suffix = f"_pdel{p_del:g}"
            rows += [
                (ck, f"mse_cue_lost{suffix}", cue_err.mse_lost),
                (ck, f"mse_cue_extra{suffix}", cue_err.mse_extra),
                (ck, f"mse_cue{suffix}", cue_err.mse),
                (ck, f"mse_mem_lost{suffix}", mem_err.mse_lost),
                (ck, f"mse_mem_extra{suffix}", mem_err.mse_extra),
                (ck, f"mse_mem{suffix}", mem_err.mse),
                (ck, f"n_scored{suffix}", idx.size),
            ]
            _log(f"[complete] p_del {p_del:g} checkpoint {ck}: "
                 f"lost {cue_err.mse_lost:.4f} -> {mem_err.mse_lost:.4f}, extra -> {mem_err.mse_extra:.4f}")
        _completion_montage(cfg, art, out, desc, vis, originals, p_del)
    _write_csv(out / "complete_metrics.csv", METRICS_HEADER, rows)
    _log(f"[complete] wrote complete_metrics.csv to {out}")


def _completion_montage(cfg, art, out, desc, vis, originals, p_del) -> None:
    n = min(cfg.montage_samples, art.n_train)
    noisy = _delete_bits_batch(vis[:n], p_del, substream(art.seed, f"noise.montage.{p_del:g}"))
    total = cfg.schema.total_length
    vis_offset = cfg.schema.range("visual")[0]
    cues = [
        BitVector(total, np.concatenate([d.active, nv.active + vis_offset]))
        for d, nv in zip(desc[:n], noisy)
    ]
    _montage_triples_from_cues(cfg, art, out, f"complete_montage_pdel{p_del:g}", cues, noisy,
                               originals, noisy_label=f"noisy cue p_del={p_del:g}")


def _montage_triples_from_cues(cfg, art, out: Path, name: str, cues, cue_vis_codes, originals, noisy_label):
    _montage_triples(cfg, art, out, name, cues, cue_vis_codes, originals, noisy_label)


# ---------------------------------------------------------------------------
# classify
# ---------------------------------------------------------------------------

def cmd_classify(cfg: ExperimentConfig, out: Path) -> None:
    """Score the three tasks at every checkpoint.

    auto: full stored codes cued as-is, description decoded before vs after.
    stored: stored codes with the description masked.
    unseen: test-set codes with the description masked.
    """
    art, train, desc, vis, codes = _prepare_train_side(cfg, out)
    masked_train = _masked_cues(cfg, vis)
    before_labels = _decode_code_labels(desc, cfg)

    test = _load_test(cfg)
    _log(f"[classify] encoding {len(test)} test codes")
    masked_test = _masked_cues(cfg, _encode_visual(test.images, cfg))

    rows = []
    for ck in art.checkpoints:
        memory = art.load_memory(ck)
        idx = _eval_indices(ck, cfg, art.seed, f"eval.sample.{ck}")
        tasks = (
            ("auto", [codes[i] for i in idx], before_labels[idx]),
            ("stored", [masked_train[i] for i in idx], train.labels[idx]),
            ("unseen", masked_test, test.labels),
        )
        summary = []
        for task, cues, truth in tasks:
            if cfg.eval_sample and task == "unseen" and cfg.eval_sample < len(cues):
                pick = np.sort(substream(art.seed, f"eval.sample.test.{ck}").choice(
                    len(cues), cfg.eval_sample, replace=False))
                cues = [cues[i] for i in pick]
                truth = truth[pick]
            pred = np.empty(len(cues), dtype=np.int64)
            for lo in range(0, len(cues), CHUNK):
                pred[lo:lo + CHUNK] = _predict_labels(memory.potentials_batch(cues[lo:lo + CHUNK]), cfg)
            correct = int((pred == np.asarray(truth)).sum())
            no_evidence = int((pred == -1).sum())
            accuracy = correct / len(cues)
            rows += [
                (ck, f"accuracy_{task}", accuracy),
                (ck, f"no_evidence_{task}", no_evidence),
                (ck, f"n_scored_{task}", len(cues)),
            ]
            summary.append(f"{task} {accuracy:.4f}")
        _log(f"[classify] checkpoint {ck}: " + ", ".join(summary))
    _write_csv(out / "classify_metrics.csv", METRICS_HEADER, rows)
    _log(f"[classify] wrote classify_metrics.csv to {out}")


# ---------------------------------------------------------------------------
# generate
# ---------------------------------------------------------------------------

def cmd_generate(cfg: ExperimentConfig, out: Path) -> None:
    """Blobs, acceptance interval, iterative generations, re-classification."""
    art, train, desc, vis, codes = _prepare_train_side(cfg, out)
    gen = cfg.generation
    ck = gen.checkpoint if gen.checkpoint is not None else art.checkpoints[-1]
    memory = art.load_memory(ck)
    _log(f"[generate] using snapshot at checkpoint {ck}")

    schema = cfg.schema
    metric_rows = []

    # blobs: description-only retrievals, one per class
    blob_tiles = []
    blob_vis_dense = np.zeros((cfg.nxh.classes, cfg.encoder.code_length), dtype=np.uint8)
    for label in range(cfg.nxh.classes):
        blob = make_blob(memory, label, cfg.nxh, schema)
        vis_bits = blob.extract("visual")
        blob_vis_dense[label, vis_bits.active] = 1
        metric_rows.append((ck, f"blob_visual_bits_class{label}", vis_bits.popcount))
    blob_imgs = patch_decode_array(blob_vis_dense, cfg.encoder)
    blob_tiles = [blob_imgs[label] for label in range(cfg.nxh.classes)]
    write_pgm(str(out / "blob_montage.pgm"), montage(blob_tiles, cols=min(5, cfg.nxh.classes)))
    _write_csv(out / "blob_montage.csv", ("tile", "row", "col", "description"),
               [(c, c // min(5, cfg.nxh.classes), c % min(5, cfg.nxh.classes), f"class {c} blob")
                for c in range(cfg.nxh.classes)])
    mean_stored_vis = float(np.mean([v.popcount for v in vis[:ck]]))
    metric_rows.append((ck, "stored_visual_bits_mean", mean_stored_vis))

    # acceptance interval from noisy completions of stored codes
    sample_rng = substream(art.seed, "generation.interval.sample")
    n_sample = min(gen.interval_sample, ck)
    picked = np.sort(sample_rng.choice(ck, n_sample, replace=False))
    samples = [DesCode(codes[i], schema) for i in picked]
    interval = estimate_acceptance_interval(
        memory, samples, gen.interval_p_del,
        substream(art.seed, "generation.interval.noise"), band=gen.band)
    _log(f"[generate] acceptance interval ({interval[0]:g}, {interval[1]:g}) "
         f"from {n_sample} samples at p_del {gen.interval_p_del:g}")
    _write_csv(out / "acceptance_interval.csv",
               ("interval_min", "interval_max", "band_low", "band_high", "p_del", "sample_size", "checkpoint"),
               [(interval[0], interval[1], gen.band[0], gen.band[1], gen.interval_p_del, n_sample, ck)])
    if not interval[0] < interval[1]:
        raise ConvergenceFailure(
            f"degenerate acceptance interval {interval}; widen generation.band or lower the load")

    gen_cfg = GenerationConfig(
        interval_min=interval[0], interval_max=interval[1],
        sparsity_initial=gen.sparsity_initial, sparsity_increment=gen.sparsity_increment,
        max_iters=gen.max_iters, seed=art.seed)

    trace_rows = []
    summary_rows = []
    gen_tiles = []
    gen_names = []
    converged_total = 0
    reclass_ok = 0
    for label in range(cfg.nxh.classes):
        for attempt in range(gen.per_class):
            rng = substream(art.seed, f"generation.{label}.{attempt}")
            try:
                result = generate(memory, label, gen_cfg, cfg.nxh, schema, rng)
            except NoEvidenceError:
                summary_rows.append((label, attempt, 0, 0, 0, -1, 0))
                gen_tiles.append(np.zeros(cfg.encoder.image_shape, dtype=np.float32))
                gen_names.append(f"class {label} attempt {attempt}: no evidence")
                continue
            for step in result.trace:
                trace_rows.append((label, attempt, step.iteration, step.bits_after_retrieve,
                                   "" if step.bits_after_sparsify is None else step.bits_after_sparsify,
                                   step.sparsity_target))
            vis_out = result.code.extract("visual")
            reclass = _reclassify(memory, result.code, cfg)
            ok = int(result.converged and reclass == label)
            converged_total += int(result.converged)
            reclass_ok += ok
            summary_rows.append((label, attempt, int(result.converged), result.iterations,
                                 vis_out.popcount, reclass if reclass is not None else -1, ok))
            dense = np.zeros((1, cfg.encoder.code_length), dtype=np.uint8)
            dense[0, vis_out.active] = 1
            gen_tiles.append(patch_decode_array(dense, cfg.encoder)[0])
            tag = "ok" if result.converged else "no convergence"
            gen_names.append(f"class {label} attempt {attempt}: {tag}, {result.iterations} iters")
        _log(f"[generate] class {label}: {converged_total} convergent so far")

    attempts = cfg.nxh.classes * gen.per_class
    metric_rows += [
        (ck, "generation_attempts", attempts),
        (ck, "generation_converged", converged_total),
        (ck, "generation_convergence_rate", converged_total / attempts),
        (ck, "generation_reclassified_correct", reclass_ok),
        (ck, "generation_reclassify_rate", reclass_ok / converged_total if converged_total else 0.0),
    ]
    _write_csv(out / "generation_trace.csv",
               ("class", "attempt", "iteration", "bits_after_retrieve", "bits_after_sparsify", "sparsity_target"),
               trace_rows)
    _write_csv(out / "generation_summary.csv",
               ("class", "attempt", "converged", "iterations", "visual_bits", "reclass_label", "reclass_correct"),
               summary_rows)
    _write_csv(out / "generate_metrics.csv", METRICS_HEADER, metric_rows)
    write_pgm(str(out / "generation_montage.pgm"), montage(gen_tiles, cols=gen.per_class))
    _write_csv(out / "generation_montage.csv", ("tile", "row", "col", "description"),
               [(i, i // gen.per_class, i % gen.per_class, gen_names[i]) for i in range(len(gen_tiles))])
    _log(f"[generate] {converged_total}/{attempts} converged, "
         f"{reclass_ok} re-classified correctly; wrote CSVs to {out}")
    if converged_total == 0:
        raise ConvergenceFailure("no generation attempt converged")


def _reclassify(memory, descode: DesCode, cfg: ExperimentConfig) -> int | None:
    cue = descode.zero("description")
    pots = memory.potentials_batch([cue.bits])
    pred = _predict_labels(pots, cfg)
    return None if pred[0] == -1 else int(pred[0])


# ---------------------------------------------------------------------------
# stats
# ---------------------------------------------------------------------------

def cmd_stats(cfg: ExperimentConfig, out: Path) -> None:
    """Dataset and code statistics plus per-checkpoint memory density."""
    art, train, desc, vis, codes = _prepare_train_side(cfg, out)
    rows = [(0, "n_train", len(train))]
    rows += _stats_rows(0, "visual_bits", np.array([c.popcount for c in vis]))
    rows += _stats_rows(0, "description_bits", np.array([c.popcount for c in desc]))
    rows += _stats_rows(0, "descode_bits", np.array([c.popcount for c in codes]))
    rows.append((0, "optimal_bits_visual_length", optimal_sparsity(cfg.schema.length_of("visual"))))
    rows.append((0, "optimal_bits_total_length", optimal_sparsity(cfg.schema.total_length)))
    if cfg.test_images is not None and cfg.test_labels is not None:
        rows.append((0, "n_test", len(_load_test(cfg))))
    for ck in art.checkpoints:
        memory = art.load_memory(ck)
        rows.append((ck, "memory_density", memory.density()))
        rows.append((ck, "stored_count", memory.stored_count))
    _write_csv(out / "stats_metrics.csv", METRICS_HEADER, rows)
    _log(f"[stats] wrote stats_metrics.csv to {out}")
