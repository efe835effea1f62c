import io

import numpy as np
import pytest

from wam.bitvec import BitVector
from wam.codecs import (
    NxhConfig,
    PatchEncoderConfig,
    delete_bits,
    interval_counts,
    learn_dictionary,
    load_dictionary,
    nxh_decode,
    nxh_encode,
    nxh_encode_batch,
    patch_decode,
    patch_decode_batch,
    patch_encode,
    patch_encode_batch,
    save_dictionary,
    sparsify,
)
from wam.errors import (
    CorruptHeaderError,
    DimensionMismatchError,
    TruncatedPayloadError,
    UntrainedDictionaryError,
    VersionMismatchError,
)

STANDARD = NxhConfig(classes=10, bits_per_class=500, p_class=0.5, p_rest=0.0)


class TestNxhEncode:
    def test_active_bits_confined_to_label_interval(self):
        rng = np.random.default_rng(0)
        code = nxh_encode(3, STANDARD, rng)
        assert code.length == 5000
        assert (code.active >= 1500).all() and (code.active < 2000).all()

    def test_expected_count_is_half_the_interval(self):
        rng = np.random.default_rng(1)
        counts = [nxh_encode(3, STANDARD, rng).popcount for _ in range(200)]
        # mean of Binomial(500, 0.5) is 250, sd of the mean ~ 11.2/sqrt(200)
        assert abs(np.mean(counts) - 250.0) < 5.0

    def test_deterministic_limit_is_plain_x_hot(self):
        cfg = NxhConfig(classes=2, bits_per_class=4, p_class=1.0, p_rest=0.0)
        code = nxh_encode(1, cfg, np.random.default_rng(123))
        assert code.to_dense().tolist() == [0, 0, 0, 0, 1, 1, 1, 1]

    def test_distinct_draws_for_identical_labels(self):
        rng = np.random.default_rng(2)
        seen = {tuple(nxh_encode(7, STANDARD, rng).active) for _ in range(1000)}
        assert len(seen) == 1000

    def test_label_out_of_range(self):
        with pytest.raises(ValueError):
            nxh_encode(10, STANDARD, np.random.default_rng(0))
        with pytest.raises(ValueError):
            nxh_encode(-1, STANDARD, np.random.default_rng(0))

    def test_p_rest_adds_bits_outside_interval(self):
        cfg = NxhConfig(classes=4, bits_per_class=100, p_class=0.9, p_rest=0.1)
        rng = np.random.default_rng(3)
        code = nxh_encode(2, cfg, rng)
        outside = code.active[(code.active < 200) | (code.active >= 300)]
        assert outside.size > 0  # 300 positions at p=0.1: empty with prob ~2e-14

    def test_batch_matches_scalar_distribution(self):
        rng = np.random.default_rng(4)
        labels = rng.integers(0, 10, size=300)
        codes = nxh_encode_batch(labels, STANDARD, np.random.default_rng(5))
        for lab, code in zip(labels, codes):
            assert (code.active // 500 == lab).all()
        assert abs(np.mean([c.popcount for c in codes]) - 250.0) < 4.0

    def test_config_validation(self):
        with pytest.raises(ValueError):
            NxhConfig(classes=10, bits_per_class=500, p_class=0.1, p_rest=0.5)
        with pytest.raises(ValueError):
            NxhConfig(classes=0, bits_per_class=5, p_class=0.5)
        with pytest.raises(ValueError):
            NxhConfig(classes=2, bits_per_class=5, p_class=1.5)


class TestNxhDecode:
    def test_inverse_of_deterministic_encode(self):
        cfg = NxhConfig(classes=2, bits_per_class=4, p_class=1.0, p_rest=0.0)
        code = nxh_encode(1, cfg, np.random.default_rng(0))
        assert nxh_decode(code, cfg).label == 1

    def test_argmax_over_interval_counts(self):
        cfg = NxhConfig(classes=3, bits_per_class=2, p_class=1.0, p_rest=0.0)
        code = BitVector(6, [0, 2, 3])  # interval popcounts (1, 2, 0)
        decoded = nxh_decode(code, cfg)
        assert decoded.label == 1
        assert decoded.confidence == pytest.approx(2 / 3)
        assert interval_counts(code, cfg).tolist() == [1, 2, 0]

    def test_all_zero_code_flags_zero_confidence(self):
        decoded = nxh_decode(BitVector(5000), STANDARD)
        assert decoded.label == 0
        assert decoded.confidence == 0.0

    def test_tie_breaks_to_lowest_interval(self):
        cfg = NxhConfig(classes=3, bits_per_class=2, p_class=1.0, p_rest=0.0)
        assert nxh_decode(BitVector(6, [2, 3, 4, 5]), cfg).label == 1

    def test_length_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            nxh_decode(BitVector(10, [0]), STANDARD)

    def test_roundtrip_statistical(self):
        # Criterion-level check lives in the acceptance suite; this is the
        # fast smoke version.
        rng = np.random.default_rng(6)
        for _ in range(200):
            label = int(rng.integers(0, 10))
            assert nxh_decode(nxh_encode(label, STANDARD, rng), STANDARD).label == label


def toy_patch_cfg(**kw):
    defaults = dict(grid_rows=2, grid_cols=2, patch_size=2, dictionary_size=2, winners_per_field=1)
    defaults.update(kw)
    return PatchEncoderConfig(**defaults)


class TestPatchCodec:
    def test_untrained_dictionary_rejected(self):
        cfg = toy_patch_cfg()
        with pytest.raises(UntrainedDictionaryError):
            patch_encode(np.zeros((4, 4)), cfg)
        with pytest.raises(UntrainedDictionaryError):
            patch_decode(BitVector(cfg.code_length), cfg)

    def test_all_black_image_gives_empty_code(self):
        cfg = toy_patch_cfg(dictionary=np.eye(2, 4, dtype=np.float32))
        assert patch_encode(np.zeros((4, 4)), cfg).popcount == 0

    def test_winner_count_bounded_by_fields(self):
        cfg = toy_patch_cfg(dictionary_size=1, winners_per_field=1,
                            dictionary=np.ones((1, 4), dtype=np.float32))
        code = patch_encode(np.ones((4, 4)), cfg)
        assert code.popcount == 4  # one winner per non-blank field
        partial = np.zeros((4, 4))
        partial[0, 0] = 1.0
        assert patch_encode(partial, cfg).popcount == 1

    def test_exactly_k_bits_per_non_blank_field(self):
        rng = np.random.default_rng(7)
        cfg = toy_patch_cfg(dictionary_size=4, winners_per_field=2,
                            dictionary=rng.random((4, 4)).astype(np.float32))
        img = rng.random((4, 4))
        code = patch_encode(img, cfg)
        fields = code.active // 4
        blank_free = np.unique(fields)
        assert all((fields == f).sum() == 2 for f in blank_free)

    def test_code_length_constant(self):
        cfg = toy_patch_cfg(dictionary=np.eye(2, 4, dtype=np.float32))
        for img in (np.zeros((4, 4)), np.ones((4, 4))):
            assert patch_encode(img, cfg).length == cfg.code_length == 8

    def test_winner_ties_break_to_lowest_prototype(self):
        cfg = toy_patch_cfg(dictionary=np.ones((2, 4), dtype=np.float32))
        code = patch_encode(np.ones((4, 4)), cfg)
        assert (code.active % 2 == 0).all()

    def test_single_bit_decodes_to_one_patch(self):
        proto = np.array([[1, 0, 0, 1], [0, 1, 1, 0]], dtype=np.float32)
        cfg = toy_patch_cfg(dictionary=proto)
        img = patch_decode(BitVector(cfg.code_length, [1]), cfg)  # field 0, prototype 1
        expected = np.zeros((4, 4), dtype=np.float32)
        expected[0, 1] = expected[1, 0] = 1.0
        assert np.array_equal(img, expected)

    def test_all_zero_code_decodes_to_black(self):
        cfg = toy_patch_cfg(dictionary=np.eye(2, 4, dtype=np.float32))
        assert patch_decode(BitVector(cfg.code_length), cfg).sum() == 0

    def test_overlapping_stamps_average(self):
        # Two active prototypes in one field: pixels lit in both survive the
        # 0.5 threshold, pixels lit in one exactly hit 0.5 and survive too.
        proto = np.array([[1, 1, 0, 0], [1, 0, 0, 0]], dtype=np.float32)
        cfg = toy_patch_cfg(winners_per_field=2, dictionary=proto)
        img = patch_decode(BitVector(cfg.code_length, [0, 1]), cfg)
        assert img[0, 0] == 1.0   # mean 1.0
        assert img[0, 1] == 1.0   # mean 0.5, at threshold
        assert img[1, 0] == 0.0

    def test_encode_decode_batch_consistency(self):
        rng = np.random.default_rng(8)
        cfg = toy_patch_cfg(dictionary_size=4, winners_per_field=2,
                            dictionary=rng.random((4, 4)).astype(np.float32))
        imgs = rng.random((5, 4, 4))
        codes = patch_encode_batch(imgs, cfg)
        singles = [patch_encode(img, cfg) for img in imgs]
        assert codes == singles
        decoded = patch_decode_batch(codes, cfg)
        for i, c in enumerate(codes):
            assert np.array_equal(decoded[i], patch_decode(c, cfg))

    def test_image_shape_mismatch(self):
        cfg = toy_patch_cfg(dictionary=np.eye(2, 4, dtype=np.float32))
        with pytest.raises(DimensionMismatchError):
            patch_encode(np.zeros((5, 4)), cfg)


class TestLearnDictionary:
    def test_k1_prototype_is_mean_patch(self):
        rng = np.random.default_rng(9)
        imgs = rng.random((20, 4, 4))
        cfg = toy_patch_cfg(dictionary_size=1, winners_per_field=1)
        proto = learn_dictionary(imgs, cfg, np.random.default_rng(0))
        fields = (imgs > 0.5).reshape(20, 2, 2, 2, 2).transpose(0, 1, 3, 2, 4).reshape(-1, 4)
        fields = fields[fields.sum(axis=1) > 0].astype(np.float64)
        assert proto.shape == (1, 4)
        assert np.allclose(proto[0], fields.mean(axis=0), atol=1e-6)

    def test_same_seed_same_dictionary(self):
        rng = np.random.default_rng(10)
        imgs = rng.random((30, 4, 4))
        cfg = toy_patch_cfg(dictionary_size=3)
        d1 = learn_dictionary(imgs, cfg, np.random.default_rng(42))
        d2 = learn_dictionary(imgs, cfg, np.random.default_rng(42))
        assert np.array_equal(d1, d2)

    def test_empty_training_set_rejected(self):
        cfg = toy_patch_cfg()
        with pytest.raises(ValueError):
            learn_dictionary(np.empty((0, 4, 4)), cfg, np.random.default_rng(0))

    def test_too_few_distinct_patches_rejected(self):
        imgs = np.ones((3, 4, 4))  # every patch identical
        cfg = toy_patch_cfg(dictionary_size=2)
        with pytest.raises(ValueError):
            learn_dictionary(imgs, cfg, np.random.default_rng(0))


class TestDictionaryFile:
    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(11)
        d = rng.random((16, 16)).astype(np.float32)
        path = str(tmp_path / "d.wdc")
        save_dictionary(path, d, patch_size=4)
        back, ps = load_dictionary(path)
        assert ps == 4
        assert np.array_equal(back, d)

    def test_header_golden_bytes(self):
        buf = io.BytesIO()
        save_dictionary(buf, np.zeros((2, 4), dtype=np.float32), patch_size=2)
        data = buf.getvalue()
        assert data[:16] == b"WDC1" + (1).to_bytes(4, "little") + (2).to_bytes(4, "little") + (2).to_bytes(4, "little")
        assert len(data) == 16 + 2 * 4 * 4

    def test_bad_magic(self):
        with pytest.raises(CorruptHeaderError):
            load_dictionary(io.BytesIO(b"XXXX" + b"\x00" * 16))

    def test_version_mismatch(self):
        buf = io.BytesIO()
        save_dictionary(buf, np.zeros((1, 4), dtype=np.float32), patch_size=2)
        data = bytearray(buf.getvalue())
        data[4] = 9
        with pytest.raises(VersionMismatchError):
            load_dictionary(io.BytesIO(bytes(data)))

    def test_truncated(self):
        buf = io.BytesIO()
        save_dictionary(buf, np.zeros((2, 4), dtype=np.float32), patch_size=2)
        with pytest.raises(TruncatedPayloadError):
            load_dictionary(io.BytesIO(buf.getvalue()[:-5]))


class TestDeleteBits:
    def test_p_zero_is_identity(self):
        code = BitVector(50, range(0, 50, 3))
        assert delete_bits(code, 0.0, np.random.default_rng(0)) == code

    def test_p_one_clears_everything(self):
        code = BitVector(50, range(0, 50, 3))
        assert delete_bits(code, 1.0, np.random.default_rng(0)).popcount == 0

    def test_never_adds_bits(self):
        rng = np.random.default_rng(12)
        for _ in range(100):
            code = BitVector(80, rng.choice(80, 20, replace=False))
            out = delete_bits(code, float(rng.random()), rng)
            assert out.issubset(code)

    def test_binomial_survivor_count(self):
        rng = np.random.default_rng(13)
        code = BitVector(100, range(100))
        survivors = [delete_bits(code, 0.75, rng).popcount for _ in range(400)]
        # Binomial(100, 0.25): mean 25, sd 4.33; sd of the mean ~ 0.217
        assert abs(np.mean(survivors) - 25.0) < 1.1
        assert np.std(survivors) == pytest.approx(4.33, abs=1.0)

    def test_p_out_of_range(self):
        with pytest.raises(ValueError):
            delete_bits(BitVector(4, [0]), 1.5, np.random.default_rng(0))

    def test_reproducible(self):
        code = BitVector(60, range(0, 60, 2))
        a = delete_bits(code, 0.4, np.random.default_rng(99))
        b = delete_bits(code, 0.4, np.random.default_rng(99))
        assert a == b


class TestSparsify:
    def test_target_above_popcount_is_identity(self):
        code = BitVector(20, [1, 5, 9])
        assert sparsify(code, 3, np.random.default_rng(0)) == code
        assert sparsify(code, 10, np.random.default_rng(0)) == code

    def test_target_zero_clears(self):
        code = BitVector(20, [1, 5, 9])
        assert sparsify(code, 0, np.random.default_rng(0)).popcount == 0

    def test_exact_subset_of_requested_size(self):
        rng = np.random.default_rng(14)
        code = BitVector(40, rng.choice(40, 10, replace=False))
        for _ in range(50):
            out = sparsify(code, 4, rng)
            assert out.popcount == 4
            assert out.issubset(code)

    def test_negative_target_rejected(self):
        with pytest.raises(ValueError):
            sparsify(BitVector(4, [0]), -1, np.random.default_rng(0))
