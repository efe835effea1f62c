import io

import numpy as np
import pytest

from wam.bitvec import BitVector
from wam.errors import (
    CorruptHeaderError,
    DimensionMismatchError,
    FormatError,
    TruncatedPayloadError,
    VersionMismatchError,
)
from wam.memory import WillshawMemory

# The worked two-pattern, two-modality example: every matrix and retrieval
# below is checked bit-for-bit.
X1_A = BitVector(2, [1])          # (0, 1)
X2_A = BitVector(2, [0])          # (1, 0)
X1_B = BitVector(4, [2, 3])       # (0, 0, 1, 1)
X2_B = BitVector(4, [0, 1])       # (1, 1, 0, 0)
X1_AB = BitVector(6, [1, 4, 5])   # (0, 1, 0, 0, 1, 1)
X2_AB = BitVector(6, [0, 2, 3])   # (1, 0, 1, 1, 0, 0)

W_A = np.array([[1, 0], [0, 1]], dtype=np.uint8)
W_B = np.array(
    [[1, 1, 0, 0],
     [1, 1, 0, 0],
     [0, 0, 1, 1],
     [0, 0, 1, 1]], dtype=np.uint8)
W_AB = np.array(
    [[1, 0, 1, 1, 0, 0],
     [0, 1, 0, 0, 1, 1],
     [1, 0, 1, 1, 0, 0],
     [1, 0, 1, 1, 0, 0],
     [0, 1, 0, 0, 1, 1],
     [0, 1, 0, 0, 1, 1]], dtype=np.uint8)


def build_auto(patterns, length):
    mem = WillshawMemory(length)
    for p in patterns:
        mem.store(p)
    return mem


def dense_oracle(pairs, m, n):
    """Independent reference: explicit dense OR of outer products."""
    w = np.zeros((m, n), dtype=np.int64)
    for q, a in pairs:
        for i in q.active:
            for j in a.active:
                w[i, j] = 1
    return w


def potentials_oracle(w, cue):
    return np.array([sum(w[i, j] for i in cue.active) for j in range(w.shape[1])])


class TestWorkedExample:
    def test_single_modality_matrices(self):
        assert np.array_equal(build_auto([X1_A, X2_A], 2).dense_weights(), W_A)
        assert np.array_equal(build_auto([X1_B, X2_B], 4).dense_weights(), W_B)

    def test_concatenated_matrix(self):
        mem = build_auto([X1_AB, X2_AB], 6)
        assert np.array_equal(mem.dense_weights(), W_AB)
        assert mem.stored_count == 2

    def test_masked_cues_recover_full_patterns(self):
        mem = build_auto([X1_AB, X2_AB], 6)
        r1 = mem.retrieve(BitVector(6, [1]))        # modality a of pattern 1, b deleted
        r2 = mem.retrieve(BitVector(6, [2, 3]))     # modality b of pattern 2, a deleted
        assert r1.output == X1_AB
        assert r2.output == X2_AB
        assert r1.max_potential == 1
        assert r2.max_potential == 2

    def test_potentials_of_masked_cue(self):
        # Hand multiplication of the 6x6 matrix against (0,1,0,0,0,0).
        mem = build_auto([X1_AB, X2_AB], 6)
        assert mem.potentials(BitVector(6, [1])).tolist() == [0, 1, 0, 0, 1, 1]

    def test_separate_memories_cannot_cross_modalities(self):
        # A zeroed-modality cue gives the per-modality memories nothing to
        # work with, while the concatenated memory recovers both patterns.
        mem_b = build_auto([X1_B, X2_B], 4)
        assert mem_b.retrieve(BitVector(4)).output == BitVector(4)
        mem_a = build_auto([X1_A, X2_A], 2)
        assert mem_a.retrieve(X1_A).output == X1_A  # echoes its own modality only


class TestStore:
    def test_single_pattern_outer_product(self):
        mem = WillshawMemory(2)
        mem.store(X1_A)
        assert np.array_equal(mem.dense_weights(), np.array([[0, 0], [0, 1]], dtype=np.uint8))

    def test_all_zero_pattern_leaves_weights_unchanged(self):
        mem = build_auto([X1_AB], 6)
        before = mem.dense_weights()
        mem.store(BitVector(6))
        assert np.array_equal(mem.dense_weights(), before)
        assert mem.stored_count == 2

    def test_fresh_memory_is_empty(self):
        mem = WillshawMemory(5, 3)
        assert mem.dense_weights().sum() == 0
        assert mem.stored_count == 0
        assert mem.density() == 0.0

    def test_dimension_mismatch_rejected(self):
        mem = WillshawMemory(4, 6)
        with pytest.raises(DimensionMismatchError):
            mem.store(BitVector(5, [0]), BitVector(6, [0]))
        with pytest.raises(DimensionMismatchError):
            mem.store(BitVector(4, [0]), BitVector(5, [0]))
        with pytest.raises(DimensionMismatchError):
            mem.potentials(BitVector(3, [0]))

    def test_heteroassociative_store(self):
        mem = WillshawMemory(3, 5)
        mem.store(BitVector(3, [0, 2]), BitVector(5, [1, 4]))
        expected = np.zeros((3, 5), dtype=np.uint8)
        expected[np.ix_([0, 2], [1, 4])] = 1
        assert np.array_equal(mem.dense_weights(), expected)

    def test_batch_matches_incremental(self):
        rng = np.random.default_rng(7)
        patterns = [BitVector(70, rng.choice(70, rng.integers(0, 12), replace=False)) for _ in range(40)]
        one_by_one = build_auto(patterns, 70)
        batched = WillshawMemory(70)
        batched.store_batch(patterns)
        assert batched == one_by_one


class TestRetrieve:
    def test_empty_cue_yields_empty_output(self):
        mem = build_auto([X1_AB, X2_AB], 6)
        res = mem.retrieve(BitVector(6))
        assert res.output == BitVector(6)
        assert res.max_potential == 0

    def test_fresh_memory_yields_empty_output(self):
        mem = WillshawMemory(8)
        res = mem.retrieve(BitVector(8, [1, 2, 3]))
        assert res.output == BitVector(8)
        assert res.max_potential == 0

    def test_all_zero_cue_potentials(self):
        mem = build_auto([X1_AB], 6)
        assert mem.potentials(BitVector(6)).tolist() == [0] * 6

    def test_output_bits_sit_at_threshold(self):
        rng = np.random.default_rng(3)
        mem = WillshawMemory(40)
        for _ in range(15):
            mem.store(BitVector(40, rng.choice(40, 6, replace=False)))
        cue = BitVector(40, rng.choice(40, 5, replace=False))
        res = mem.retrieve(cue)
        s = mem.potentials(cue)
        assert res.max_potential == s.max()
        assert np.array_equal(res.output.active, np.flatnonzero(s == s.max()) if s.max() > 0 else [])
        assert res.potentials_summary.max == res.max_potential
        assert res.potentials_summary.min == s.min()
        assert res.potentials_summary.mean == pytest.approx(s.mean())


class TestProperties:
    N_INSTANCES = 1000

    def test_randomized_brute_force_equivalence(self):
        # potentials() against an independently built dense matrix and a
        # by-hand matrix-vector product, over random instances up to 64x64.
        rng = np.random.default_rng(2024)
        for trial in range(self.N_INSTANCES):
            m = int(rng.integers(1, 65))
            n = int(rng.integers(1, 65))
            n_pairs = int(rng.integers(0, 8))
            pairs = []
            mem = WillshawMemory(m, n)
            for _ in range(n_pairs):
                q = BitVector(m, rng.choice(m, rng.integers(0, m + 1), replace=False))
                a = BitVector(n, rng.choice(n, rng.integers(0, n + 1), replace=False))
                pairs.append((q, a))
                mem.store(q, a)
            w = dense_oracle(pairs, m, n)
            assert np.array_equal(mem.dense_weights(), w), trial
            cue = BitVector(m, rng.choice(m, rng.integers(0, m + 1), replace=False))
            assert np.array_equal(mem.potentials(cue), potentials_oracle(w, cue)), trial

    def test_batch_potentials_match_single(self):
        rng = np.random.default_rng(11)
        mem = WillshawMemory(130)
        for _ in range(25):
            mem.store(BitVector(130, rng.choice(130, 9, replace=False)))
        cues = [BitVector(130, rng.choice(130, k, replace=False)) for k in (0, 1, 5, 9, 130)]
        batch = mem.potentials_batch(cues)
        for row, cue in zip(batch, cues):
            assert np.array_equal(row.astype(np.int64), mem.potentials(cue).astype(np.int64))

    def test_monotonicity(self):
        rng = np.random.default_rng(5)
        mem = WillshawMemory(48)
        prev = mem.dense_weights()
        for _ in range(30):
            mem.store(BitVector(48, rng.choice(48, 5, replace=False)))
            cur = mem.dense_weights()
            assert (cur >= prev).all()
            prev = cur

    def test_order_independence(self):
        rng = np.random.default_rng(6)
        patterns = [BitVector(32, rng.choice(32, 4, replace=False)) for _ in range(20)]
        shuffled = list(patterns)
        rng.shuffle(shuffled)
        assert build_auto(patterns, 32).words.tobytes() == build_auto(shuffled, 32).words.tobytes()

    def test_idempotent_restorage(self):
        rng = np.random.default_rng(8)
        q = BitVector(20, rng.choice(20, 5, replace=False))
        a = BitVector(20, rng.choice(20, 5, replace=False))
        mem = WillshawMemory(20)
        mem.store(q, a)
        once = mem.dense_weights()
        mem.store(q, a)
        assert np.array_equal(mem.dense_weights(), once)

    def test_auto_associative_symmetry(self):
        rng = np.random.default_rng(9)
        mem = WillshawMemory(40)
        for _ in range(25):
            mem.store(BitVector(40, rng.choice(40, rng.integers(1, 10), replace=False)))
        w = mem.dense_weights()
        assert np.array_equal(w, w.T)

    def test_superset_retrieval_of_stored_patterns(self):
        rng = np.random.default_rng(10)
        patterns = [BitVector(60, rng.choice(60, rng.integers(1, 9), replace=False)) for _ in range(30)]
        mem = build_auto(patterns, 60)
        for p in patterns:
            assert p.issubset(mem.retrieve(p).output)


class TestSerialization:
    def test_fresh_8x8_golden_bytes(self):
        mem = WillshawMemory(8)
        buf = io.BytesIO()
        mem.save(buf)
        data = buf.getvalue()
        header = b"WAM1" + (1).to_bytes(4, "little") + (8).to_bytes(8, "little") * 2 + (0).to_bytes(8, "little")
        assert data == header + b"\x00" * 8

    def test_roundtrip_is_bit_exact(self, tmp_path):
        mem = build_auto([X1_AB, X2_AB], 6)
        path = tmp_path / "w.wam"
        mem.save(str(path))
        back = WillshawMemory.load(str(path))
        assert back == mem
        assert back.stored_count == 2
        assert np.array_equal(back.dense_weights(), W_AB)

    def test_roundtrip_wide_matrix(self):
        # Column count not a multiple of 64 exercises both pad paths.
        rng = np.random.default_rng(12)
        mem = WillshawMemory(5, 131)
        for _ in range(8):
            mem.store(BitVector(5, rng.choice(5, 2, replace=False)), BitVector(131, rng.choice(131, 17, replace=False)))
        buf = io.BytesIO()
        mem.save(buf)
        buf.seek(0)
        assert WillshawMemory.load(buf) == mem

    def test_payload_size_is_bit_packed_across_rows(self):
        mem = WillshawMemory(6)  # 36 bits -> 5 payload bytes
        buf = io.BytesIO()
        mem.save(buf)
        assert len(buf.getvalue()) == 32 + 5

    def test_wrong_magic(self):
        with pytest.raises(CorruptHeaderError):
            WillshawMemory.load(io.BytesIO(b"NOPE" + b"\x00" * 40))

    def test_version_mismatch(self):
        mem = WillshawMemory(8)
        data = bytearray(io_bytes(mem))
        data[4] = 2
        with pytest.raises(VersionMismatchError):
            WillshawMemory.load(io.BytesIO(bytes(data)))

    def test_truncated_payload(self):
        mem = build_auto([BitVector(8, [0, 3])], 8)
        data = io_bytes(mem)
        with pytest.raises(TruncatedPayloadError):
            WillshawMemory.load(io.BytesIO(data[:-3]))

    def test_truncated_header(self):
        with pytest.raises(CorruptHeaderError):
            WillshawMemory.load(io.BytesIO(b"WAM1\x01"))

    def test_trailing_garbage_rejected(self):
        data = io_bytes(WillshawMemory(8)) + b"\xff"
        with pytest.raises(FormatError):
            WillshawMemory.load(io.BytesIO(data))

    def test_nonzero_padding_rejected(self):
        data = bytearray(io_bytes(WillshawMemory(3)))  # 9 bits -> 2 bytes, 7 pad bits
        data[-1] = 0x80
        with pytest.raises(FormatError):
            WillshawMemory.load(io.BytesIO(bytes(data)))


def io_bytes(mem):
    buf = io.BytesIO()
    mem.save(buf)
    return buf.getvalue()
