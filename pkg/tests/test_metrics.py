import math

import numpy as np
import pytest

from wam.bitvec import BitVector
from wam.metrics import binarize, bit_stats, mse, mse_split, optimal_sparsity


def mse_oracle(p, q):
    """By-the-definition double average of squared per-pixel differences."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    total = 0.0
    for i in range(p.shape[0]):
        total += np.mean((p[i] - q[i]) ** 2)
    return total / p.shape[0]


class TestMse:
    def test_identical_sets(self):
        imgs = (np.random.default_rng(0).random((4, 5, 5)) > 0.5).astype(np.uint8)
        assert mse(imgs, imgs) == 0.0

    def test_all_black_vs_all_white(self):
        assert mse(np.zeros((1, 7, 7)), np.ones((1, 7, 7))) == 1.0

    def test_partial_disagreement(self):
        p = np.zeros((1, 784))
        q = p.copy()
        q[0, :78] = 1
        assert mse(p, q) == pytest.approx(78 / 784)

    def test_matches_definition_oracle(self):
        rng = np.random.default_rng(1)
        p = (rng.random((6, 28, 28)) > 0.5).astype(np.uint8)
        q = (rng.random((6, 28, 28)) > 0.5).astype(np.uint8)
        assert mse(p, q) == pytest.approx(mse_oracle(p, q), abs=1e-12)

    def test_symmetry_for_binary_inputs(self):
        rng = np.random.default_rng(2)
        p = (rng.random((3, 8, 8)) > 0.3).astype(np.uint8)
        q = (rng.random((3, 8, 8)) > 0.7).astype(np.uint8)
        assert mse(p, q) == mse(q, p)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            mse(np.zeros((2, 4, 4)), np.zeros((2, 4, 5)))

    def test_non_binary_rejected(self):
        with pytest.raises(ValueError):
            mse(np.full((1, 4), 0.5), np.zeros((1, 4)))


class TestMseSplit:
    def test_subset_reconstruction_has_no_extra(self):
        p = np.zeros((1, 4, 4))
        p[0, :2] = 1
        q = p.copy()
        q[0, 0, 0] = 0
        lost, extra = mse_split(p, q)
        assert extra == 0.0
        assert lost == pytest.approx(1 / 16)

    def test_superset_reconstruction_has_no_loss(self):
        p = np.zeros((1, 4, 4))
        q = p.copy()
        q[0, 3, 3] = 1
        lost, extra = mse_split(p, q)
        assert lost == 0.0
        assert extra == pytest.approx(1 / 16)

    def test_components_sum_to_mse_exactly(self):
        rng = np.random.default_rng(3)
        for _ in range(25):
            p = (rng.random((4, 9, 9)) > rng.random()).astype(np.uint8)
            q = (rng.random((4, 9, 9)) > rng.random()).astype(np.uint8)
            lost, extra = mse_split(p, q)
            assert lost + extra == mse(p, q)

    def test_swapping_arguments_swaps_components(self):
        rng = np.random.default_rng(4)
        p = (rng.random((2, 6, 6)) > 0.5).astype(np.uint8)
        q = (rng.random((2, 6, 6)) > 0.5).astype(np.uint8)
        assert mse_split(p, q) == mse_split(q, p)[::-1]


class TestBitStats:
    def test_single_code(self):
        stats = bit_stats([BitVector(20, range(8))])
        assert stats == (8.0, 0.0, 8, 8)

    def test_two_codes(self):
        stats = bit_stats([BitVector(10, [0, 1]), BitVector(10, [2, 3, 4, 5])])
        assert stats.mean == 3.0
        assert stats.min == 2 and stats.max == 4

    def test_empty_set_rejected(self):
        with pytest.raises(ValueError):
            bit_stats([])


class TestOptimalSparsity:
    def test_reference_pattern_length(self):
        v = optimal_sparsity(784)
        assert v == pytest.approx(math.log2(196))
        assert round(v) == 8

    def test_small_powers(self):
        assert optimal_sparsity(8) == 1.0
        assert optimal_sparsity(4096) == 10.0

    def test_domain_edge(self):
        with pytest.raises(ValueError):
            optimal_sparsity(4)
        assert optimal_sparsity(5) > 0


class TestBinarize:
    def test_threshold(self):
        img = np.array([[0.2, 0.5, 0.51, 1.0]])
        assert binarize(img).tolist() == [[0, 0, 1, 1]]
        assert binarize(img, threshold=0.1).tolist() == [[1, 1, 1, 1]]
