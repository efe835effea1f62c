"""Hot loops for training and batch retrieval.

Compiled with numba when it is importable; otherwise the pure-numpy
fallbacks below keep everything working at reduced speed. Both paths are
exercised by the test suite through the same call sites.
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        if args and callable(args[0]):
            return args[0]
        return wrap


@njit(cache=True)
def _or_rows(words, indptr, indices, pat_words):
    """OR pattern b's packed words into every row listed for pattern b."""
    n_pat = indptr.shape[0] - 1
    n_words = words.shape[1]
    for b in range(n_pat):
        pw = pat_words[b]
        for t in range(indptr[b], indptr[b + 1]):
            row = words[indices[t]]
            for w in range(n_words):
                row[w] |= pw[w]


@njit(cache=True)
def _gather_sum_i16(dense, indptr, indices, out):
    """out[b, :] = sum of dense rows listed for cue b (int16 accumulation)."""
    n_cues = indptr.shape[0] - 1
    n = dense.shape[1]
    for b in range(n_cues):
        s = out[b]
        s[:] = 0
        for t in range(indptr[b], indptr[b + 1]):
            row = dense[indices[t]]
            for j in range(n):
                s[j] += row[j]


def or_rows(words, indptr, indices, pat_words) -> None:
    if HAVE_NUMBA:
        _or_rows(words, indptr, indices, pat_words)
        return
    n_pat = indptr.shape[0] - 1
    for b in range(n_pat):
        rows = indices[indptr[b]:indptr[b + 1]]
        words[rows] |= pat_words[b]


def gather_sum(dense, indptr, indices) -> np.ndarray:
    """Column sums of selected rows per cue; integer array of shape (B, n).

    Values are exact. Accumulates in int16 when the row count cannot
    overflow it (the memory dimension bounds any potential), int32
    otherwise; callers should not rely on a particular integer dtype.
    """
    n_cues = indptr.shape[0] - 1
    if HAVE_NUMBA and dense.shape[0] < np.iinfo(np.int16).max:
        out = np.empty((n_cues, dense.shape[1]), dtype=np.int16)
        _gather_sum_i16(dense, indptr, indices, out)
        return out
    out = np.empty((n_cues, dense.shape[1]), dtype=np.int32)
    for b in range(n_cues):
        rows = indices[indptr[b]:indptr[b + 1]]
        if rows.size:
            np.sum(dense[rows], axis=0, dtype=np.int32, out=out[b])
        else:
            out[b] = 0
    return out
