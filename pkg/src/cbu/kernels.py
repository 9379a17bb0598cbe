"""Hot numeric loops, each with a numba and a pure-numpy implementation.

The public functions dispatch on ``cbu._accel.USE_NUMBA``.  Both paths take
and return the same dtypes so they can be compared directly (see
``benchmarks/bench_kernels.py``).
"""

import numpy as np

from ._accel import USE_NUMBA, njit


# -- pairwise correct-vs-wrong comparison counts (AUC numerator) -------------
def pair_counts_numpy(pos, neg):
    diff = pos[:, None] - neg[None, :]
    return int(np.count_nonzero(diff > 0)), int(np.count_nonzero(diff == 0))


@njit
def pair_counts_numba(pos, neg):
    gt = 0
    eq = 0
    for i in range(pos.shape[0]):
        a = pos[i]
        for j in range(neg.shape[0]):
            b = neg[j]
            if a > b:
                gt += 1
            elif a == b:
                eq += 1
    return gt, eq


def pair_counts(pos, neg):
    """(#pairs pos > neg, #pairs pos == neg) over integer rank arrays."""
    pos = np.ascontiguousarray(pos, dtype=np.int64)
    neg = np.ascontiguousarray(neg, dtype=np.int64)
    if USE_NUMBA:
        gt, eq = pair_counts_numba(pos, neg)
        return int(gt), int(eq)
    return pair_counts_numpy(pos, neg)


# -- bootstrap: mean absolute error of resampled means -----------------------
def resample_errors_numpy(pool, idx, reference, span):
    means = pool[idx].mean(axis=1)
    return np.abs(means - reference) / span


@njit
def resample_errors_numba(pool, idx, reference, span):
    r, n = idx.shape
    out = np.empty(r)
    for i in range(r):
        s = 0.0
        for j in range(n):
            s += pool[idx[i, j]]
        out[i] = abs(s / n - reference) / span
    return out


def resample_errors(pool, idx, reference, span):
    """Per-resample ``|mean(pool[idx[i]]) - reference| / span``."""
    pool = np.ascontiguousarray(pool, dtype=np.float64)
    idx = np.ascontiguousarray(idx, dtype=np.int64)
    if USE_NUMBA:
        return resample_errors_numba(pool, idx, float(reference), float(span))
    return resample_errors_numpy(pool, idx, float(reference), float(span))


# -- average ranks with ties (1-based) --------------------------------------
def average_ranks_numpy(x):
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    n = x.shape[0]
    starts = np.flatnonzero(np.r_[True, xs[1:] != xs[:-1]])
    ends = np.r_[starts[1:], n]
    avg = (starts + ends + 1) / 2.0  # mean of 1-based positions start+1..end
    ranks = np.empty(n)
    ranks[order] = np.repeat(avg, ends - starts)
    return ranks


@njit
def average_ranks_numba(x):
    n = x.shape[0]
    order = np.argsort(x)  # tie order is irrelevant once ranks are averaged
    ranks = np.empty(n)
    i = 0
    while i < n:
        j = i
        while j + 1 < n and x[order[j + 1]] == x[order[i]]:
            j += 1
        r = (i + j + 2) / 2.0
        for k in range(i, j + 1):
            ranks[order[k]] = r
        i = j + 1
    return ranks


def average_ranks(x):
    x = np.ascontiguousarray(x, dtype=np.float64)
    if USE_NUMBA:
        return average_ranks_numba(x)
    return average_ranks_numpy(x)
