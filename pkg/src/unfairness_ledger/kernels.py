"""Hot numeric kernels with a numba path and a pure-numpy fallback.

Set ``UNFAIRNESS_LEDGER_NUMBA=0`` in the environment before import to force the
numpy path. Both implementations of every kernel are importable under
``*_numba`` / ``*_numpy`` names so they can be compared directly; the
unsuffixed names dispatch to the selected backend.
"""

from __future__ import annotations

import os

import numpy as np

_FLAG = os.environ.get("UNFAIRNESS_LEDGER_NUMBA", "1").strip().lower()

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is an optional extra
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and _FLAG not in {"0", "false", "no", "off"}
BACKEND = "numba" if USE_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# per-cell sums: count, sum(a), sum(g), sum(a*g)


def cell_sums_numpy(cells, n_cells, a, g):
    count = np.bincount(cells, minlength=n_cells).astype(np.float64)
    sum_a = np.bincount(cells, weights=a, minlength=n_cells)
    sum_g = np.bincount(cells, weights=g, minlength=n_cells)
    sum_ag = np.bincount(cells, weights=a * g, minlength=n_cells)
    return count, sum_a, sum_g, sum_ag


def _cell_sums_loop(cells, n_cells, a, g):
    count = np.zeros(n_cells)
    sum_a = np.zeros(n_cells)
    sum_g = np.zeros(n_cells)
    sum_ag = np.zeros(n_cells)
    for i in range(cells.shape[0]):
        c = cells[i]
        count[c] += 1.0
        sum_a[c] += a[i]
        sum_g[c] += g[i]
        sum_ag[c] += a[i] * g[i]
    return count, sum_a, sum_g, sum_ag


# ---------------------------------------------------------------------------
# per-cell centred cross products: sum((a - mean_a[c]) * (b - mean_b[c]))


def cell_centered_cross_numpy(cells, n_cells, a, b, mean_a, mean_b):
    prod = (a - mean_a[cells]) * (b - mean_b[cells])
    return np.bincount(cells, weights=prod, minlength=n_cells)


def _cell_centered_cross_loop(cells, n_cells, a, b, mean_a, mean_b):
    out = np.zeros(n_cells)
    for i in range(cells.shape[0]):
        c = cells[i]
        out[c] += (a[i] - mean_a[c]) * (b[i] - mean_b[c])
    return out


# ---------------------------------------------------------------------------
# pool adjacent violators on pre-sorted, pre-pooled points
#
# Returns (values, weights, ends) for the final blocks; ``ends[k]`` is the
# exclusive end index of block k in the input order. Adjacent blocks are merged
# while left >= right, so the returned values are strictly increasing.


def pava_numpy(y, w):
    n = y.shape[0]
    values = np.empty(n)
    weights = np.empty(n)
    sums = np.empty(n)
    ends = np.empty(n, dtype=np.int64)
    top = -1
    for i in range(n):
        top += 1
        sums[top] = y[i] * w[i]
        weights[top] = w[i]
        values[top] = y[i]
        ends[top] = i + 1
        while top > 0 and values[top - 1] >= values[top]:
            sums[top - 1] += sums[top]
            weights[top - 1] += weights[top]
            values[top - 1] = sums[top - 1] / weights[top - 1]
            ends[top - 1] = ends[top]
            top -= 1
    k = top + 1
    return values[:k].copy(), weights[:k].copy(), ends[:k].copy()


if HAVE_NUMBA:
    cell_sums_numba = njit(cache=True)(_cell_sums_loop)
    cell_centered_cross_numba = njit(cache=True)(_cell_centered_cross_loop)
    pava_numba = njit(cache=True)(pava_numpy)
else:  # pragma: no cover
    cell_sums_numba = _cell_sums_loop
    cell_centered_cross_numba = _cell_centered_cross_loop
    pava_numba = pava_numpy


def cell_sums(cells, n_cells, a, g):
    cells = np.ascontiguousarray(cells, dtype=np.int64)
    a = np.ascontiguousarray(a, dtype=np.float64)
    g = np.ascontiguousarray(g, dtype=np.float64)
    if USE_NUMBA:
        return cell_sums_numba(cells, int(n_cells), a, g)
    return cell_sums_numpy(cells, int(n_cells), a, g)


def cell_centered_cross(cells, n_cells, a, b, mean_a, mean_b):
    cells = np.ascontiguousarray(cells, dtype=np.int64)
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    mean_a = np.ascontiguousarray(mean_a, dtype=np.float64)
    mean_b = np.ascontiguousarray(mean_b, dtype=np.float64)
    if USE_NUMBA:
        return cell_centered_cross_numba(cells, int(n_cells), a, b, mean_a, mean_b)
    return cell_centered_cross_numpy(cells, int(n_cells), a, b, mean_a, mean_b)


def pava(y, w):
    y = np.ascontiguousarray(y, dtype=np.float64)
    w = np.ascontiguousarray(w, dtype=np.float64)
    if USE_NUMBA:
        return pava_numba(y, w)
    return pava_numpy(y, w)
