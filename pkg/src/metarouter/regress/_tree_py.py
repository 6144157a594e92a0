"""Pure-numpy regression-tree kernel (fallback for the compiled backend).

Both kernels implement the same algorithm with the same rounding behaviour so
that fitted trees agree across backends:

* nodes are processed depth-first, left child first, ids allocated at split
  time (left then right);
* candidate features are drawn per split by a partial Fisher-Yates shuffle
  driven by a splitmix64 stream seeded per tree;
* within a feature, samples are ordered by (value, position), where positions
  are ascending original row order, kept ascending through partitions;
* running sums are sequential (numpy cumsum == the C loop), the split score
  maximizes sum_L^2/weight_L + sum_R^2/weight_R with strict ``>`` tie-breaks
  (first feature, lowest boundary wins);
* a split is accepted only if its score strictly beats the parent score;
* thresholds are adjacent midpoints, snapped down when rounding would land on
  the right value.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1

BACKEND_NAME = "python"


def _splitmix_next(state: int) -> tuple[int, int]:
    state = (state + 0x9E3779B97F4A7C15) & _MASK
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    z ^= z >> 31
    return state, z


def _feature_subset(state: int, d: int, n_sub: int) -> tuple[int, list[int]]:
    arr = list(range(d))
    for j in range(n_sub):
        state, z = _splitmix_next(state)
        r = j + z % (d - j)
        arr[j], arr[r] = arr[r], arr[j]
    return state, arr[:n_sub]


def _seq_sum(values: np.ndarray) -> float:
    # cumsum is sequential, matching the compiled kernel's accumulation order
    return float(np.cumsum(values)[-1]) if values.size else 0.0


def build_tree(X, y, w, max_depth, min_leaf, n_sub_features, seed):
    """Grow one regression tree; returns (feature, threshold, left, right, value) arrays.

    ``feature[i] == -1`` marks a leaf.  Deterministic given ``seed``.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    w = np.ascontiguousarray(w, dtype=np.float64)
    n, d = X.shape
    n_sub = min(int(n_sub_features), d)
    wy = w * y

    feature = [-2]
    threshold = [0.0]
    left = [-1]
    right = [-1]
    value = [0.0]
    state = int(seed) & _MASK

    stack = [(0, np.arange(n, dtype=np.intp), 0)]
    while stack:
        nid, seg, depth = stack.pop()
        m = seg.shape[0]
        wseg = w[seg]
        sw = _seq_sum(wseg)
        swy = _seq_sum(wy[seg])
        value[nid] = swy / sw if sw > 0.0 else _seq_sum(y[seg]) / m
        yseg = y[seg]

        if depth >= max_depth or m < 2 * min_leaf or yseg.min() == yseg.max():
            feature[nid] = -1
            continue

        state, subset = _feature_subset(state, d, n_sub)
        best_gain = -np.inf
        best_feat = -1
        best_thr = 0.0
        for f in subset:
            xf = X[seg, f]
            order = np.lexsort((seg, xf))
            xs = xf[order]
            cw = np.cumsum(wseg[order])
            cwy = np.cumsum(wy[seg][order])
            lo, hi = min_leaf - 1, m - min_leaf  # candidate boundaries [lo, hi)
            if lo >= hi:
                continue
            wl = cw[lo:hi]
            al = cwy[lo:hi]
            wr = cw[m - 1] - wl
            ar = cwy[m - 1] - al
            gains = np.where(wl > 0.0, (al * al) / np.where(wl > 0.0, wl, 1.0), 0.0)
            gains = gains + np.where(wr > 0.0, (ar * ar) / np.where(wr > 0.0, wr, 1.0), 0.0)
            gains[xs[lo:hi] >= xs[lo + 1 : hi + 1]] = -np.inf
            j = int(np.argmax(gains))
            if gains[j] > best_gain:
                best_gain = float(gains[j])
                best_feat = f
                i = lo + j
                thr = (xs[i] + xs[i + 1]) / 2.0
                if thr >= xs[i + 1]:
                    thr = xs[i]
                best_thr = float(thr)

        parent = swy * swy / sw if sw > 0.0 else 0.0
        if best_gain <= parent:
            feature[nid] = -1
            continue

        go_left = X[seg, best_feat] <= best_thr
        lid = len(feature)
        rid = lid + 1
        for _ in range(2):
            feature.append(-2)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            value.append(0.0)
        feature[nid] = best_feat
        threshold[nid] = best_thr
        left[nid] = lid
        right[nid] = rid
        stack.append((rid, seg[~go_left], depth + 1))
        stack.append((lid, seg[go_left], depth + 1))

    return (
        np.array(feature, dtype=np.int32),
        np.array(threshold, dtype=np.float64),
        np.array(left, dtype=np.int32),
        np.array(right, dtype=np.int32),
        np.array(value, dtype=np.float64),
    )
