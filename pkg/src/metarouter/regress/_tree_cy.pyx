# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled regression-tree kernel; algorithmic twin of ``_tree_py``.

Keep the two kernels in lockstep: same splitmix64 stream, node order,
summation order and tie-breaking, so fitted trees agree across backends.
"""

import numpy as np

BACKEND_NAME = "cython"

ctypedef unsigned long long u64
ctypedef Py_ssize_t idx_t

cdef u64 _GOLDEN = 0x9E3779B97F4A7C15ULL
cdef u64 _MIX1 = 0xBF58476D1CE4E5B9ULL
cdef u64 _MIX2 = 0x94D049BB133111EBULL


cdef inline u64 _splitmix_next(u64* state) noexcept nogil:
    cdef u64 z
    state[0] = state[0] + _GOLDEN
    z = state[0]
    z = (z ^ (z >> 30)) * _MIX1
    z = (z ^ (z >> 27)) * _MIX2
    return z ^ (z >> 31)


cdef void _merge_sort(idx_t* pos, idx_t* tmp, double* key, idx_t m) noexcept nogil:
    """Stable bottom-up mergesort of ``pos`` by ``key[pos[.]]``."""
    cdef idx_t width = 1, i, l, r, le, re, k
    while width < m:
        i = 0
        while i < m:
            l = i
            le = i + width
            if le > m:
                le = m
            r = le
            re = i + 2 * width
            if re > m:
                re = m
            k = i
            while l < le and r < re:
                if key[pos[l]] <= key[pos[r]]:
                    tmp[k] = pos[l]; l += 1
                else:
                    tmp[k] = pos[r]; r += 1
                k += 1
            while l < le:
                tmp[k] = pos[l]; l += 1; k += 1
            while r < re:
                tmp[k] = pos[r]; r += 1; k += 1
            i += 2 * width
        for k in range(m):
            pos[k] = tmp[k]
        width *= 2


def build_tree(X, y, w, max_depth, min_leaf, n_sub_features, seed):
    """Grow one regression tree; returns (feature, threshold, left, right, value) arrays."""
    cdef double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef double[::1] yv = np.ascontiguousarray(y, dtype=np.float64)
    cdef double[::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef idx_t n = Xv.shape[0]
    cdef idx_t d = Xv.shape[1]
    cdef int depth_cap = int(max_depth)
    cdef idx_t leaf_min = int(min_leaf)
    cdef idx_t n_sub = int(n_sub_features)
    if n_sub > d:
        n_sub = d
    cdef u64 state = <u64> (int(seed) & ((1 << 64) - 1))

    cdef idx_t max_nodes = 2 * (n // leaf_min if leaf_min > 0 else n) + 3

    feature_arr = np.full(max_nodes, -2, dtype=np.int32)
    threshold_arr = np.zeros(max_nodes, dtype=np.float64)
    left_arr = np.full(max_nodes, -1, dtype=np.int32)
    right_arr = np.full(max_nodes, -1, dtype=np.int32)
    value_arr = np.zeros(max_nodes, dtype=np.float64)
    cdef int[::1] feature = feature_arr
    cdef double[::1] threshold = threshold_arr
    cdef int[::1] left = left_arr
    cdef int[::1] right = right_arr
    cdef double[::1] value = value_arr

    samples_np = np.arange(n, dtype=np.intp)
    cdef idx_t[::1] samples = samples_np
    scratch_np = np.empty(n, dtype=np.intp)
    cdef idx_t[::1] scratch = scratch_np
    pos_np = np.empty(n, dtype=np.intp)
    cdef idx_t[::1] pos = pos_np
    tmp_np = np.empty(n, dtype=np.intp)
    cdef idx_t[::1] tmp = tmp_np
    xv_np = np.empty(n, dtype=np.float64)
    cdef double[::1] xv = xv_np
    cw_np = np.empty(n, dtype=np.float64)
    cdef double[::1] cw = cw_np
    cwy_np = np.empty(n, dtype=np.float64)
    cdef double[::1] cwy = cwy_np
    subset_np = np.empty(d if d > 0 else 1, dtype=np.intp)
    cdef idx_t[::1] subset = subset_np
    perm_np = np.empty(d if d > 0 else 1, dtype=np.intp)
    cdef idx_t[::1] perm = perm_np

    # explicit stack of (node id, segment start, segment end, depth)
    stack_np = np.empty((max_nodes + 2, 4), dtype=np.intp)
    cdef idx_t[:, ::1] stack = stack_np

    cdef idx_t top = 0, n_used = 1
    cdef idx_t nid, start, end, m, i, j, k, f, s, lid, rid, n_left, best_i
    cdef int depth
    cdef double sw, swy, sy, ymin, ymax, parent, best_gain, best_thr
    cdef double wl, al, wr, ar, gain, thr, acc_w, acc_wy, yval
    cdef idx_t best_feat
    cdef u64 z
    cdef double NEG_INF = -np.inf

    stack[0, 0] = 0; stack[0, 1] = 0; stack[0, 2] = n; stack[0, 3] = 0
    top = 1
    while top > 0:
        top -= 1
        nid = stack[top, 0]
        start = stack[top, 1]
        end = stack[top, 2]
        depth = <int> stack[top, 3]
        m = end - start

        sw = 0.0; swy = 0.0; sy = 0.0
        ymin = yv[samples[start]]; ymax = ymin
        for i in range(start, end):
            s = samples[i]
            sw += wv[s]
            swy += wv[s] * yv[s]
            sy += yv[s]
            yval = yv[s]
            if yval < ymin:
                ymin = yval
            if yval > ymax:
                ymax = yval
        value[nid] = swy / sw if sw > 0.0 else sy / m

        if depth >= depth_cap or m < 2 * leaf_min or ymin == ymax:
            feature[nid] = -1
            continue

        # partial Fisher-Yates over [0, d) for the candidate features
        for i in range(d):
            perm[i] = i
        for j in range(n_sub):
            z = _splitmix_next(&state)
            k = j + <idx_t> (z % <u64> (d - j))
            s = perm[j]; perm[j] = perm[k]; perm[k] = s
        for j in range(n_sub):
            subset[j] = perm[j]

        best_gain = NEG_INF
        best_feat = -1
        best_thr = 0.0
        for j in range(n_sub):
            f = subset[j]
            for i in range(m):
                xv[i] = Xv[samples[start + i], f]
                pos[i] = i
            _merge_sort(&pos[0], &tmp[0], &xv[0], m)
            acc_w = 0.0; acc_wy = 0.0
            for i in range(m):
                s = samples[start + pos[i]]
                acc_w += wv[s]
                acc_wy += wv[s] * yv[s]
                cw[i] = acc_w
                cwy[i] = acc_wy
            for i in range(leaf_min - 1, m - leaf_min):
                if xv[pos[i]] >= xv[pos[i + 1]]:
                    continue
                wl = cw[i]; al = cwy[i]
                wr = cw[m - 1] - wl; ar = cwy[m - 1] - al
                gain = ((al * al) / wl if wl > 0.0 else 0.0) + \
                       ((ar * ar) / wr if wr > 0.0 else 0.0)
                if gain > best_gain:
                    best_gain = gain
                    best_feat = f
                    thr = (xv[pos[i]] + xv[pos[i + 1]]) / 2.0
                    if thr >= xv[pos[i + 1]]:
                        thr = xv[pos[i]]
                    best_thr = thr

        parent = swy * swy / sw if sw > 0.0 else 0.0
        if best_gain <= parent:
            feature[nid] = -1
            continue

        # stable partition of the segment by value, ascending order kept
        n_left = 0
        for i in range(start, end):
            if Xv[samples[i], best_feat] <= best_thr:
                scratch[n_left] = samples[i]
                n_left += 1
        k = n_left
        for i in range(start, end):
            if Xv[samples[i], best_feat] > best_thr:
                scratch[k] = samples[i]
                k += 1
        for i in range(m):
            samples[start + i] = scratch[i]

        lid = n_used
        rid = n_used + 1
        n_used += 2
        feature[nid] = <int> best_feat
        threshold[nid] = best_thr
        left[nid] = <int> lid
        right[nid] = <int> rid
        stack[top, 0] = rid; stack[top, 1] = start + n_left
        stack[top, 2] = end; stack[top, 3] = depth + 1
        top += 1
        stack[top, 0] = lid; stack[top, 1] = start
        stack[top, 2] = start + n_left; stack[top, 3] = depth + 1
        top += 1

    return (
        feature_arr[:n_used].copy(),
        threshold_arr[:n_used].copy(),
        left_arr[:n_used].copy(),
        right_arr[:n_used].copy(),
        value_arr[:n_used].copy(),
    )
