"""numba kernels for regression-tree growth and forest prediction.

Arithmetic order here is mirrored exactly by ``_kernels_numpy`` so both
backends grow identical trees.
"""

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def build_tree(X, Y, samples, keys, mtry, min_leaf, max_depth):
    N = samples.shape[0]
    p = X.shape[1]
    d = Y.shape[1]
    max_nodes = max(1, 2 * (N // min_leaf) - 1)

    feature = np.full(max_nodes, -1, np.int64)
    threshold = np.zeros(max_nodes)
    left = np.full(max_nodes, -1, np.int64)
    right = np.full(max_nodes, -1, np.int64)
    value = np.zeros((max_nodes, d))

    idx = samples.copy()
    buf = np.empty(N, np.int64)
    vals = np.empty(N)
    total = np.empty(d)
    lo = np.empty(d)
    hi = np.empty(d)
    lsum = np.empty(d)

    st_start = np.empty(max_nodes, np.int64)
    st_end = np.empty(max_nodes, np.int64)
    st_depth = np.empty(max_nodes, np.int64)
    st_node = np.empty(max_nodes, np.int64)
    st_start[0] = 0
    st_end[0] = N
    st_depth[0] = 0
    st_node[0] = 0
    top = 1
    n_nodes = 1
    draw = 0

    while top > 0:
        top -= 1
        start = st_start[top]
        end = st_end[top]
        depth = st_depth[top]
        node = st_node[top]
        m = end - start

        for k in range(d):
            total[k] = 0.0
            lo[k] = np.inf
            hi[k] = -np.inf
        for i in range(start, end):
            r = idx[i]
            for k in range(d):
                v = Y[r, k]
                total[k] += v
                if v < lo[k]:
                    lo[k] = v
                if v > hi[k]:
                    hi[k] = v
        constant = True
        for k in range(d):
            mean = total[k] / m
            if mean < lo[k]:
                mean = lo[k]
            if mean > hi[k]:
                mean = hi[k]
            value[node, k] = mean
            if lo[k] != hi[k]:
                constant = False
        if constant or m < 2 * min_leaf or depth >= max_depth:
            continue

        feat_order = np.argsort(keys[draw])
        draw += 1
        best_score = -np.inf
        best_f = -1
        best_thr = 0.0
        informative = 0
        for j in range(p):
            if informative >= mtry:
                break
            f = feat_order[j]
            for i in range(m):
                vals[i] = X[idx[start + i], f]
            order = np.argsort(vals[:m], kind="mergesort")
            if vals[order[0]] == vals[order[m - 1]]:
                continue
            informative += 1
            for k in range(d):
                lsum[k] = 0.0
            for i in range(m - 1):
                r = idx[start + order[i]]
                for k in range(d):
                    lsum[k] += Y[r, k]
                nl = i + 1
                nr = m - nl
                if nl < min_leaf:
                    continue
                if nr < min_leaf:
                    break
                v0 = vals[order[i]]
                v1 = vals[order[i + 1]]
                if v0 == v1:
                    continue
                s = 0.0
                for k in range(d):
                    a = lsum[k]
                    b = total[k] - a
                    s += a * a / nl + b * b / nr
                thr = 0.5 * (v0 + v1)
                if thr >= v1:
                    thr = v0
                if s > best_score or (
                    s == best_score and (f < best_f or (f == best_f and thr < best_thr))
                ):
                    best_score = s
                    best_f = f
                    best_thr = thr
        if best_f < 0:
            continue

        nl = 0
        for i in range(start, end):
            if X[idx[i], best_f] <= best_thr:
                buf[nl] = idx[i]
                nl += 1
        nr = nl
        for i in range(start, end):
            if not X[idx[i], best_f] <= best_thr:
                buf[nr] = idx[i]
                nr += 1
        for i in range(m):
            idx[start + i] = buf[i]

        feature[node] = best_f
        threshold[node] = best_thr
        left[node] = n_nodes
        right[node] = n_nodes + 1

        st_start[top] = start + nl
        st_end[top] = end
        st_depth[top] = depth + 1
        st_node[top] = n_nodes + 1
        top += 1
        st_start[top] = start
        st_end[top] = start + nl
        st_depth[top] = depth + 1
        st_node[top] = n_nodes
        top += 1
        n_nodes += 2

    return (
        feature[:n_nodes].copy(),
        threshold[:n_nodes].copy(),
        left[:n_nodes].copy(),
        right[:n_nodes].copy(),
        value[:n_nodes].copy(),
    )


@njit(cache=True, nogil=True)
def predict_forest(X, feature, threshold, left, right, value, roots):
    m = X.shape[0]
    d = value.shape[1]
    S = roots.shape[0]
    out = np.zeros((m, d))
    for i in range(m):
        for s in range(S):
            node = roots[s]
            while left[node] >= 0:
                if X[i, feature[node]] <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            for k in range(d):
                out[i, k] += value[node, k]
    for i in range(m):
        for k in range(d):
            out[i, k] /= S
    return out
