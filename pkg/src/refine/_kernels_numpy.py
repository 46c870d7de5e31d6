"""Pure-numpy twins of the numba tree kernels.

Same traversal order, same candidate-feature draws, same floating-point
accumulation order; vectorized over split positions and rows instead of
looping.
"""

import numpy as np


def build_tree(X, Y, samples, keys, mtry, min_leaf, max_depth):
    N = samples.shape[0]
    d = Y.shape[1]
    idx = samples.copy()
    feature = [-1]
    threshold = [0.0]
    left = [-1]
    right = [-1]
    value = [None]
    stack = [(0, N, 0, 0)]
    draw = 0

    while stack:
        start, end, depth, node = stack.pop()
        rows = idx[start:end]
        Yn = Y[rows]
        m = end - start
        total = np.cumsum(Yn, axis=0)[-1]
        lo = Yn.min(axis=0)
        hi = Yn.max(axis=0)
        value[node] = np.minimum(np.maximum(total / m, lo), hi)
        if np.all(lo == hi) or m < 2 * min_leaf or depth >= max_depth:
            continue

        feat_order = np.argsort(keys[draw])
        draw += 1
        best_score, best_f, best_thr = -np.inf, -1, 0.0
        informative = 0
        nl = np.arange(1, m)
        nr = m - nl
        size_ok = (nl >= min_leaf) & (nr >= min_leaf)
        for f in feat_order:
            if informative >= mtry:
                break
            vals = X[rows, f]
            order = np.argsort(vals, kind="stable")
            sv = vals[order]
            if sv[0] == sv[-1]:
                continue
            informative += 1
            valid = size_ok & (sv[:-1] != sv[1:])
            if not valid.any():
                continue
            L = np.cumsum(Yn[order], axis=0)[:-1]
            s = np.zeros(m - 1)
            for k in range(d):
                a = L[:, k]
                b = total[k] - a
                s += a * a / nl + b * b / nr
            s = np.where(valid, s, -np.inf)
            i = int(np.argmax(s))
            thr = 0.5 * (sv[i] + sv[i + 1])
            if thr >= sv[i + 1]:
                thr = sv[i]
            score = s[i]
            if score > best_score or (
                score == best_score and (f < best_f or (f == best_f and thr < best_thr))
            ):
                best_score, best_f, best_thr = score, int(f), float(thr)
        if best_f < 0:
            continue

        go_left = X[rows, best_f] <= best_thr
        n_left = int(go_left.sum())
        idx[start:end] = np.concatenate([rows[go_left], rows[~go_left]])

        lid = len(feature)
        feature[node] = best_f
        threshold[node] = best_thr
        left[node] = lid
        right[node] = lid + 1
        feature += [-1, -1]
        threshold += [0.0, 0.0]
        left += [-1, -1]
        right += [-1, -1]
        value += [None, None]
        stack.append((start + n_left, end, depth + 1, lid + 1))
        stack.append((start, start + n_left, depth + 1, lid))

    return (
        np.asarray(feature, dtype=np.int64),
        np.asarray(threshold, dtype=np.float64),
        np.asarray(left, dtype=np.int64),
        np.asarray(right, dtype=np.int64),
        np.vstack(value).reshape(len(value), d),
    )


def predict_forest(X, feature, threshold, left, right, value, roots):
    m = X.shape[0]
    out = np.zeros((m, value.shape[1]))
    rows = np.arange(m)
    for root in roots:
        node = np.full(m, root, dtype=np.int64)
        active = left[node] >= 0
        while active.any():
            r = rows[active]
            n = node[active]
            go_left = X[r, feature[n]] <= threshold[n]
            node[active] = np.where(go_left, left[n], right[n])
            active = left[node] >= 0
        out += value[node]
    out /= len(roots)
    return out
