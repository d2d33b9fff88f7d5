"""Compiled kernels for growing and evaluating Gini decision trees."""

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def grow(X, y, sample_idx, max_features, min_leaf, max_depth, seed):
    """Grow one classification tree on the rows ``sample_idx`` (with repeats).

    Returns flat node arrays (feature, threshold, left, right, leaf_label).
    Internal nodes send ``x[feature] <= threshold`` left. ``max_depth < 0``
    means unbounded. Features constant within a node are skipped and do not
    count towards ``max_features``.
    """
    np.random.seed(seed)
    n_rows, n_features = X.shape
    m = sample_idx.shape[0]
    cap = 2 * m + 1
    feature = np.full(cap, -1, np.int64)
    threshold = np.zeros(cap, np.float64)
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    label = np.zeros(cap, np.int64)

    idx = sample_idx.copy()
    stack_node = np.empty(cap, np.int64)
    stack_start = np.empty(cap, np.int64)
    stack_end = np.empty(cap, np.int64)
    stack_depth = np.empty(cap, np.int64)
    top = 0
    stack_node[0] = 0
    stack_start[0] = 0
    stack_end[0] = m
    stack_depth[0] = 0
    top = 1
    n_nodes = 1
    order_f = np.arange(n_features)
    xs = np.empty(m, np.float64)
    ys = np.empty(m, np.int64)

    while top > 0:
        top -= 1
        node = stack_node[top]
        start = stack_start[top]
        end = stack_end[top]
        depth = stack_depth[top]
        n = end - start
        ones = 0
        for i in range(start, end):
            ones += y[idx[i]]
        label[node] = 1 if 2 * ones >= n else 0
        if ones == 0 or ones == n or n < 2 * min_leaf or (max_depth >= 0 and depth >= max_depth):
            continue

        # random feature order (Fisher-Yates)
        for i in range(n_features - 1, 0, -1):
            j = np.random.randint(0, i + 1)
            t = order_f[i]
            order_f[i] = order_f[j]
            order_f[j] = t

        best_score = np.inf
        best_f = -1
        best_thr = 0.0
        visited = 0
        for fi in range(n_features):
            if visited >= max_features:
                break
            f = order_f[fi]
            lo = np.inf
            hi = -np.inf
            for i in range(n):
                v = X[idx[start + i], f]
                xs[i] = v
                if v < lo:
                    lo = v
                if v > hi:
                    hi = v
            if not hi > lo:
                continue
            visited += 1
            order = np.argsort(xs[:n])
            for i in range(n):
                ys[i] = y[idx[start + order[i]]]
            c1l = 0
            for i in range(1, n):
                c1l += ys[i - 1]
                a = xs[order[i - 1]]
                b = xs[order[i]]
                if i < min_leaf or n - i < min_leaf or not a < b:
                    continue
                nl = i
                nr = n - i
                c0l = nl - c1l
                c1r = ones - c1l
                c0r = nr - c1r
                # weighted child Gini impurity, up to the constant n
                score = (nl - (c1l * c1l + c0l * c0l) / nl) + (nr - (c1r * c1r + c0r * c0r) / nr)
                if score < best_score:
                    best_score = score
                    best_f = f
                    thr = 0.5 * (a + b)
                    if not thr < b:
                        thr = a
                    best_thr = thr

        if best_f < 0:
            continue

        # partition idx[start:end] in place
        i = start
        j = end - 1
        while i <= j:
            if X[idx[i], best_f] <= best_thr:
                i += 1
            else:
                t = idx[i]
                idx[i] = idx[j]
                idx[j] = t
                j -= 1
        feature[node] = best_f
        threshold[node] = best_thr
        left[node] = n_nodes
        right[node] = n_nodes + 1
        stack_node[top] = n_nodes + 1
        stack_start[top] = i
        stack_end[top] = end
        stack_depth[top] = depth + 1
        top += 1
        stack_node[top] = n_nodes
        stack_start[top] = start
        stack_end[top] = i
        stack_depth[top] = depth + 1
        top += 1
        n_nodes += 2

    return (
        feature[:n_nodes].copy(),
        threshold[:n_nodes].copy(),
        left[:n_nodes].copy(),
        right[:n_nodes].copy(),
        label[:n_nodes].copy(),
    )


@njit(cache=True, nogil=True)
def apply(X, feature, threshold, left, right, label):
    out = np.empty(X.shape[0], np.int64)
    for r in range(X.shape[0]):
        node = 0
        while feature[node] >= 0:
            if X[r, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[r] = label[node]
    return out
