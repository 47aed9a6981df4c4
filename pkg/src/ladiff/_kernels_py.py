"""numpy implementation of the tree kernels; the reference for ``_kernels.pyx``."""
import numpy as np

TIE_TOL = 1e-12


def best_split_node(X, rows, y, features, n_classes):
    n = len(rows)
    if n < 2 or len(features) == 0:
        return -1, 0.0, 0.0
    labels = y[rows]
    total = np.bincount(labels, minlength=n_classes).astype(np.float64)
    n_l = np.arange(1, n, dtype=np.float64)
    n_r = n - n_l
    per_feature = []
    best_min = np.inf
    for f in features:
        vals = X[rows, f]
        order = np.argsort(vals, kind="stable")
        sv = vals[order]
        onehot = np.zeros((n, n_classes))
        onehot[np.arange(n), labels[order]] = 1.0
        left = np.cumsum(onehot, axis=0)[:-1]
        right = total - left
        # class counts are integers, so these sums are exact in any order
        sl = (left * left).sum(axis=1)
        sr = (right * right).sum(axis=1)
        scores = ((n_l - sl / n_l) + (n_r - sr / n_r)) / float(n)
        a, b = sv[:-1], sv[1:]
        valid = a < b
        thr = (a + b) * 0.5
        thr = np.where(thr >= b, a, thr)
        scores = np.where(valid, scores, np.inf)
        per_feature.append((f, scores, thr))
        if valid.any():
            best_min = min(best_min, float(scores.min()))
    if not np.isfinite(best_min):
        return -1, 0.0, 0.0
    for f, scores, thr in per_feature:
        hits = np.flatnonzero(scores <= best_min + TIE_TOL)
        if len(hits):
            i = hits[0]
            return int(f), float(thr[i]), float(scores[i])
    return -1, 0.0, 0.0


def apply_tree(X, feature, threshold, left, right):
    node = np.zeros(X.shape[0], dtype=np.intp)
    rows = np.arange(X.shape[0])
    active = left[node] != -1
    while active.any():
        r = rows[active]
        nd = node[r]
        go_left = X[r, feature[nd]] <= threshold[nd]
        node[r] = np.where(go_left, left[nd], right[nd])
        active = left[node] != -1
    return node
