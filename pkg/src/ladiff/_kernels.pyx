# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops for decision-tree training and traversal.

Must stay numerically identical to ``ladiff._kernels_py``: same float
operations in the same order, same tie rule.
"""
import numpy as np
cimport numpy as cnp
from libc.stdlib cimport malloc, free, qsort

cnp.import_array()

cdef double TIE_TOL = 1e-12

cdef struct Pair:
    double v
    Py_ssize_t lab


cdef int _cmp_pair(const void* a, const void* b) noexcept nogil:
    cdef double x = (<Pair*>a).v
    cdef double y = (<Pair*>b).v
    if x < y:
        return -1
    if x > y:
        return 1
    return 0


def best_split_node(double[:, ::1] X, Py_ssize_t[::1] rows, Py_ssize_t[::1] y,
                    Py_ssize_t[::1] features, Py_ssize_t n_classes):
    """Return (feature, threshold, weighted child gini) of the best midpoint split.

    feature is -1 when no candidate feature has two distinct values.
    """
    cdef Py_ssize_t n = rows.shape[0]
    cdef Py_ssize_t n_feat = features.shape[0]
    cdef Py_ssize_t i, k, c, f, fi, n_l, n_r
    cdef double sl, sr, score, thr, a, b
    cdef double best_min = 1e300
    cdef double total_n = <double>n
    cdef Py_ssize_t out_feature = -1
    cdef double out_threshold = 0.0
    cdef double out_score = 0.0
    if n < 2 or n_feat == 0:
        return -1, 0.0, 0.0

    cdef Pair* pairs = <Pair*>malloc(n * sizeof(Pair))
    cdef double* left = <double*>malloc(n_classes * sizeof(double))
    cdef double* total = <double*>malloc(n_classes * sizeof(double))
    # scores[fi * (n - 1) + i] for the boundary after sorted position i; NaN if invalid
    cdef double* scores = <double*>malloc(n_feat * (n - 1) * sizeof(double))
    cdef double* thresholds = <double*>malloc(n_feat * (n - 1) * sizeof(double))
    if pairs == NULL or left == NULL or total == NULL or scores == NULL or thresholds == NULL:
        free(pairs); free(left); free(total); free(scores); free(thresholds)
        raise MemoryError()

    with nogil:
        for c in range(n_classes):
            total[c] = 0.0
        for k in range(n):
            total[y[rows[k]]] += 1.0
        for fi in range(n_feat):
            f = features[fi]
            for k in range(n):
                pairs[k].v = X[rows[k], f]
                pairs[k].lab = y[rows[k]]
            qsort(pairs, n, sizeof(Pair), _cmp_pair)
            for c in range(n_classes):
                left[c] = 0.0
            for i in range(n - 1):
                left[pairs[i].lab] += 1.0
                a = pairs[i].v
                b = pairs[i + 1].v
                if not (a < b):
                    scores[fi * (n - 1) + i] = -1.0
                    continue
                n_l = i + 1
                n_r = n - n_l
                sl = 0.0
                sr = 0.0
                for c in range(n_classes):
                    sl = sl + left[c] * left[c]
                    sr = sr + (total[c] - left[c]) * (total[c] - left[c])
                score = ((n_l - sl / n_l) + (n_r - sr / n_r)) / total_n
                thr = (a + b) * 0.5
                if thr >= b:
                    thr = a
                scores[fi * (n - 1) + i] = score
                thresholds[fi * (n - 1) + i] = thr
                if score < best_min:
                    best_min = score
        if best_min < 1e300:
            for fi in range(n_feat):
                for i in range(n - 1):
                    score = scores[fi * (n - 1) + i]
                    if score >= 0.0 and score <= best_min + TIE_TOL:
                        out_feature = features[fi]
                        out_threshold = thresholds[fi * (n - 1) + i]
                        out_score = score
                        break
                if out_feature != -1:
                    break

    free(pairs); free(left); free(total); free(scores); free(thresholds)
    return out_feature, out_threshold, out_score


def apply_tree(double[:, ::1] X, Py_ssize_t[::1] feature, double[::1] threshold,
               Py_ssize_t[::1] left, Py_ssize_t[::1] right):
    """Leaf node index reached by every row of X."""
    cdef Py_ssize_t n = X.shape[0]
    out = np.empty(n, dtype=np.intp)
    cdef Py_ssize_t[::1] out_v = out
    cdef Py_ssize_t r, node
    with nogil:
        for r in range(n):
            node = 0
            while left[node] != -1:
                if X[r, feature[node]] <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            out_v[r] = node
    return out
