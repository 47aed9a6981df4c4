"""Independent reference computations used as test oracles.

Written as plain per-element loops so they share no code path with the
vectorized implementations they check.
"""
import itertools
import math

import numpy as np


# ---------------------------------------------------------------------------
# neural forward, straight-line, any float dtype

def _sig(x):
    return 1 / (1 + np.exp(-x))


def _rnn_seq(p, xs, dtype):
    """xs: list of input vectors for one sequence -> list of hidden vectors."""
    W_f, U_f, b_f = (np.asarray(p[k], dtype=dtype) for k in ("W_f", "U_f", "b_f"))
    W_h, U_h, b_h = (np.asarray(p[k], dtype=dtype) for k in ("W_h", "U_h", "b_h"))
    H = len(b_f)
    h = np.zeros(H, dtype=dtype)
    out = []
    for x in xs:
        f = np.empty(H, dtype=dtype)
        c = np.empty(H, dtype=dtype)
        for j in range(H):
            a = b_f[j]
            for i in range(len(x)):
                a += x[i] * W_f[i, j]
            for i in range(H):
                a += h[i] * U_f[i, j]
            f[j] = _sig(a)
        for j in range(H):
            a = b_h[j]
            for i in range(len(x)):
                a += x[i] * W_h[i, j]
            for i in range(H):
                a += f[i] * h[i] * U_h[i, j]
            c[j] = np.tanh(a)
        h = (1 - f) * h + f * c
        out.append(h.copy())
    return out


def _hidden(groups, seq, dtype):
    emb = np.asarray(groups[0]["weight"], dtype=dtype)
    xs = [emb[t] for t in seq]
    for p in groups[1:-1]:
        xs = _rnn_seq(p, xs, dtype)
    return xs


def oracle_lm_probs(groups, ids, dtype=np.float64):
    emb = np.asarray(groups[0]["weight"], dtype=dtype)
    bias = np.asarray(groups[-1]["bias"], dtype=dtype)
    out = []
    for seq in ids:
        rows = []
        for h in _hidden(groups, seq, dtype):
            logits = np.array([bias[v] + sum(h[e] * emb[v, e] for e in range(len(h)))
                               for v in range(len(bias))], dtype=dtype)
            z = np.exp(logits - logits.max())
            rows.append(z / z.sum())
        out.append(rows)
    return np.array(out, dtype=dtype)


def oracle_lm_loss(groups, ids, targets, dtype=np.float64):
    probs = oracle_lm_probs(groups, ids, dtype)
    total = dtype(0) if callable(dtype) else 0
    n = 0
    for b in range(len(ids)):
        for t in range(len(ids[b])):
            total += -np.log(probs[b, t, targets[b][t]])
            n += 1
    return total / n


def oracle_clf_probs(groups, ids, lengths, multilabel, dtype=np.float64):
    W = np.asarray(groups[-1]["weight"], dtype=dtype)
    bias = np.asarray(groups[-1]["bias"], dtype=dtype)
    out = []
    for seq, n in zip(ids, lengths):
        hs = _hidden(groups, seq, dtype)[:n]
        E = len(hs[0])
        mean = np.array([sum(h[e] for h in hs) / n for e in range(E)], dtype=dtype)
        mx = np.array([max(h[e] for h in hs) for e in range(E)], dtype=dtype)
        pooled = np.concatenate([mean, mx, hs[-1]])
        scores = np.array([bias[c] + sum(pooled[i] * W[i, c] for i in range(len(pooled)))
                           for c in range(len(bias))], dtype=dtype)
        if multilabel:
            out.append(_sig(scores))
        else:
            z = np.exp(scores - scores.max())
            out.append(z / z.sum())
    return np.array(out, dtype=dtype)


def oracle_clf_loss(groups, ids, lengths, targets, multilabel, dtype=np.float64):
    probs = oracle_clf_probs(groups, ids, lengths, multilabel, dtype)
    if multilabel:
        terms = [-(y * np.log(p) + (1 - y) * np.log(1 - p))
                 for row, trow in zip(probs, targets) for p, y in zip(row, trow)]
    else:
        terms = [-np.log(row[t]) for row, t in zip(probs, targets)]
    return sum(terms) / len(terms)


def central_differences(groups, loss_fn, h=1e-5, dtype=np.longdouble):
    """d loss / d param for every scalar parameter, evaluated in ``dtype``."""
    work = [{k: np.asarray(v, dtype=dtype).copy() for k, v in g.items()} for g in groups]
    grads = []
    for g in work:
        gg = {}
        for name, arr in g.items():
            out = np.zeros(arr.shape, dtype=dtype)
            for idx in np.ndindex(arr.shape):
                old = arr[idx]
                arr[idx] = old + dtype(h)
                up = loss_fn(work)
                arr[idx] = old - dtype(h)
                down = loss_fn(work)
                arr[idx] = old
                out[idx] = (up - down) / (2 * dtype(h))
            gg[name] = out
        grads.append(gg)
    return grads


# ---------------------------------------------------------------------------
# decision tree split search by exhaustive enumeration

def gini_of(labels):
    n = len(labels)
    if n == 0:
        return 0.0
    return 1.0 - sum((labels.count(c) / n) ** 2 for c in set(labels))


def exhaustive_best_split(X, y, features):
    """Enumerate every (feature, midpoint) pair; first minimum within 1e-12 wins."""
    n = len(y)
    parent = gini_of(list(y))
    cands = []
    for f in sorted(features):
        vals = sorted(set(row[f] for row in X))
        for a, b in zip(vals, vals[1:]):
            thr = (a + b) / 2
            left = [y[i] for i in range(n) if X[i][f] <= thr]
            right = [y[i] for i in range(n) if X[i][f] > thr]
            w = (len(left) * gini_of(left) + len(right) * gini_of(right)) / n
            cands.append((f, thr, w))
    if not cands:
        return None
    best = min(c[2] for c in cands)
    if not best < parent - 1e-12:
        return None
    for f, thr, w in cands:
        if w <= best + 1e-12:
            return f, thr


# ---------------------------------------------------------------------------
# metrics from full confusion tables

HOSTILE = ("fake", "hate", "offensive", "defamation")


def _confusion(gold, pred, labels):
    table = {(g, p): 0 for g in labels for p in labels}
    for g, p in zip(gold, pred):
        table[(g, p)] += 1
    return table


def _weighted_f1_from_table(table, labels):
    total = sum(table.values())
    acc = 0.0
    for c in labels:
        tp = table[(c, c)]
        fp = sum(table[(g, c)] for g in labels if g != c)
        fn = sum(table[(c, p)] for p in labels if p != c)
        support = tp + fn
        prec = tp / (tp + fp) if tp + fp else 0.0
        rec = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
        acc += support * f1
    return acc / total


def oracle_coarse_f1(gold_sets, pred_sets):
    g = ["hostile" if set(s) & set(HOSTILE) else "none" for s in gold_sets]
    p = ["hostile" if set(s) & set(HOSTILE) else "none" for s in pred_sets]
    labels = ["none", "hostile"]
    return _weighted_f1_from_table(_confusion(g, p, labels), labels)


def oracle_fine_f1(gold_sets, pred_sets):
    per_class, supports = {}, {}
    for c in HOSTILE:
        table = _confusion([c in s for s in gold_sets], [c in s for s in pred_sets], [False, True])
        tp, fp, fn = table[(True, True)], table[(False, True)], table[(True, False)]
        prec = tp / (tp + fp) if tp + fp else 0.0
        rec = tp / (tp + fn) if tp + fn else 0.0
        per_class[c] = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
        supports[c] = tp + fn
    total = sum(supports.values())
    weighted = sum(supports[c] * per_class[c] for c in HOSTILE) / total if total else math.nan
    return per_class, weighted


def all_label_sets():
    sets = [frozenset()]
    for r in range(1, 5):
        sets += [frozenset(c) for c in itertools.combinations(HOSTILE, r)]
    return sets
