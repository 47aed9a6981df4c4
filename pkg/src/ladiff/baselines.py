"""Classical baselines: TF-IDF features, logistic regression and a CART random forest."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import kernels

IMPURITY_TOL = 1e-12


class BaselineError(ValueError):
    pass


# ---------------------------------------------------------------------------
# TF-IDF


class TfidfModel:
    """Raw term counts times smoothed idf, rows L2-normalized."""

    def __init__(self, vocabulary, idf, n_docs):
        self.vocabulary = dict(vocabulary)
        self.idf = np.asarray(idf, dtype=np.float64)
        self.n_docs = n_docs

    @property
    def tokens(self):
        return sorted(self.vocabulary, key=self.vocabulary.get)

    def transform(self, doc):
        row = np.zeros(len(self.idf))
        for tok in doc:
            j = self.vocabulary.get(tok)
            if j is not None:
                row[j] += 1.0
        row *= self.idf
        norm = np.sqrt(row @ row)
        if norm > 0:
            row /= norm
        return row

    def transform_many(self, docs):
        if not docs:
            return np.zeros((0, len(self.idf)))
        return np.vstack([self.transform(d) for d in docs])


def fit_tfidf(docs):
    if not docs:
        raise BaselineError("cannot fit TF-IDF on an empty corpus")
    df = {}
    for doc in docs:
        for tok in set(doc):
            df[tok] = df.get(tok, 0) + 1
    tokens = sorted(df)
    n = len(docs)
    idf = np.array([math.log((1 + n) / (1 + df[t])) + 1 for t in tokens])
    return TfidfModel({t: i for i, t in enumerate(tokens)}, idf, n)


# ---------------------------------------------------------------------------
# logistic regression


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


@dataclass
class LogRegModel:
    weight: np.ndarray  # (classes, features)
    bias: np.ndarray
    l2_lambda: float
    mode: str  # "softmax" or "ovr"

    def scores(self, X):
        z = np.asarray(X) @ self.weight.T + self.bias
        if self.mode == "ovr":
            return _sigmoid(z)
        z = z - z.max(axis=1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=1, keepdims=True)

    def predict(self, X):
        s = self.scores(X)
        if self.mode == "ovr":
            return (s > 0.5).astype(np.int64)
        return s.argmax(axis=1)


def _as_targets(y, mode):
    y = np.asarray(y)
    if mode == "softmax" and y.ndim == 1:
        k = int(y.max()) + 1 if y.size else 0
        onehot = np.zeros((len(y), max(k, 2)))
        onehot[np.arange(len(y)), y] = 1.0
        return onehot
    return y.astype(np.float64)


def logreg_loss(model, X, Y):
    Y = _as_targets(Y, model.mode)
    s = np.clip(model.scores(X), 1e-300, 1.0)
    if model.mode == "ovr":
        q = np.clip(1.0 - model.scores(X), 1e-300, 1.0)
        data = -(Y * np.log(s) + (1 - Y) * np.log(q)).sum(axis=1).mean()
    else:
        data = -(Y * np.log(s)).sum(axis=1).mean()
    return float(data + 0.5 * model.l2_lambda * np.sum(model.weight ** 2))


def train_logreg(X, y, l2_lambda=1e-3, epochs=500, lr=0.5, seed=0, mode="softmax"):
    """Full-batch gradient descent on L2-regularized cross-entropy.

    ``mode="softmax"`` takes class indices or one-hot rows; ``mode="ovr"`` takes
    multi-hot rows and fits one independent sigmoid model per column.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or len(X) == 0:
        raise BaselineError("logistic regression needs a non-empty 2-D feature matrix")
    if mode not in ("softmax", "ovr"):
        raise BaselineError(f"unknown logistic regression mode {mode!r}")
    Y = _as_targets(y, mode)
    if len(Y) != len(X):
        raise BaselineError("features and targets have different row counts")
    rng = np.random.default_rng(seed)
    n, d = X.shape
    k = Y.shape[1]
    model = LogRegModel(rng.uniform(-0.01, 0.01, size=(k, d)), np.zeros(k), l2_lambda, mode)
    for _ in range(epochs):
        err = (model.scores(X) - Y) / n
        model.weight -= lr * (err.T @ X + l2_lambda * model.weight)
        model.bias -= lr * err.sum(axis=0)
    return model


# ---------------------------------------------------------------------------
# trees


def gini(counts):
    counts = np.asarray(counts, dtype=np.float64)
    total = counts.sum()
    if total <= 0:
        raise BaselineError("gini of an empty node is undefined")
    p = counts / total
    return float(1.0 - np.sum(p * p))


def best_split(X, y, features=None, n_classes=None, rows=None):
    """Best (feature, threshold) by weighted child Gini, or None.

    Thresholds are midpoints of sorted distinct values; ties go to the lower
    feature index, then the lower threshold. None when no split lowers impurity.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.intp)
    rows = np.arange(len(y), dtype=np.intp) if rows is None else np.ascontiguousarray(rows, dtype=np.intp)
    if n_classes is None:
        n_classes = int(y.max()) + 1
    features = np.arange(X.shape[1]) if features is None else np.asarray(features)
    features = np.ascontiguousarray(np.sort(features), dtype=np.intp)
    return _best_split(kernels.best_split_node, X, y, rows, features, n_classes)


def _best_split(kernel, X, y, rows, features, n_classes):
    counts = np.bincount(y[rows], minlength=n_classes)
    if np.count_nonzero(counts) < 2:
        return None
    f, thr, score = kernel(X, rows, y, features, n_classes)
    if f < 0 or not score < gini(counts) - IMPURITY_TOL:
        return None
    return int(f), float(thr)


@dataclass(frozen=True)
class ForestConfig:
    n_estimators: int = 1000
    min_samples_split: int = 15
    random_state: int = 42
    bootstrap: bool = True
    n_jobs: int = 1

    def __post_init__(self):
        if self.n_estimators < 1:
            raise BaselineError("n_estimators must be >= 1")
        if self.min_samples_split < 2:
            raise BaselineError("min_samples_split must be >= 2")

    @staticmethod
    def max_features(n_features):
        return max(1, math.isqrt(n_features))


@dataclass
class DecisionTree:
    feature: np.ndarray    # -1 at leaves
    threshold: np.ndarray
    left: np.ndarray       # -1 at leaves
    right: np.ndarray
    value: np.ndarray      # (nodes, classes) training class counts

    @property
    def n_nodes(self):
        return len(self.feature)

    def apply(self, X, kernel=None):
        apply = (kernel or kernels).apply_tree
        return apply(np.ascontiguousarray(X, dtype=np.float64), self.feature, self.threshold,
                     self.left, self.right)

    def predict(self, X, kernel=None):
        # argmax returns the lowest class index on ties
        return self.value[self.apply(X, kernel)].argmax(axis=1)


def build_tree(X, y, n_classes, rows, rng, min_samples_split, max_features, kernel=None):
    kernel = kernel or kernels
    n_features = X.shape[1]
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node(node_rows):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(np.bincount(y[node_rows], minlength=n_classes))
        return len(feature) - 1

    stack = [(new_node(rows), rows)]
    while stack:
        node, node_rows = stack.pop()
        if len(node_rows) < min_samples_split:
            continue
        candidates = np.sort(rng.choice(n_features, size=max_features, replace=False))
        split = _best_split(kernel.best_split_node, X, y, node_rows,
                            np.ascontiguousarray(candidates, dtype=np.intp), n_classes)
        if split is None:
            continue
        f, thr = split
        mask = X[node_rows, f] <= thr
        lrows, rrows = node_rows[mask], node_rows[~mask]
        feature[node], threshold[node] = f, thr
        left[node] = new_node(lrows)
        right[node] = new_node(rrows)
        # right pushed first so the left subtree is expanded first
        stack.append((right[node], rrows))
        stack.append((left[node], lrows))
    return DecisionTree(
        np.array(feature, dtype=np.intp), np.array(threshold, dtype=np.float64),
        np.array(left, dtype=np.intp), np.array(right, dtype=np.intp),
        np.array(value, dtype=np.float64).reshape(-1, n_classes),
    )


@dataclass
class RandomForest:
    trees: list
    n_classes: int
    config: ForestConfig

    def votes(self, X, kernel=None):
        X = np.ascontiguousarray(X, dtype=np.float64)
        out = np.zeros((len(X), self.n_classes), dtype=np.int64)
        rows = np.arange(len(X))
        for tree in self.trees:
            out[rows, tree.predict(X, kernel)] += 1
        return out

    def predict(self, X, kernel=None):
        return self.votes(X, kernel).argmax(axis=1)


def _fit_one(args):
    X, y, n_classes, cfg, i, kernel = args
    rng = np.random.default_rng(cfg.random_state + i)
    n = len(y)
    rows = rng.integers(0, n, size=n) if cfg.bootstrap else np.arange(n)
    rows = np.ascontiguousarray(rows, dtype=np.intp)
    return build_tree(X, y, n_classes, rows, rng, cfg.min_samples_split,
                      cfg.max_features(X.shape[1]), kernel)


def train_forest(X, y, cfg=None, n_classes=None, kernel=None):
    """Bagged CART trees; tree i draws everything from ``random_state + i``."""
    cfg = cfg or ForestConfig()
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.intp)
    if X.ndim != 2 or len(X) == 0 or len(X) != len(y):
        raise BaselineError("forest needs a non-empty feature matrix aligned with labels")
    n_classes = n_classes or max(int(y.max()) + 1, 2)
    jobs = [(X, y, n_classes, cfg, i, kernel) for i in range(cfg.n_estimators)]
    if cfg.n_jobs > 1:
        with ThreadPoolExecutor(cfg.n_jobs) as pool:
            trees = list(pool.map(_fit_one, jobs))
    else:
        trees = [_fit_one(job) for job in jobs]
    return RandomForest(trees, n_classes, cfg)


@dataclass
class OneVsRestForest:
    """One binary forest per label column; predicts a multi-hot row."""

    forests: list

    def votes(self, X):
        return np.stack([f.votes(X)[:, 1] for f in self.forests], axis=1)

    def predict(self, X):
        return np.stack([f.predict(X) for f in self.forests], axis=1)


def train_forest_ovr(X, Y, cfg=None):
    Y = np.asarray(Y)
    return OneVsRestForest([train_forest(X, Y[:, j].astype(np.intp), cfg, n_classes=2)
                            for j in range(Y.shape[1])])
