"""Compare the compiled and numpy tree kernels.

    python benchmarks/bench_kernels.py [--rows 1500] [--features 300] [--trees 20]

Times a single root split search, tree application and a small forest fit on
both backends, and checks that the two produce the same trees.
"""
import argparse
import time

import numpy as np

from ladiff import kernels
from ladiff.baselines import ForestConfig, train_forest


def _best_of(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        result = fn()
        best = min(best, time.perf_counter() - t0)
    return best, result


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=1500)
    ap.add_argument("--features", type=int, default=300)
    ap.add_argument("--trees", type=int, default=20)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    try:
        backends = {"cython": kernels.get_backend("cython")}
    except ImportError:
        backends = {}
        print("compiled kernels not built; timing the numpy backend only")
    backends["python"] = kernels.get_backend("python")

    rng = np.random.default_rng(0)
    X = rng.normal(size=(args.rows, args.features))
    y = (X[:, :3].sum(axis=1) > 0).astype(np.intp)
    rows = np.arange(args.rows, dtype=np.intp)
    feats = np.arange(args.features, dtype=np.intp)
    cfg = ForestConfig(n_estimators=args.trees)

    results = {}
    print(f"{'backend':8} {'root split':>12} {'forest fit':>12} {'apply':>12}")
    for name, kern in backends.items():
        t_split, split = _best_of(lambda: kern.best_split_node(X, rows, y, feats, 2), args.repeat)
        t_fit, forest = _best_of(lambda: train_forest(X, y, cfg, kernel=kern), 1)
        t_apply, _ = _best_of(lambda: [t.apply(X, kern) for t in forest.trees], args.repeat)
        results[name] = (split, forest)
        print(f"{name:8} {t_split * 1e3:10.2f}ms {t_fit:11.3f}s {t_apply * 1e3:10.2f}ms")

    if len(results) == 2:
        (sa, fa), (sb, fb) = results["cython"], results["python"]
        same = sa == sb and all(np.array_equal(a.threshold, b.threshold)
                                and np.array_equal(a.feature, b.feature)
                                for a, b in zip(fa.trees, fb.trees))
        print(f"identical trees across backends: {same}")


if __name__ == "__main__":
    main()
