"""Versioned binary container for neural checkpoints and baseline models.

Layout (all integers little-endian)::

    magic "LDIF" | u16 version | str kind
    u32 n_meta   | n_meta x (str key, u8 type 'i'/'f'/'s', value)
    u32 n_groups | n_groups x (str name, u32 n_tensors, tensors...)

A tensor is ``str name, u8 dtype ('f' f64 | 'i' i64 | 's' utf-8 strings),
u8 ndim, ndim x u64 dims, data``; float data is row-major ``<f8``. Strings are
``u32 length`` + bytes. Neural checkpoints store parameter groups in model
order followed by a ``log`` group holding the training log.
"""
from __future__ import annotations

import struct

import numpy as np

from .model import LayerGroupedModel, ModelConfig
from .trainer import TrainLog

MAGIC = b"LDIF"
VERSION = 1


class CheckpointError(ValueError):
    pass


def _w_str(out, s):
    b = s.encode("utf-8")
    out += struct.pack("<I", len(b)) + b


def _w_tensor(out, name, arr):
    _w_str(out, name)
    if isinstance(arr, (list, tuple)):
        out += b"s" + struct.pack("<BQ", 1, len(arr))
        for s in arr:
            _w_str(out, s)
        return
    arr = np.asarray(arr)
    if arr.dtype.kind == "f":
        code, data = b"f", arr.astype("<f8")
    elif arr.dtype.kind in "iub":
        code, data = b"i", arr.astype("<i8")
    else:
        raise CheckpointError(f"unsupported dtype {arr.dtype} for tensor {name}")
    out += code + struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}Q", *arr.shape)
    out += np.ascontiguousarray(data).tobytes()


def dumps(kind, meta, groups):
    """Serialize; ``groups`` is a list of (name, {tensor name: array or list of str})."""
    out = bytearray(MAGIC + struct.pack("<H", VERSION))
    _w_str(out, kind)
    out += struct.pack("<I", len(meta))
    for key, value in meta.items():
        _w_str(out, key)
        if isinstance(value, bool) or isinstance(value, (int, np.integer)):
            out += b"i" + struct.pack("<q", int(value))
        elif isinstance(value, (float, np.floating)):
            out += b"f" + struct.pack("<d", float(value))
        else:
            out += b"s"
            _w_str(out, str(value))
    out += struct.pack("<I", len(groups))
    for name, tensors in groups:
        _w_str(out, name)
        out += struct.pack("<I", len(tensors))
        for tname, arr in tensors.items():
            _w_tensor(out, tname, arr)
    return bytes(out)


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.data):
            raise CheckpointError("truncated container")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def str(self):
        (n,) = self.unpack("<I")
        return self.take(n).decode("utf-8")


def loads(data):
    r = _Reader(data)
    if r.take(4) != MAGIC:
        raise CheckpointError("not a model container (bad magic)")
    (version,) = r.unpack("<H")
    if version != VERSION:
        raise CheckpointError(f"unsupported container version {version}")
    kind = r.str()
    meta = {}
    (n_meta,) = r.unpack("<I")
    for _ in range(n_meta):
        key = r.str()
        code = r.take(1)
        if code == b"i":
            meta[key] = r.unpack("<q")[0]
        elif code == b"f":
            meta[key] = r.unpack("<d")[0]
        elif code == b"s":
            meta[key] = r.str()
        else:
            raise CheckpointError(f"bad meta type {code!r}")
    groups = []
    (n_groups,) = r.unpack("<I")
    for _ in range(n_groups):
        name = r.str()
        (n_t,) = r.unpack("<I")
        tensors = {}
        for _ in range(n_t):
            tname = r.str()
            code = r.take(1)
            (ndim,) = r.unpack("<B")
            shape = r.unpack(f"<{ndim}Q")
            if code == b"s":
                tensors[tname] = [r.str() for _ in range(shape[0])]
                continue
            if code not in (b"f", b"i"):
                raise CheckpointError(f"bad tensor dtype {code!r}")
            dtype = "<f8" if code == b"f" else "<i8"
            count = int(np.prod(shape)) if shape else 1
            arr = np.frombuffer(r.take(8 * count), dtype=dtype).reshape(shape)
            tensors[tname] = arr.astype(np.float64 if code == b"f" else np.int64)
        groups.append((name, tensors))
    if r.pos != len(data):
        raise CheckpointError("trailing bytes after container")
    return kind, meta, groups


def write(path, kind, meta, groups):
    with open(path, "wb") as fh:
        fh.write(dumps(kind, meta, groups))


def read(path):
    with open(path, "rb") as fh:
        return loads(fh.read())


# ---------------------------------------------------------------------------
# neural models

_CFG_FIELDS = ("vocab_size", "embed_dim", "hidden_dim", "num_recurrent_layers", "num_classes",
               "multilabel", "seed")


def save_model(path, model, log=None):
    meta = {k: getattr(model.config, k) for k in _CFG_FIELDS}
    groups = [(name, dict(params)) for name, params in model.groups]
    if log is not None:
        groups.append(("log", log.to_arrays()))
    write(path, model.kind, meta, groups)


def model_from_container(kind, meta, groups):
    if kind not in ("lm", "clf"):
        raise CheckpointError(f"container holds a {kind!r}, not a neural model")
    cfg = ModelConfig(**{k: (bool(meta[k]) if k == "multilabel" else int(meta[k])) for k in _CFG_FIELDS})
    log = None
    if groups and groups[-1][0] == "log":
        log = TrainLog.from_arrays(groups[-1][1])
        groups = groups[:-1]
    if len(groups) != cfg.num_recurrent_layers + 2:
        raise CheckpointError("group count does not match the stored config")
    return LayerGroupedModel(cfg, kind, [(n, dict(t)) for n, t in groups]), log


def load_model(path):
    return model_from_container(*read(path))


# ---------------------------------------------------------------------------
# baselines


def save_baseline(path, tfidf, model, scheme_kind):
    from .baselines import LogRegModel, OneVsRestForest, RandomForest

    groups = [("tfidf", {"tokens": tfidf.tokens, "idf": tfidf.idf})]
    meta = {"scheme": scheme_kind, "n_docs": tfidf.n_docs}
    if isinstance(model, LogRegModel):
        kind = "baseline-logreg"
        meta.update(mode=model.mode, l2_lambda=model.l2_lambda)
        groups.append(("logreg", {"weight": model.weight, "bias": model.bias}))
    elif isinstance(model, (RandomForest, OneVsRestForest)):
        kind = "baseline-forest"
        forests = model.forests if isinstance(model, OneVsRestForest) else [model]
        cfg = forests[0].config
        meta.update(ovr=int(isinstance(model, OneVsRestForest)), n_forests=len(forests),
                    n_classes=forests[0].n_classes, n_estimators=cfg.n_estimators,
                    min_samples_split=cfg.min_samples_split, random_state=cfg.random_state)
        for j, forest in enumerate(forests):
            for i, tree in enumerate(forest.trees):
                groups.append((f"tree{j}_{i}", {
                    "feature": tree.feature, "threshold": tree.threshold,
                    "left": tree.left, "right": tree.right, "value": tree.value,
                }))
    else:
        raise CheckpointError(f"cannot serialize baseline of type {type(model).__name__}")
    write(path, kind, meta, groups)


def baseline_from_container(kind, meta, groups):
    """-> (TfidfModel, model, scheme kind)."""
    from .baselines import (DecisionTree, ForestConfig, LogRegModel, OneVsRestForest,
                            RandomForest, TfidfModel)

    if not kind.startswith("baseline-"):
        raise CheckpointError(f"container holds a {kind!r}, not a baseline model")
    tf = groups[0][1]
    tfidf = TfidfModel({t: i for i, t in enumerate(tf["tokens"])}, tf["idf"], int(meta["n_docs"]))
    if kind == "baseline-logreg":
        g = groups[1][1]
        model = LogRegModel(g["weight"], g["bias"], float(meta["l2_lambda"]), str(meta["mode"]))
    elif kind == "baseline-forest":
        cfg = ForestConfig(int(meta["n_estimators"]), int(meta["min_samples_split"]),
                           int(meta["random_state"]))
        forests = []
        trees = groups[1:]
        for j in range(int(meta["n_forests"])):
            chunk = trees[j * cfg.n_estimators:(j + 1) * cfg.n_estimators]
            forests.append(RandomForest(
                [DecisionTree(t["feature"].astype(np.intp), t["threshold"],
                              t["left"].astype(np.intp), t["right"].astype(np.intp), t["value"])
                 for _, t in chunk],
                int(meta["n_classes"]), cfg))
        model = OneVsRestForest(forests) if meta["ovr"] else forests[0]
    else:
        raise CheckpointError(f"unknown baseline kind {kind!r}")
    return tfidf, model, str(meta["scheme"])
