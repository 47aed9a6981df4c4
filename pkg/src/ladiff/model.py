"""Layer-grouped recurrent language model and classifier, in numpy.

Parameter groups, in order::

    0        embedding (tied to the LM output projection)
    1..L     recurrent layers
    L+1      head (LM output bias, or the classifier's linear layer)

Each recurrent layer is a minimal gated unit: one forget gate ``f`` and a
candidate state computed from the gated previous state::

    f  = sigmoid(x W_f + h U_f + b_f)
    c  = tanh(x W_h + (f * h) U_h + b_h)
    h' = (1 - f) * h + f * c

The last recurrent layer outputs ``embed_dim`` features so its states can be
scored against the tied embedding matrix.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

RNN_NAMES = ("W_f", "U_f", "b_f", "W_h", "U_h", "b_h")


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    embed_dim: int = 64
    hidden_dim: int = 128
    num_recurrent_layers: int = 2
    num_classes: int = 0
    multilabel: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.vocab_size < 3:
            raise ModelError("vocab_size must be >= 3")
        if min(self.embed_dim, self.hidden_dim, self.num_recurrent_layers) < 1:
            raise ModelError("embed_dim, hidden_dim and num_recurrent_layers must be >= 1")

    def layer_dims(self):
        dims = []
        for i in range(self.num_recurrent_layers):
            d_in = self.embed_dim if i == 0 else self.hidden_dim
            d_out = self.embed_dim if i == self.num_recurrent_layers - 1 else self.hidden_dim
            dims.append((d_in, d_out))
        return dims

    def to_dict(self):
        return asdict(self)


class LayerGroupedModel:
    """Ordered parameter groups; ``kind`` is 'lm' or 'clf'."""

    def __init__(self, config, kind, groups):
        self.config = config
        self.kind = kind
        self.groups = groups  # list of (name, {tensor name: ndarray})

    @property
    def num_groups(self):
        return len(self.groups)

    @property
    def embedding(self):
        return self.groups[0][1]["weight"]

    @property
    def output_projection(self):
        """The LM output weight: the very same array as the embedding."""
        return self.groups[0][1]["weight"]

    @property
    def head(self):
        return self.groups[-1][1]

    def rnn_layers(self):
        return [params for _, params in self.groups[1:-1]]

    def copy(self):
        return LayerGroupedModel(
            self.config, self.kind,
            [(name, {k: v.copy() for k, v in params.items()}) for name, params in self.groups],
        )

    def snapshot(self):
        return [{k: v.copy() for k, v in params.items()} for _, params in self.groups]


def _uniform(rng, shape):
    return rng.uniform(-0.1, 0.1, size=shape)


def _init_rnn(rng, d_in, d_out):
    return {
        "W_f": _uniform(rng, (d_in, d_out)),
        "U_f": _uniform(rng, (d_out, d_out)),
        "b_f": _uniform(rng, (d_out,)),
        "W_h": _uniform(rng, (d_in, d_out)),
        "U_h": _uniform(rng, (d_out, d_out)),
        "b_h": _uniform(rng, (d_out,)),
    }


def _clf_head(rng, cfg):
    if cfg.num_classes < 1:
        raise ModelError("classifier needs num_classes >= 1")
    return {
        "weight": _uniform(rng, (3 * cfg.embed_dim, cfg.num_classes)),
        "bias": _uniform(rng, (cfg.num_classes,)),
    }


def init_model(cfg, kind="lm"):
    """Fresh model with every parameter drawn uniformly from [-0.1, 0.1]."""
    if kind not in ("lm", "clf"):
        raise ModelError(f"unknown model kind {kind!r}")
    rng = np.random.default_rng(cfg.seed)
    groups = [("embedding", {"weight": _uniform(rng, (cfg.vocab_size, cfg.embed_dim))})]
    for i, (d_in, d_out) in enumerate(cfg.layer_dims()):
        groups.append((f"rnn{i}", _init_rnn(rng, d_in, d_out)))
    if kind == "lm":
        groups.append(("head", {"bias": _uniform(rng, (cfg.vocab_size,))}))
    else:
        groups.append(("head", _clf_head(rng, cfg)))
    return LayerGroupedModel(cfg, kind, groups)


def init_classifier_from_lm(lm, num_classes, multilabel=False, seed=None):
    """Copy embedding and recurrent groups from an LM and attach a fresh head."""
    if lm.kind != "lm":
        raise ModelError("init_classifier_from_lm expects a language model")
    seed = lm.config.seed if seed is None else seed
    cfg = ModelConfig(lm.config.vocab_size, lm.config.embed_dim, lm.config.hidden_dim,
                      lm.config.num_recurrent_layers, num_classes, multilabel, seed)
    if lm.embedding.shape != (cfg.vocab_size, cfg.embed_dim):
        raise ModelError("LM embedding shape does not match its config")
    groups = [(name, {k: v.copy() for k, v in params.items()}) for name, params in lm.groups[:-1]]
    # a separate stream so the head does not repeat the LM's first draws
    rng = np.random.default_rng([seed, 1])
    groups.append(("head", _clf_head(rng, cfg)))
    return LayerGroupedModel(cfg, "clf", groups)


# ---------------------------------------------------------------------------
# forward


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass
class LayerCache:
    x: np.ndarray       # (B, T, d_in) layer input
    h_prev: np.ndarray  # (B, T, H) state entering each step
    f: np.ndarray
    c: np.ndarray
    h: np.ndarray       # (B, T, H) outputs


@dataclass
class ForwardState:
    kind: str
    ids: np.ndarray
    layers: list
    probs: np.ndarray
    lengths: np.ndarray | None = None
    pooled: np.ndarray | None = None
    argmax: np.ndarray | None = None
    signature: tuple = ()


def _signature(model):
    return (model.kind,) + tuple(
        (name, tuple((k, v.shape) for k, v in params.items())) for name, params in model.groups
    )


def _rnn_forward(p, x):
    B, T, _ = x.shape
    H = p["b_f"].shape[0]
    xf = x @ p["W_f"] + p["b_f"]
    xh = x @ p["W_h"] + p["b_h"]
    h_prev_all = np.empty((B, T, H))
    f_all = np.empty((B, T, H))
    c_all = np.empty((B, T, H))
    h_all = np.empty((B, T, H))
    h = np.zeros((B, H))
    for t in range(T):
        f = _sigmoid(xf[:, t] + h @ p["U_f"])
        c = np.tanh(xh[:, t] + (f * h) @ p["U_h"])
        h_prev_all[:, t] = h
        h = (1.0 - f) * h + f * c
        f_all[:, t] = f
        c_all[:, t] = c
        h_all[:, t] = h
    return LayerCache(x, h_prev_all, f_all, c_all, h_all)


def _encode(model, ids):
    ids = np.asarray(ids)
    if ids.ndim != 2:
        raise ModelError("id batch must be 2-D (batch, time)")
    if ids.size and (ids.min() < 0 or ids.max() >= model.config.vocab_size):
        raise ModelError("token id out of range for the vocabulary")
    x = model.embedding[ids]
    layers = []
    for p in model.rnn_layers():
        cache = _rnn_forward(p, x)
        layers.append(cache)
        x = cache.h
    return ids, layers


def lm_forward(model, ids):
    """Next-token distributions, shape (B, T, V)."""
    if model.kind != "lm":
        raise ModelError("lm_forward needs a language model")
    ids, layers = _encode(model, ids)
    logits = layers[-1].h @ model.output_projection.T + model.head["bias"]
    probs = _softmax(logits)
    return probs, ForwardState("lm", ids, layers, probs, signature=_signature(model))


def lm_loss(probs, targets):
    targets = np.asarray(targets)
    picked = np.take_along_axis(probs, targets[..., None], axis=-1)[..., 0]
    return float(-np.log(np.maximum(picked, 1e-300)).mean())


def clf_forward(model, ids, lengths=None):
    """Class probabilities (B, C): softmax, or per-class sigmoid when multilabel.

    ``lengths`` marks right-padded rows; pooling ignores positions past each length.
    """
    if model.kind != "clf":
        raise ModelError("clf_forward needs a classifier")
    ids = np.asarray(ids)
    if ids.ndim != 2 or ids.shape[1] == 0:
        raise ModelError("classifier input must be a non-empty (batch, time) array")
    B, T = ids.shape
    lengths = np.full(B, T) if lengths is None else np.asarray(lengths)
    if lengths.min() < 1 or lengths.max() > T:
        raise ModelError("sequence lengths must lie in [1, T]")
    ids, layers = _encode(model, ids)
    h = layers[-1].h
    mask = (np.arange(T)[None, :] < lengths[:, None])[..., None]
    mean = (h * mask).sum(axis=1) / lengths[:, None]
    masked = np.where(mask, h, -np.inf)
    argmax = masked.argmax(axis=1)  # first maximal step, (B, E)
    mx = np.take_along_axis(h, argmax[:, None, :], axis=1)[:, 0]
    last = h[np.arange(B), lengths - 1]
    pooled = np.concatenate([mean, mx, last], axis=1)
    scores = pooled @ model.head["weight"] + model.head["bias"]
    probs = _sigmoid(scores) if model.config.multilabel else _softmax(scores)
    state = ForwardState("clf", ids, layers, probs, lengths, pooled, argmax, _signature(model))
    return probs, state


def clf_loss(probs, targets, multilabel):
    """Cross-entropy (targets = class indices) or mean binary cross-entropy (multi-hot)."""
    targets = np.asarray(targets)
    if multilabel:
        p = np.clip(probs, 1e-300, None)
        q = np.clip(1.0 - probs, 1e-300, None)
        return float(-(targets * np.log(p) + (1 - targets) * np.log(q)).mean())
    picked = probs[np.arange(len(targets)), targets]
    return float(-np.log(np.maximum(picked, 1e-300)).mean())


# ---------------------------------------------------------------------------
# backward


def _rnn_backward(p, cache, dh_out, need_params, need_input):
    B, T, H = cache.h.shape
    grads = {k: np.zeros_like(v) for k, v in p.items()} if need_params else None
    da_f_all = np.empty((B, T, H))
    da_c_all = np.empty((B, T, H))
    dh_next = np.zeros((B, H))
    U_f, U_h = p["U_f"], p["U_h"]
    for t in range(T - 1, -1, -1):
        dh = dh_out[:, t] + dh_next
        f, c, hp = cache.f[:, t], cache.c[:, t], cache.h_prev[:, t]
        dc = dh * f
        df = dh * (c - hp)
        dhp = dh * (1.0 - f)
        da_c = dc * (1.0 - c * c)
        dr = da_c @ U_h.T
        df = df + dr * hp
        dhp = dhp + dr * f
        da_f = df * f * (1.0 - f)
        dhp = dhp + da_f @ U_f.T
        da_f_all[:, t] = da_f
        da_c_all[:, t] = da_c
        dh_next = dhp
    if need_params:
        x2 = cache.x.reshape(B * T, -1)
        hp2 = cache.h_prev.reshape(B * T, H)
        r2 = (cache.f * cache.h_prev).reshape(B * T, H)
        af = da_f_all.reshape(B * T, H)
        ac = da_c_all.reshape(B * T, H)
        grads["W_f"] = x2.T @ af
        grads["U_f"] = hp2.T @ af
        grads["b_f"] = af.sum(axis=0)
        grads["W_h"] = x2.T @ ac
        grads["U_h"] = r2.T @ ac
        grads["b_h"] = ac.sum(axis=0)
    dx = None
    if need_input:
        dx = da_f_all @ p["W_f"].T + da_c_all @ p["W_h"].T
    return grads, dx


def backward(model, state, loss_kind, targets, frozen):
    """Exact gradients of the mean loss for every unfrozen group.

    ``frozen`` is a sequence of booleans, one per group. Returns
    ``{group index: {tensor name: gradient}}`` with frozen groups absent.
    """
    if state.signature != _signature(model) or state.kind != model.kind:
        raise ModelError("forward state does not match this model")
    if loss_kind != model.kind:
        raise ModelError(f"loss kind {loss_kind!r} does not match model kind {model.kind!r}")
    frozen = list(frozen)
    if len(frozen) != model.num_groups:
        raise ModelError("freeze state length differs from the number of groups")
    if all(frozen):
        return {}
    targets = np.asarray(targets)
    head_idx = model.num_groups - 1
    lowest = min(i for i, fz in enumerate(frozen) if not fz)
    grads = {}
    emb_grad = None
    top = state.layers[-1].h
    B, T, E = top.shape

    if model.kind == "lm":
        dlogits = state.probs.copy()
        np.subtract.at(dlogits, (np.arange(B)[:, None], np.arange(T)[None, :], targets), 1.0)
        dlogits /= B * T
        flat = dlogits.reshape(B * T, -1)
        if not frozen[head_idx]:
            grads[head_idx] = {"bias": flat.sum(axis=0)}
        if not frozen[0]:
            emb_grad = flat.T @ top.reshape(B * T, E)
        dh = dlogits @ model.output_projection
    else:
        if model.config.multilabel:
            dscores = (state.probs - targets) / targets.size
        else:
            dscores = state.probs.copy()
            dscores[np.arange(B), targets] -= 1.0
            dscores /= B
        if not frozen[head_idx]:
            grads[head_idx] = {"weight": state.pooled.T @ dscores, "bias": dscores.sum(axis=0)}
        dpool = dscores @ model.head["weight"].T
        dmean, dmax, dlast = dpool[:, :E], dpool[:, E:2 * E], dpool[:, 2 * E:]
        lengths = state.lengths
        mask = (np.arange(T)[None, :] < lengths[:, None])[..., None]
        dh = np.where(mask, (dmean / lengths[:, None])[:, None, :], 0.0)
        rows = np.arange(B)[:, None]
        cols = np.arange(E)[None, :]
        dh[rows, state.argmax, cols] += dmax
        dh[np.arange(B), lengths - 1] += dlast

    layers = model.rnn_layers()
    for li in range(len(layers) - 1, -1, -1):
        gi = li + 1
        if gi <= lowest - 1:
            break
        need_params = not frozen[gi]
        need_input = lowest < gi
        g, dx = _rnn_backward(layers[li], state.layers[li], dh, need_params, need_input)
        if need_params:
            grads[gi] = g
        if dx is None:
            break
        dh = dx

    if not frozen[0]:
        if emb_grad is None:
            emb_grad = np.zeros_like(model.embedding)
        np.add.at(emb_grad, state.ids, dh)
        grads[0] = {"weight": emb_grad}
    return dict(sorted(grads.items()))
