"""Layer-differentiated training: gradual unfreezing on a fixed batch cadence.

At batch ``t`` only the last ``min(initial + t // stage_length, num_groups)``
parameter groups receive updates, so the head trains longest and the
embedding shortest. Each group gets a slanted-triangular learning rate
divided by ``discriminative_factor`` once per level below the head.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .model import backward, clf_forward, clf_loss, lm_forward, lm_loss
from .tokenizer import PAD_ID


class TrainError(ValueError):
    pass


# ---------------------------------------------------------------------------
# schedules


@dataclass(frozen=True)
class StageSchedule:
    num_groups: int
    stage_length_batches: int = 100
    # groups trainable at batch 0; 0 gives a fully frozen first stage
    initial_unfrozen: int = 1

    def __post_init__(self):
        if self.num_groups < 1 or self.stage_length_batches < 1:
            raise TrainError("num_groups and stage_length_batches must be >= 1")
        if not 0 <= self.initial_unfrozen <= self.num_groups:
            raise TrainError("initial_unfrozen must lie in [0, num_groups]")


def unfrozen_groups(schedule, t):
    if t < 0:
        raise TrainError("batch index must be >= 0")
    return min(schedule.initial_unfrozen + t // schedule.stage_length_batches, schedule.num_groups)


def frozen_flags(schedule, t):
    k = unfrozen_groups(schedule, t)
    return [g < schedule.num_groups - k for g in range(schedule.num_groups)]


def predicted_unfreeze_events(schedule, total_batches):
    return [t for t in range(1, total_batches)
            if unfrozen_groups(schedule, t) > unfrozen_groups(schedule, t - 1)]


def unfreeze_batch(schedule, group):
    """First batch at which ``group`` trains, or None if it never does."""
    depth = schedule.num_groups - group  # 1 for the head
    if depth <= schedule.initial_unfrozen:
        return 0
    return (depth - schedule.initial_unfrozen) * schedule.stage_length_batches


@dataclass(frozen=True)
class LRPolicy:
    base_lr: float = 4e-3
    discriminative_factor: float = 2.6
    cut_frac: float = 0.1
    ratio: float = 32.0
    total_batches: int = 1000

    def __post_init__(self):
        if not 0 < self.cut_frac < 1:
            raise TrainError("cut_frac must lie in (0, 1)")
        if self.ratio <= 1:
            raise TrainError("ratio must be > 1")
        if self.base_lr <= 0 or self.discriminative_factor <= 0:
            raise TrainError("base_lr and discriminative_factor must be positive")
        if self.total_batches < 0:
            raise TrainError("total_batches must be >= 0")

    @property
    def cut(self):
        return math.floor(self.cut_frac * self.total_batches)


def lr_at(policy, t, depth=0):
    """Slanted-triangular rate at batch t for a group ``depth`` levels below the head."""
    total, cut = policy.total_batches, policy.cut
    if not 0 <= t < total:
        raise TrainError(f"batch index {t} outside [0, {total})")
    if t < cut:
        p = t / cut
    else:
        p = 1 - (t - cut) / (total - cut)
    rate = policy.base_lr * (1 + p * (policy.ratio - 1)) / policy.ratio
    return rate / policy.discriminative_factor ** depth


# ---------------------------------------------------------------------------
# optimizer


BETA1, BETA2, EPS = 0.9, 0.99, 1e-8


def optimizer_step(params, grads, lr, state):
    """Adam update of ``params`` in place; ``state`` maps name -> [m, v, step]."""
    for name, g in grads.items():
        p = params[name]
        if p.shape != g.shape:
            raise TrainError(f"gradient shape {g.shape} != parameter shape {p.shape} for {name}")
        entry = state.get(name)
        if entry is None:
            entry = state[name] = [np.zeros_like(p), np.zeros_like(p), 0]
        m, v, _ = entry
        entry[2] += 1
        step = entry[2]
        m *= BETA1
        m += (1 - BETA1) * g
        v *= BETA2
        v += (1 - BETA2) * g * g
        m_hat = m / (1 - BETA1 ** step)
        v_hat = v / (1 - BETA2 ** step)
        p -= lr * m_hat / (np.sqrt(v_hat) + EPS)
    return params


class Adam:
    """Per-group Adam state; ``reset`` zeroes a group's moments."""

    def __init__(self, num_groups):
        self.state = [dict() for _ in range(num_groups)]

    def reset(self, group):
        self.state[group] = {}

    def step(self, model, grads, lrs):
        for g, group_grads in grads.items():
            optimizer_step(model.groups[g][1], group_grads, lrs[g], self.state[g])


# ---------------------------------------------------------------------------
# logs


@dataclass
class TrainRecord:
    batch: int
    stage: int
    unfrozen_groups: int
    train_loss: float
    val_loss: float | None = None


@dataclass
class TrainLog:
    records: list = field(default_factory=list)
    unfreeze_events: list = field(default_factory=list)

    HEADER = ("batch", "stage", "unfrozen_groups", "train_loss", "val_loss")

    def __len__(self):
        return len(self.records)

    @property
    def train_losses(self):
        return np.array([r.train_loss for r in self.records])

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.HEADER)
        for r in self.records:
            val = "" if r.val_loss is None else repr(r.val_loss)
            writer.writerow([r.batch, r.stage, r.unfrozen_groups, repr(r.train_loss), val])
        return buf.getvalue()

    def save_csv(self, path):
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(self.to_csv())

    def to_arrays(self):
        n = len(self.records)
        ints = np.array([[r.batch, r.stage, r.unfrozen_groups] for r in self.records],
                        dtype=np.int64).reshape(n, 3)
        floats = np.array([[r.train_loss, np.nan if r.val_loss is None else r.val_loss]
                           for r in self.records], dtype=np.float64).reshape(n, 2)
        return {"ints": ints, "losses": floats,
                "unfreeze_events": np.array(self.unfreeze_events, dtype=np.int64)}

    @classmethod
    def from_arrays(cls, arrays):
        records = [
            TrainRecord(int(b), int(s), int(u), float(tl), None if math.isnan(vl) else float(vl))
            for (b, s, u), (tl, vl) in zip(arrays["ints"], arrays["losses"])
        ]
        return cls(records, [int(e) for e in arrays["unfreeze_events"]])


def unfreeze_spikes(log, window=10):
    """(event, mean loss over ``window`` batches before, mean loss over ``window`` after)."""
    losses = log.train_losses
    out = []
    for e in log.unfreeze_events:
        if e - window < 0 or e + window > len(losses):
            continue
        out.append((e, float(losses[e - window:e].mean()), float(losses[e:e + window].mean())))
    return out


# ---------------------------------------------------------------------------
# batching


def _as_ids(seq):
    ids = getattr(seq, "ids", seq)
    return list(ids)


def lm_windows(corpus, seq_len):
    """Cut the concatenated corpus into (input, target) windows of ``seq_len`` steps."""
    stream = np.array([i for doc in corpus for i in _as_ids(doc)], dtype=np.int64)
    n = (len(stream) - 1) // seq_len
    if n < 1:
        raise TrainError(f"corpus too short for seq_len={seq_len}")
    idx = np.arange(n)[:, None] * seq_len + np.arange(seq_len + 1)[None, :]
    win = stream[idx]
    return win[:, :-1], win[:, 1:]


def _epoch_batches(n_items, batch_size, rng):
    """Endless stream of index batches, reshuffled every epoch."""
    batch_size = min(batch_size, n_items)
    while True:
        order = rng.permutation(n_items)
        for start in range(0, n_items - batch_size + 1, batch_size):
            yield order[start:start + batch_size]


def pad_batch(seqs, max_len=None):
    seqs = [s[:max_len] if max_len else s for s in seqs]
    if any(len(s) == 0 for s in seqs):
        raise TrainError("empty sequence in classifier batch")
    T = max(len(s) for s in seqs)
    ids = np.full((len(seqs), T), PAD_ID, dtype=np.int64)
    for i, s in enumerate(seqs):
        ids[i, :len(s)] = s
    return ids, np.array([len(s) for s in seqs])


# ---------------------------------------------------------------------------
# loops


def _check_schedule(model, schedule):
    if schedule.num_groups != model.num_groups:
        raise TrainError(f"schedule has {schedule.num_groups} groups, model has {model.num_groups}")


def _run(model, schedule, policy, rng_batches, step_loss, val_loss_fn, callback):
    log = TrainLog()
    adam = Adam(model.num_groups)
    n = model.num_groups
    prev = None
    k0 = unfrozen_groups(schedule, 0)
    L = schedule.stage_length_batches
    for t in range(policy.total_batches):
        k = unfrozen_groups(schedule, t)
        if prev is not None and k > prev:
            log.unfreeze_events.append(t)
            for g in range(n - k, n - prev):
                adam.reset(g)
        prev = k
        frozen = [g < n - k for g in range(n)]
        loss, grads = step_loss(next(rng_batches), frozen)
        lrs = {g: lr_at(policy, t, n - 1 - g) for g in grads}
        adam.step(model, grads, lrs)
        val = None
        if val_loss_fn is not None and (t % L == L - 1 or t == policy.total_batches - 1):
            val = val_loss_fn()
        log.records.append(TrainRecord(t, k - k0, k, loss, val))
        if callback is not None:
            callback(t, model)
    return log


def train_lm(model, corpus, schedule, policy, seed=0, batch_size=16, seq_len=20,
             validation=None, callback=None):
    """Next-token training with gradual unfreezing; returns (model, TrainLog).

    ``callback(t, model)`` runs after every batch update.
    """
    if model.kind != "lm":
        raise TrainError("train_lm needs a language model")
    if not corpus:
        raise TrainError("empty corpus")
    _check_schedule(model, schedule)
    inputs, targets = lm_windows(corpus, seq_len)
    rng = np.random.default_rng(seed)
    batches = _epoch_batches(len(inputs), batch_size, rng)

    def step_loss(idx, frozen):
        probs, state = lm_forward(model, inputs[idx])
        return lm_loss(probs, targets[idx]), backward(model, state, "lm", targets[idx], frozen)

    val_fn = None
    if validation:
        v_in, v_tg = lm_windows(validation, seq_len)
        val_fn = lambda: lm_eval_loss(model, v_in, v_tg, batch_size)  # noqa: E731

    log = _run(model, schedule, policy, batches, step_loss, val_fn, callback)
    return model, log


def lm_eval_loss(model, inputs, targets, batch_size=64):
    total, count = 0.0, 0
    for s in range(0, len(inputs), batch_size):
        probs, _ = lm_forward(model, inputs[s:s + batch_size])
        n = probs.shape[0] * probs.shape[1]
        total += lm_loss(probs, targets[s:s + batch_size]) * n
        count += n
    return total / count


def _clf_targets(model, targets):
    targets = np.asarray(targets, dtype=np.float64)
    if targets.ndim != 2 or targets.shape[1] != model.config.num_classes:
        raise TrainError(f"targets have {targets.shape[-1] if targets.ndim else 0} classes, "
                         f"classifier has {model.config.num_classes}")
    return targets if model.config.multilabel else targets.argmax(axis=1)


def train_classifier(model, data, schedule, policy, seed=0, batch_size=16, max_len=None,
                     validation=None, callback=None):
    """Classifier fine-tuning with gradual unfreezing.

    ``data`` is a list of (id sequence, target vector) pairs, targets as produced
    by ``corpus.encode_labels``. Validation loss is logged at each stage end.
    """
    if model.kind != "clf":
        raise TrainError("train_classifier needs a classifier")
    if not data:
        raise TrainError("empty training data")
    _check_schedule(model, schedule)
    seqs = [_as_ids(s) for s, _ in data]
    targets = _clf_targets(model, [t for _, t in data])
    multilabel = model.config.multilabel
    rng = np.random.default_rng(seed)
    batches = _epoch_batches(len(seqs), batch_size, rng)

    def step_loss(idx, frozen):
        ids, lengths = pad_batch([seqs[i] for i in idx], max_len)
        probs, state = clf_forward(model, ids, lengths)
        tg = targets[idx]
        return clf_loss(probs, tg, multilabel), backward(model, state, "clf", tg, frozen)

    val_fn = None
    if validation:
        v_seqs = [_as_ids(s) for s, _ in validation]
        v_tg = _clf_targets(model, [t for _, t in validation])

        def val_fn():
            probs = predict_proba(model, v_seqs, batch_size, max_len)
            return clf_loss(probs, v_tg, multilabel)

    log = _run(model, schedule, policy, batches, step_loss, val_fn, callback)
    return model, log


def predict_proba(model, seqs, batch_size=64, max_len=None):
    out = []
    seqs = [_as_ids(s) for s in seqs]
    for s in range(0, len(seqs), batch_size):
        ids, lengths = pad_batch(seqs[s:s + batch_size], max_len)
        probs, _ = clf_forward(model, ids, lengths)
        out.append(probs)
    if not out:
        return np.zeros((0, model.config.num_classes))
    return np.concatenate(out)
