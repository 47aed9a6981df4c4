"""Command-line entry point.

Every subcommand reads its parameters from built-in defaults, then an optional
``--config`` file of ``key = value`` lines, then ``--key value`` flags; the
``LADIFF_SEED`` environment variable overrides ``seed`` last. The fully
resolved parameters are written next to the primary output as
``<output>.config``, which can be fed back with ``--config``.

Exit codes: 0 success, 1 usage or configuration error, 2 data error.
"""
from __future__ import annotations

import argparse
import csv
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import checkpoint
from .baselines import (BaselineError, ForestConfig, fit_tfidf, train_forest, train_forest_ovr,
                        train_logreg)
from .corpus import (NON_HOSTILE, CorpusError, FormatSpec, encode_labels, get_scheme, label_distribution,
                     load_delimited)
from .metrics import (MetricsError, binary_report, format_report, multilabel_report,
                      scores_to_label_sets)
from .model import ModelConfig, ModelError, init_classifier_from_lm, init_model
from .preprocess import (PreprocessConfig, PreprocessConfigError, load_config, parse_bool,
                         preprocess)
from .tokenizer import Vocab, VocabError, build_vocab, encode_text, tokenize
from .trainer import (LRPolicy, StageSchedule, TrainError, predict_proba, train_classifier,
                      train_lm)

EXIT_OK, EXIT_CONFIG, EXIT_DATA = 0, 1, 2
REQUIRED = object()


class ConfigError(Exception):
    pass


class DataError(Exception):
    pass


@dataclass(frozen=True)
class Opt:
    name: str
    type: type
    default: object
    help: str = ""


def _columns():
    return [
        Opt("id_column", str, "id", "id column name"),
        Opt("text_column", str, "text", "text column name"),
        Opt("label_column", str, "label", "label column name (multi-label cells comma-separated)"),
        Opt("delimiter", str, ",", "field delimiter"),
        Opt("exclusivity", str, "error", "error|warn when non-hostile co-occurs with hostile labels"),
    ]


def _schedule_opts():
    return [
        Opt("seed", int, 0),
        Opt("stage_length", int, 100, "batches between unfreeze events"),
        Opt("total_batches", int, 1000),
        Opt("base_lr", float, 4e-3),
        Opt("discriminative_factor", float, 2.6),
        Opt("cut_frac", float, 0.1),
        Opt("ratio", float, 32.0),
        Opt("batch_size", int, 16),
    ]


SPECS = {
    "preprocess": [
        Opt("input", str, REQUIRED), Opt("output", str, REQUIRED),
        Opt("input_format", str, "csv", "csv (rewrite text_column) or lines (one post per line)"),
        Opt("text_column", str, "text"), Opt("delimiter", str, ","),
        Opt("preprocess_config", str, "", "preprocess config file (key = value)"),
        Opt("language", str, "", "override the preprocess config language (en|hi)"),
        Opt("trace", int, 0, "print per-stage outputs for the first N rows"),
    ],
    "stats": [Opt("input", str, REQUIRED), Opt("scheme", str, "binary"),
              Opt("output", str, "", "write class,count here instead of stdout")] + _columns(),
    "build-vocab": [
        Opt("input", str, REQUIRED), Opt("output", str, REQUIRED),
        Opt("input_format", str, "csv"), Opt("text_column", str, "text"), Opt("delimiter", str, ","),
        Opt("min_freq", int, 2), Opt("max_size", int, 30000),
    ],
    "train-lm": [
        Opt("train", str, REQUIRED), Opt("vocab", str, REQUIRED), Opt("output", str, REQUIRED),
        Opt("valid", str, ""), Opt("log", str, "", "loss trace CSV (default <output>.log.csv)"),
        Opt("input_format", str, "csv"), Opt("text_column", str, "text"), Opt("delimiter", str, ","),
        Opt("embed_dim", int, 64), Opt("hidden_dim", int, 128), Opt("num_layers", int, 2),
        Opt("seq_len", int, 20),
    ] + _schedule_opts(),
    "train-clf": [
        Opt("train", str, REQUIRED), Opt("vocab", str, REQUIRED), Opt("output", str, REQUIRED),
        Opt("lm", str, "", "language-model checkpoint to initialize from"),
        Opt("valid", str, ""), Opt("log", str, ""), Opt("scheme", str, "binary"),
        Opt("max_len", int, 0, "truncate documents to this many tokens (0 = no limit)"),
    ] + _columns() + _schedule_opts(),
    "train-baseline": [
        Opt("train", str, REQUIRED), Opt("output", str, REQUIRED), Opt("scheme", str, "binary"),
        Opt("model", str, "forest", "forest or logreg"),
        Opt("n_estimators", int, 1000), Opt("min_samples_split", int, 15),
        Opt("random_state", int, 42), Opt("n_jobs", int, 1),
        Opt("l2_lambda", float, 1e-3), Opt("epochs", int, 500), Opt("lr", float, 0.5),
        Opt("seed", int, 0),
    ] + _columns(),
    "evaluate": [
        Opt("model", str, REQUIRED), Opt("data", str, REQUIRED), Opt("scheme", str, "binary"),
        Opt("vocab", str, "", "vocabulary (neural models only)"),
        Opt("output", str, "", "write the report here as well as stdout"),
        Opt("format", str, "csv", "csv or kv"), Opt("percent", bool, False),
        Opt("threshold", float, 0.5, "sigmoid threshold for multi-label predictions"),
        Opt("batch_size", int, 64), Opt("max_len", int, 0),
    ] + _columns(),
    "export-losses": [Opt("checkpoint", str, REQUIRED), Opt("output", str, REQUIRED)],
}


# ---------------------------------------------------------------------------
# config resolution


def _convert(opt, value):
    if opt.type is bool:
        try:
            return parse_bool(value)
        except PreprocessConfigError as exc:
            raise ConfigError(f"{opt.name}: {exc}") from None
    try:
        return opt.type(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{opt.name}: expected {opt.type.__name__}, got {value!r}") from None


def _read_config_file(path):
    values = {}
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    with fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, value = line.split("=", 1)
            values[key.strip()] = value.strip()
    return values


def resolve_config(command, flag_values, config_path=None, environ=None):
    specs = {o.name: o for o in SPECS[command]}
    resolved = {name: o.default for name, o in specs.items()}
    if config_path:
        file_values = _read_config_file(config_path)
        unknown = sorted(set(file_values) - set(specs))
        if unknown:
            raise ConfigError(f"unknown config key(s) for {command}: {', '.join(unknown)}")
        for key, value in file_values.items():
            resolved[key] = _convert(specs[key], value)
    for key, value in flag_values.items():
        if value is not None:
            resolved[key] = _convert(specs[key], value)
    environ = os.environ if environ is None else environ
    if "seed" in specs and environ.get("LADIFF_SEED"):
        resolved["seed"] = _convert(specs["seed"], environ["LADIFF_SEED"])
    missing = [k for k, v in resolved.items() if v is REQUIRED]
    if missing:
        raise ConfigError(f"missing required parameter(s): {', '.join(missing)}")
    return resolved


def dump_config(resolved):
    out = []
    for key, value in resolved.items():
        if isinstance(value, bool):
            value = "true" if value else "false"
        out.append(f"{key} = {value}")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# helpers


def _fmt(cfg):
    if cfg.get("exclusivity", "error") not in ("error", "warn"):
        raise ConfigError("exclusivity must be 'error' or 'warn'")
    return FormatSpec(cfg.get("id_column", "id"), cfg.get("text_column", "text"),
                      cfg.get("label_column", "label"), cfg.get("delimiter", ","),
                      cfg.get("exclusivity", "error"))


def _scheme(cfg):
    try:
        return get_scheme(cfg["scheme"])
    except CorpusError as exc:
        raise ConfigError(str(exc)) from None


def _read_texts(path, cfg):
    """Texts from a CSV column or from plain lines."""
    if cfg.get("input_format", "csv") == "lines":
        with open(path, encoding="utf-8") as fh:
            return [line.rstrip("\n") for line in fh]
    if cfg.get("input_format", "csv") != "csv":
        raise ConfigError("input_format must be csv or lines")
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh, delimiter=cfg["delimiter"])
        if cfg["text_column"] not in (reader.fieldnames or []):
            raise DataError(f"{path}: missing column {cfg['text_column']}")
        return [row[cfg["text_column"]] or "" for row in reader]


def _load_labeled(path, cfg, scheme, name):
    split = load_delimited(path, _fmt(cfg), scheme, name)
    if not split.examples:
        raise DataError(f"{path}: no rows")
    return split


def _schedule_and_policy(cfg, num_groups):
    try:
        return (StageSchedule(num_groups, cfg["stage_length"]),
                LRPolicy(cfg["base_lr"], cfg["discriminative_factor"], cfg["cut_frac"],
                         cfg["ratio"], cfg["total_batches"]))
    except TrainError as exc:
        raise ConfigError(str(exc)) from None


def _write_text(path, text):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


# ---------------------------------------------------------------------------
# subcommands


def cmd_preprocess(cfg, out):
    if cfg["preprocess_config"]:
        pcfg = load_config(cfg["preprocess_config"], language=cfg["language"] or None)
    else:
        pcfg = PreprocessConfig(language=cfg["language"] or "en")
    if cfg["input_format"] not in ("csv", "lines"):
        raise ConfigError("input_format must be csv or lines")
    traced = 0

    def run(text):
        nonlocal traced
        result, trace = preprocess(text, pcfg)
        if traced < cfg["trace"]:
            traced += 1
            out.write(f"--- row {traced}: {trace.input!r}\n")
            for stage, value in trace.stage_outputs:
                out.write(f"{stage}\t{value!r}\n")
        return result

    if cfg["input_format"] == "lines":
        with open(cfg["input"], encoding="utf-8") as fh:
            lines = [line.rstrip("\n") for line in fh]
        _write_text(cfg["output"], "".join(run(t) + "\n" for t in lines))
        return len(lines)
    with open(cfg["input"], encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh, delimiter=cfg["delimiter"])
        rows = list(reader)
    if not rows:
        raise DataError(f"{cfg['input']}: no rows")
    header = rows[0]
    if cfg["text_column"] not in header:
        raise DataError(f"{cfg['input']}: missing column {cfg['text_column']}")
    col = header.index(cfg["text_column"])
    with open(cfg["output"], "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, delimiter=cfg["delimiter"], lineterminator="\n")
        writer.writerow(header)
        for row in rows[1:]:
            row = list(row)
            row[col] = run(row[col])
            writer.writerow(row)
    return len(rows) - 1


def cmd_stats(cfg, out):
    scheme = _scheme(cfg)
    split = _load_labeled(cfg["input"], cfg, scheme, "data")
    counts = label_distribution(split, scheme)
    text = "class,count\n" + "".join(f"{c},{n}\n" for c, n in counts.items())
    text += f"rows,{len(split)}\n"
    if cfg["output"]:
        _write_text(cfg["output"], text)
    out.write(text)


def cmd_build_vocab(cfg, out):
    texts = _read_texts(cfg["input"], cfg)
    if not texts:
        raise DataError(f"{cfg['input']}: no rows")
    try:
        vocab = build_vocab([tokenize(t) for t in texts], cfg["min_freq"], cfg["max_size"])
    except VocabError as exc:
        raise ConfigError(str(exc)) from None
    vocab.save(cfg["output"])
    out.write(f"vocabulary: {len(vocab)} tokens\n")


def _load_vocab(path):
    try:
        return Vocab.load(path)
    except OSError as exc:
        raise DataError(f"cannot read vocabulary {path}: {exc.strerror}") from None


def cmd_train_lm(cfg, out):
    vocab = _load_vocab(cfg["vocab"])
    corpus = [encode_text(t, vocab) for t in _read_texts(cfg["train"], cfg)]
    valid = [encode_text(t, vocab) for t in _read_texts(cfg["valid"], cfg)] if cfg["valid"] else None
    try:
        mcfg = ModelConfig(len(vocab), cfg["embed_dim"], cfg["hidden_dim"], cfg["num_layers"],
                           seed=cfg["seed"])
    except ModelError as exc:
        raise ConfigError(str(exc)) from None
    model = init_model(mcfg, "lm")
    schedule, policy = _schedule_and_policy(cfg, model.num_groups)
    model, log = train_lm(model, corpus, schedule, policy, cfg["seed"], cfg["batch_size"],
                          cfg["seq_len"], valid)
    checkpoint.save_model(cfg["output"], model, log)
    log.save_csv(cfg["log"] or cfg["output"] + ".log.csv")
    if log.records:
        out.write(f"final train loss: {log.records[-1].train_loss:.6f}\n")
        out.write(f"unfreeze events: {log.unfreeze_events}\n")


def _clf_data(split, vocab, scheme):
    return [(encode_text(ex.text, vocab), encode_labels(ex.labels, scheme)) for ex in split.examples]


def cmd_train_clf(cfg, out):
    if not cfg["lm"]:
        raise ConfigError("classifier requires LM init (pass --lm <checkpoint>)")
    scheme = _scheme(cfg)
    vocab = _load_vocab(cfg["vocab"])
    try:
        lm, _ = checkpoint.load_model(cfg["lm"])
    except OSError as exc:
        raise DataError(f"cannot read LM checkpoint {cfg['lm']}: {exc.strerror}") from None
    if lm.kind != "lm":
        raise ConfigError("classifier requires LM init: --lm is not a language model")
    if lm.config.vocab_size != len(vocab):
        raise DataError("vocabulary size differs from the LM checkpoint")
    train = _clf_data(_load_labeled(cfg["train"], cfg, scheme, "train"), vocab, scheme)
    valid = (_clf_data(_load_labeled(cfg["valid"], cfg, scheme, "validation"), vocab, scheme)
             if cfg["valid"] else None)
    model = init_classifier_from_lm(lm, len(scheme.target_classes), scheme.multilabel, cfg["seed"])
    schedule, policy = _schedule_and_policy(cfg, model.num_groups)
    model, log = train_classifier(model, train, schedule, policy, cfg["seed"], cfg["batch_size"],
                                  cfg["max_len"] or None, valid)
    checkpoint.save_model(cfg["output"], model, log)
    log.save_csv(cfg["log"] or cfg["output"] + ".log.csv")
    if log.records:
        out.write(f"final train loss: {log.records[-1].train_loss:.6f}\n")
        out.write(f"unfreeze events: {log.unfreeze_events}\n")


def cmd_train_baseline(cfg, out):
    scheme = _scheme(cfg)
    split = _load_labeled(cfg["train"], cfg, scheme, "train")
    docs = [ex.text.split() for ex in split.examples]
    tfidf = fit_tfidf(docs)
    X = tfidf.transform_many(docs)
    Y = np.array([encode_labels(ex.labels, scheme) for ex in split.examples])
    try:
        if cfg["model"] == "forest":
            fcfg = ForestConfig(cfg["n_estimators"], cfg["min_samples_split"], cfg["random_state"],
                                n_jobs=cfg["n_jobs"])
            model = (train_forest_ovr(X, Y, fcfg) if scheme.multilabel
                     else train_forest(X, Y.argmax(axis=1), fcfg, n_classes=2))
            pred = model.predict(X)
        elif cfg["model"] == "logreg":
            model = train_logreg(X, Y, cfg["l2_lambda"], cfg["epochs"], cfg["lr"], cfg["seed"],
                                 "ovr" if scheme.multilabel else "softmax")
            pred = model.predict(X)
        else:
            raise ConfigError("model must be 'forest' or 'logreg'")
    except BaselineError as exc:
        raise ConfigError(str(exc)) from None
    checkpoint.save_baseline(cfg["output"], tfidf, model, scheme.kind)
    if scheme.multilabel:
        acc = np.mean(np.all(pred == Y, axis=1))
    else:
        acc = np.mean(pred == Y.argmax(axis=1))
    out.write(f"training accuracy (exact match): {acc:.6f}\n")


def _load_scorer(cfg, scheme):
    """Read the model file and check it against the scheme; -> texts -> score rows."""
    try:
        kind, meta, groups = checkpoint.read(cfg["model"])
    except OSError as exc:
        raise DataError(f"cannot read model {cfg['model']}: {exc.strerror}") from None
    if kind in ("lm", "clf"):
        model, _ = checkpoint.model_from_container(kind, meta, groups)
        if model.kind != "clf":
            raise ConfigError("evaluate needs a classifier, got a language model")
        if model.config.multilabel != scheme.multilabel:
            raise ConfigError(f"scheme/model mismatch: model is "
                              f"{'multilabel' if model.config.multilabel else 'binary'}")
        if not cfg["vocab"]:
            raise ConfigError("neural models need --vocab")
        vocab = _load_vocab(cfg["vocab"])

        def score(texts):
            seqs = [encode_text(t, vocab) for t in texts]
            return predict_proba(model, seqs, cfg["batch_size"], cfg["max_len"] or None)
        return score

    tfidf, model, model_scheme = checkpoint.baseline_from_container(kind, meta, groups)
    if model_scheme != scheme.kind:
        raise ConfigError(f"scheme/model mismatch: model was trained for {model_scheme}")

    def score(texts):
        X = tfidf.transform_many([t.split() for t in texts])
        if scheme.multilabel:
            return model.scores(X) if hasattr(model, "scores") else model.predict(X)
        return np.eye(2)[model.predict(X)]
    return score


def cmd_evaluate(cfg, out):
    scheme = _scheme(cfg)
    if cfg["format"] not in ("csv", "kv"):
        raise ConfigError("format must be csv or kv")
    score = _load_scorer(cfg, scheme)
    split = _load_labeled(cfg["data"], cfg, scheme, "evaluation")
    scores = score(split.texts)
    if scheme.multilabel:
        gold = [frozenset(ex.labels) - {NON_HOSTILE} for ex in split.examples]
        report = multilabel_report(gold, scores_to_label_sets(scores, cfg["threshold"]))
    else:
        gold = [scheme.classes.index(next(iter(ex.labels))) for ex in split.examples]
        report = binary_report(gold, np.asarray(scores).argmax(axis=1))
    text = format_report(report, percent=cfg["percent"], header=cfg["format"] == "csv",
                         style=cfg["format"])
    if cfg["output"]:
        _write_text(cfg["output"], text)
    out.write(text)


def cmd_export_losses(cfg, out):
    try:
        kind, meta, groups = checkpoint.read(cfg["checkpoint"])
    except OSError as exc:
        raise DataError(f"cannot read checkpoint {cfg['checkpoint']}: {exc.strerror}") from None
    _, log = checkpoint.model_from_container(kind, meta, groups)
    if log is None:
        raise DataError("checkpoint holds no training log")
    log.save_csv(cfg["output"])
    out.write(f"{len(log)} records, unfreeze events {log.unfreeze_events}\n")


COMMANDS = {
    "preprocess": (cmd_preprocess, "Rewrite posts into normalized text with special tokens"),
    "stats": (cmd_stats, "Label distribution of a labeled file"),
    "build-vocab": (cmd_build_vocab, "Build a vocabulary from preprocessed text"),
    "train-lm": (cmd_train_lm, "Train the language model with gradual unfreezing"),
    "train-clf": (cmd_train_clf, "Fine-tune a classifier initialized from an LM checkpoint"),
    "train-baseline": (cmd_train_baseline, "Train a TF-IDF random forest or logistic regression"),
    "evaluate": (cmd_evaluate, "Score a model on a labeled file"),
    "export-losses": (cmd_export_losses, "Write a checkpoint's training log as CSV"),
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser():
    parser = _Parser(prog="ladiff", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="key = value file with parameters for this command")
        for opt in SPECS[name]:
            default = "required" if opt.default is REQUIRED else repr(opt.default)
            p.add_argument("--" + opt.name.replace("_", "-"), dest=opt.name, default=None,
                           help=f"{opt.help} (default: {default})".strip())
    return parser


def main(argv=None, out=None):
    out = out or sys.stdout
    args = build_parser().parse_args(argv)
    command = args.command
    flags = {o.name: getattr(args, o.name) for o in SPECS[command]}
    try:
        cfg = resolve_config(command, flags, args.config)
        if cfg.get("output"):
            _write_text(cfg["output"] + ".config", dump_config(cfg))
        else:
            sys.stderr.write("# resolved config\n" + dump_config(cfg))
        COMMANDS[command][0](cfg, out)
    except (ConfigError, PreprocessConfigError) as exc:
        sys.stderr.write(f"ladiff {command}: error: {exc}\n")
        return EXIT_CONFIG
    except (DataError, CorpusError, VocabError, TrainError, ModelError, MetricsError,
            checkpoint.CheckpointError, OSError) as exc:
        sys.stderr.write(f"ladiff {command}: data error: {exc}\n")
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
