"""Shared-task dataset loading, label schemes and label statistics."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

HOSTILE = ("fake", "hate", "offensive", "defamation")
NON_HOSTILE = "non-hostile"


class CorpusError(ValueError):
    pass


@dataclass(frozen=True)
class LabelScheme:
    kind: str
    classes: tuple

    def __post_init__(self):
        if self.kind not in ("binary", "multilabel"):
            raise CorpusError(f"unknown scheme kind {self.kind!r}")
        if len(set(self.classes)) != len(self.classes):
            raise CorpusError("scheme classes must be distinct")

    @property
    def multilabel(self):
        return self.kind == "multilabel"

    @property
    def target_classes(self):
        """Classes that own an output unit (non-hostile is the all-zero vector)."""
        return HOSTILE if self.multilabel else self.classes


BINARY = LabelScheme("binary", ("real", "fake"))
MULTILABEL = LabelScheme("multilabel", HOSTILE + (NON_HOSTILE,))


def get_scheme(name):
    if name == "binary":
        return BINARY
    if name == "multilabel":
        return MULTILABEL
    raise CorpusError(f"unknown label scheme {name!r} (expected binary or multilabel)")


@dataclass(frozen=True)
class LabeledExample:
    id: str
    text: str
    labels: frozenset = frozenset()


@dataclass
class DatasetSplit:
    name: str
    examples: list = field(default_factory=list)
    labeled: bool = True

    def __len__(self):
        return len(self.examples)

    @property
    def texts(self):
        return [ex.text for ex in self.examples]


@dataclass(frozen=True)
class FormatSpec:
    id_column: str = "id"
    text_column: str = "text"
    label_column: str = "label"
    delimiter: str = ","
    # "error" or "warn" when non-hostile co-occurs with a hostile label
    exclusivity: str = "error"


def parse_labels(cell, scheme, row_id, exclusivity="error"):
    labels = [part.strip() for part in cell.split(",") if part.strip()]
    if not labels:
        raise CorpusError(f"row {row_id}: empty label cell")
    for lab in labels:
        if lab not in scheme.classes:
            raise CorpusError(f"row {row_id}: unknown label {lab!r} for {scheme.kind} scheme")
    labels = frozenset(labels)
    if scheme.kind == "binary" and len(labels) != 1:
        raise CorpusError(f"row {row_id}: binary scheme expects exactly one label")
    if scheme.multilabel and NON_HOSTILE in labels and len(labels) > 1:
        msg = f"row {row_id}: exclusivity violated, {NON_HOSTILE} combined with hostile labels"
        if exclusivity == "error":
            raise CorpusError(msg)
        log.warning(msg)
        labels = labels - {NON_HOSTILE}
    return labels


def load_delimited(path, fmt=None, scheme=None, name="train", labeled=True):
    """Read a delimited file into a DatasetSplit.

    With ``labeled=False`` (test files) the label column is optional and ignored.
    """
    fmt = fmt or FormatSpec()
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh, delimiter=fmt.delimiter)
        header = reader.fieldnames or []
        needed = [fmt.id_column, fmt.text_column] + ([fmt.label_column] if labeled else [])
        missing = [col for col in needed if col not in header]
        if missing:
            raise CorpusError(f"{path}: missing column(s) {', '.join(missing)}")
        examples, seen = [], set()
        for row in reader:
            row_id = (row[fmt.id_column] or "").strip()
            if not row_id:
                raise CorpusError(f"{path}: row {reader.line_num} has an empty id")
            if row_id in seen:
                raise CorpusError(f"{path}: duplicate id {row_id!r}")
            seen.add(row_id)
            labels = frozenset()
            if labeled:
                labels = parse_labels(row[fmt.label_column] or "", scheme, row_id, fmt.exclusivity)
            examples.append(LabeledExample(row_id, row[fmt.text_column] or "", labels))
    return DatasetSplit(name, examples, labeled)


def write_delimited(path, split, fmt=None):
    fmt = fmt or FormatSpec()
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, delimiter=fmt.delimiter, lineterminator="\n")
        cols = [fmt.id_column, fmt.text_column] + ([fmt.label_column] if split.labeled else [])
        writer.writerow(cols)
        for ex in split.examples:
            row = [ex.id, ex.text]
            if split.labeled:
                row.append(",".join(sorted(ex.labels)))
            writer.writerow(row)


def label_distribution(split, scheme):
    counts = {c: 0 for c in scheme.classes}
    for ex in split.examples:
        for lab in ex.labels:
            counts[lab] += 1
    return counts


def encode_labels(labels, scheme):
    labels = set(labels.labels if isinstance(labels, LabeledExample) else labels)
    unknown = labels - set(scheme.classes)
    if unknown:
        raise CorpusError(f"labels outside scheme: {sorted(unknown)}")
    classes = scheme.target_classes
    return np.array([1.0 if c in labels else 0.0 for c in classes])


def decode_labels(vector, scheme):
    classes = scheme.target_classes
    if scheme.multilabel:
        labels = frozenset(c for c, v in zip(classes, vector) if v > 0.5)
        return labels or frozenset([NON_HOSTILE])
    return frozenset([classes[int(np.argmax(vector))]])
