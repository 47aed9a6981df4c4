import numpy as np
import pytest

from ladiff.corpus import (BINARY, HOSTILE, MULTILABEL, CorpusError, DatasetSplit, FormatSpec,
                           LabeledExample, decode_labels, encode_labels, get_scheme,
                           label_distribution, load_delimited, parse_labels, write_delimited)
from oracles import all_label_sets


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def test_load_binary(tmp_path):
    p = _write(tmp_path / "t.csv", 'id,text,label\n1,some tweet,fake\n2,"quoted, text",real\n')
    split = load_delimited(p, scheme=BINARY)
    assert split.examples[0] == LabeledExample("1", "some tweet", frozenset({"fake"}))
    assert split.examples[1].text == "quoted, text"


def test_load_multilabel_and_custom_format(tmp_path):
    p = _write(tmp_path / "t.tsv", "Unique ID\tPost\tLabels Set\n7\tpost\thate, offensive\n")
    fmt = FormatSpec("Unique ID", "Post", "Labels Set", "\t")
    split = load_delimited(p, fmt, MULTILABEL)
    assert split.examples[0].labels == {"hate", "offensive"}


def test_exclusivity(tmp_path, caplog):
    p = _write(tmp_path / "t.csv", 'id,text,label\n9,post,"non-hostile,hate"\n')
    with pytest.raises(CorpusError, match="exclusivity"):
        load_delimited(p, scheme=MULTILABEL)
    split = load_delimited(p, FormatSpec(exclusivity="warn"), MULTILABEL)
    assert split.examples[0].labels == {"hate"}
    assert "exclusivity" in caplog.text


@pytest.mark.parametrize("body, match", [
    ("id,text,label\n1,a,bogus\n", "row 1"),
    ("id,text,label\n1,a,fake\n1,b,real\n", "duplicate"),
    ("id,text\n1,a\n", "missing column"),
    ("id,text,label\n1,a,\"fake,real\"\n", "exactly one"),
])
def test_load_errors(tmp_path, body, match):
    with pytest.raises(CorpusError, match=match):
        load_delimited(_write(tmp_path / "t.csv", body), scheme=BINARY)


def test_unlabeled_split(tmp_path):
    split = load_delimited(_write(tmp_path / "t.csv", "id,text\n1,a\n"), labeled=False)
    assert split.examples[0].labels == frozenset() and not split.labeled


def test_write_round_trip(tmp_path):
    split = DatasetSplit("x", [LabeledExample("1", "a, \"b\"", frozenset({"hate", "fake"})),
                               LabeledExample("2", "c", frozenset({"non-hostile"}))])
    write_delimited(tmp_path / "o.csv", split)
    assert load_delimited(tmp_path / "o.csv", scheme=MULTILABEL).examples == split.examples


def test_label_distribution():
    ex = lambda *labs: LabeledExample("0", "", frozenset(labs))  # noqa: E731
    split = DatasetSplit("s", [ex("fake"), ex("real"), ex("fake")])
    assert label_distribution(split, BINARY) == {"real": 1, "fake": 2}
    assert label_distribution(DatasetSplit("s", []), BINARY) == {"real": 0, "fake": 0}
    split = DatasetSplit("s", [ex("hate", "offensive"), ex("non-hostile")])
    assert label_distribution(split, MULTILABEL) == {
        "hate": 1, "offensive": 1, "non-hostile": 1, "fake": 0, "defamation": 0}


def test_encode_labels():
    assert encode_labels({"fake"}, BINARY).tolist() == [0, 1]
    assert encode_labels({"non-hostile"}, MULTILABEL).tolist() == [0, 0, 0, 0]
    assert encode_labels({"fake", "defamation"}, MULTILABEL).tolist() == [1, 0, 0, 1]
    with pytest.raises(CorpusError):
        encode_labels({"satire"}, MULTILABEL)


def test_decode_round_trip():
    for s in all_label_sets():
        labels = s or frozenset({"non-hostile"})
        assert decode_labels(encode_labels(labels, MULTILABEL), MULTILABEL) == labels
    for c in BINARY.classes:
        assert decode_labels(encode_labels({c}, BINARY), BINARY) == {c}


def test_schemes():
    assert get_scheme("multilabel").target_classes == HOSTILE
    assert parse_labels(" fake ,hate", MULTILABEL, "3") == {"fake", "hate"}
    with pytest.raises(CorpusError):
        get_scheme("ternary")
    assert np.all(encode_labels({"real"}, BINARY) == [1, 0])
