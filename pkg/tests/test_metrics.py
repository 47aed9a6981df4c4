import numpy as np
import pytest

from ladiff.metrics import (MetricsError, MetricsReport, binary_report, coarse_f1,
                            fine_grained_f1, format_report, multilabel_report,
                            scores_to_label_sets)
from oracles import all_label_sets, oracle_coarse_f1, oracle_fine_f1


def test_binary_report_examples():
    r = binary_report([1, 0, 0, 0], [1, 1, 0, 0])
    assert r["accuracy"] == 0.75
    assert r["f1"] == pytest.approx((3 * 0.8 + 2 / 3) / 4, abs=1e-12)
    assert r["f1"] == pytest.approx(0.7667, abs=1e-4)
    r = binary_report([1, 1], [0, 0])
    assert r["accuracy"] == 0 and r["f1"] == 0
    r = binary_report([0, 1, 1, 0, 1], [0, 1, 1, 0, 1])
    assert all(r[k] == 1.0 for k in ("accuracy", "precision", "recall", "f1"))


def test_binary_report_errors():
    with pytest.raises(MetricsError):
        binary_report([0, 1], [0])
    with pytest.raises(MetricsError):
        binary_report([], [])


def test_coarse_examples():
    gold = [{"fake"}, set(), {"hate", "offensive"}, set()]
    pred = [{"fake"}, {"fake"}, set(), set()]
    assert coarse_f1(gold, pred) == pytest.approx(0.5, abs=1e-12)
    assert coarse_f1(gold, gold) == 1.0
    assert coarse_f1([set(), set()], [{"hate"}, {"fake"}]) == 0.0


def test_fine_grained_examples():
    per, w = fine_grained_f1([{"fake"}, {"fake", "hate"}], [{"fake"}, {"fake"}])
    assert per["fake"] == 1.0 and per["hate"] == 0.0
    assert w == pytest.approx(2 / 3, abs=1e-12)
    every = [{"fake"}, {"hate"}, {"offensive", "defamation"}]
    per, w = fine_grained_f1(every, every)
    assert all(v == 1.0 for v in per.values()) and w == 1.0
    assert fine_grained_f1([{"hate"}], [{"offensive"}])[1] == 0.0
    with pytest.raises(MetricsError, match="undefined metric"):
        fine_grained_f1([set()], [{"hate"}])


def test_metrics_match_oracle_and_are_permutation_invariant():
    rng = np.random.default_rng(0)
    sets = all_label_sets()
    for _ in range(200):
        n = int(rng.integers(1, 7))
        gold = [sets[i] for i in rng.integers(0, len(sets), size=n)]
        pred = [sets[i] for i in rng.integers(0, len(sets), size=n)]
        assert abs(coarse_f1(gold, pred) - oracle_coarse_f1(gold, pred)) <= 1e-12
        if any(gold):
            per, w = fine_grained_f1(gold, pred)
            o_per, o_w = oracle_fine_f1(gold, pred)
            assert abs(w - o_w) <= 1e-12
            assert all(abs(per[c] - o_per[c]) <= 1e-12 for c in per)
            perm = rng.permutation(n)
            w2 = fine_grained_f1([gold[i] for i in perm], [pred[i] for i in perm])[1]
            assert abs(w - w2) <= 1e-12
            assert 0 <= w <= 1


def test_format_report():
    perfect = binary_report([0, 1], [0, 1])
    assert format_report(perfect) == "1.000000,1.000000,1.000000,1.000000\n"
    table1 = MetricsReport("binary", {"accuracy": 0.96728972, "precision": 0.96790802,
                                      "recall": 0.96728972, "f1": 0.967324832})
    assert format_report(table1, "binary") == "0.967290,0.967908,0.967290,0.967325\n"
    with pytest.raises(MetricsError):
        format_report(perfect, "multilabel")
    with pytest.raises(MetricsError):
        format_report(MetricsReport("binary", {"accuracy": 1.0}))


def test_multilabel_format_columns():
    gold = [{"fake"}, {"hate"}, set(), {"defamation", "offensive"}]
    report = multilabel_report(gold, gold)
    text = format_report(report, header=True)
    header, row = text.splitlines()
    assert header.split(",")[0] == "Coarse Grained Hostility f1"
    assert header.split(",")[-1] == "Weighted Fine Grained f1"
    assert row == ",".join(["1.000000"] * 6)
    kv = format_report(report, style="kv", percent=True)
    assert kv.splitlines()[0] == "coarse_f1=100.000000"


def test_scores_to_label_sets():
    sets = scores_to_label_sets(np.array([[0.9, 0.1, 0.6, 0.2], [0.1, 0.2, 0.3, 0.4]]))
    assert sets == [frozenset({"fake", "offensive"}), frozenset()]
