"""Confusion-matrix metrics and the published reference table."""

import numpy as np
import pytest

from pcgkit.dataset import Label
from pcgkit.metrics import (REFERENCE_BASELINE_SCORES, REFERENCE_RNN_SCORES,
                            compute_metrics, format_metrics_row,
                            format_reference_table)


def test_pinned_confusion_example():
    # 5 abnormal all caught, 5 normal with one false alarm
    pairs = [(1, 1)] * 5 + [(-1, -1)] * 4 + [(1, -1)]
    m = compute_metrics(pairs)
    assert (m.tp, m.fn, m.tn, m.fp) == (5, 0, 4, 1)
    assert m.sensitivity == 1.0
    assert m.specificity == 0.8
    assert m.accuracy == 0.9
    assert m.macc == 0.9


def test_all_correct():
    pairs = [(1, 1)] * 3 + [(-1, -1)] * 3
    m = compute_metrics(pairs)
    assert m.sensitivity == m.specificity == m.accuracy == m.macc == 1.0


def test_label_enum_inputs():
    pairs = [(Label.ABNORMAL, Label.ABNORMAL), (Label.NORMAL, Label.ABNORMAL),
             (Label.NORMAL, Label.NORMAL)]
    m = compute_metrics(pairs)
    assert (m.tp, m.fn, m.tn, m.fp) == (1, 1, 1, 0)


def test_absent_class_yields_none():
    m = compute_metrics([(1, 1), (-1, 1)])
    assert m.specificity is None
    assert m.macc is None
    assert m.sensitivity == 0.5
    m = compute_metrics([(-1, -1)])
    assert m.sensitivity is None
    assert m.accuracy == 1.0


def test_recount_oracle_random_sets(rng):
    for _ in range(50):
        n = int(rng.integers(1, 200))
        preds = rng.choice([-1, 1], size=n)
        truths = rng.choice([-1, 1], size=n)
        m = compute_metrics(list(zip(preds, truths)))
        tp = int(np.sum((preds == 1) & (truths == 1)))
        fp = int(np.sum((preds == 1) & (truths == -1)))
        tn = int(np.sum((preds == -1) & (truths == -1)))
        fn = int(np.sum((preds == -1) & (truths == 1)))
        assert (m.tp, m.fp, m.tn, m.fn) == (tp, fp, tn, fn)
        assert m.accuracy == (tp + tn) / n
        if tp + fn:
            assert m.sensitivity == tp / (tp + fn)
        if tn + fp:
            assert m.specificity == tn / (tn + fp)


def test_invalid_inputs():
    with pytest.raises(ValueError):
        compute_metrics([])
    with pytest.raises(ValueError):
        compute_metrics([(2, 1)])


def test_reference_constants_are_display_only():
    assert REFERENCE_BASELINE_SCORES["svm"] == (0.8259, 0.8324, 0.8291)
    assert REFERENCE_RNN_SCORES["blstm"] == (0.9886, 0.9836, 0.9763)
    table = format_reference_table()
    for token in ("0.8259", "0.8324", "0.8291", "0.9886", "0.9836", "0.9763"):
        assert token in table


def test_format_metrics_row_handles_none():
    m = compute_metrics([(1, 1)])
    row = format_metrics_row("fixture", m)
    assert "fixture" in row
    assert "n/a" in row
