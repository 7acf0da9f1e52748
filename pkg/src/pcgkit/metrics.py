"""Binary classification metrics with abnormal as the positive class.

Published reference scores for the same task are carried as constants so
reports can show them next to a run's own numbers. They are display-only
context, never a target any test asserts against.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .dataset import Label


@dataclass
class Metrics:
    tp: int
    fp: int
    tn: int
    fn: int
    sensitivity: Optional[float]
    specificity: Optional[float]
    accuracy: float
    macc: Optional[float]

    def as_dict(self):
        return {
            "tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn,
            "sensitivity": self.sensitivity,
            "specificity": self.specificity,
            "accuracy": self.accuracy,
            "macc": self.macc,
        }


def _label_sign(value):
    if isinstance(value, Label):
        return 1 if value is Label.ABNORMAL else -1
    value = int(value)
    if value not in (-1, 1):
        raise ValueError("labels must be +1/-1, got %r" % (value,))
    return value


def compute_metrics(predictions):
    """predictions: iterable of (predicted, truth) label pairs. Sensitivity
    or specificity is None when its class is absent from the truths."""
    pairs = list(predictions)
    if not pairs:
        raise ValueError("empty prediction list")
    tp = fp = tn = fn = 0
    for predicted, truth in pairs:
        p = _label_sign(predicted)
        t = _label_sign(truth)
        if t > 0:
            if p > 0:
                tp += 1
            else:
                fn += 1
        else:
            if p > 0:
                fp += 1
            else:
                tn += 1
    sensitivity = tp / (tp + fn) if (tp + fn) > 0 else None
    specificity = tn / (tn + fp) if (tn + fp) > 0 else None
    accuracy = (tp + tn) / len(pairs)
    macc = (0.5 * (sensitivity + specificity)
            if sensitivity is not None and specificity is not None else None)
    return Metrics(tp=tp, fp=fp, tn=tn, fn=fn, sensitivity=sensitivity,
                   specificity=specificity, accuracy=accuracy, macc=macc)


# Published scores on the PhysioNet/CinC 2016 corpus, (Se, Sp, Acc).
REFERENCE_BASELINE_SCORES = {
    "svm": (0.8259, 0.8324, 0.8291),
    "lr": (0.7121, 0.6879, 0.6991),
    "rf": (0.6901, 0.6850, 0.6861),
    "rnn-best": (0.9886, 0.9836, 0.9763),
}

REFERENCE_RNN_SCORES = {
    "lstm": (0.9995, 0.9671, 0.9706),
    "blstm": (0.9886, 0.9836, 0.9763),
    "gru": (0.9669, 0.9793, 0.9542),
    "bigru": (0.9846, 0.9728, 0.9721),
}


def format_reference_table():
    lines = ["published reference scores (display only)",
             "%-10s %8s %8s %8s" % ("model", "se", "sp", "acc")]
    for name, (se, sp, acc) in REFERENCE_BASELINE_SCORES.items():
        lines.append("%-10s %8.4f %8.4f %8.4f" % (name, se, sp, acc))
    for name, (se, sp, acc) in REFERENCE_RNN_SCORES.items():
        lines.append("%-10s %8.4f %8.4f %8.4f" % (name, se, sp, acc))
    return "\n".join(lines)


def format_metrics_row(name, metrics):
    def cell(v):
        return "%8.4f" % v if v is not None else "%8s" % "n/a"

    return "%-10s %s %s %s %s" % (
        name, cell(metrics.sensitivity), cell(metrics.specificity),
        cell(metrics.accuracy), cell(metrics.macc))
