"""Confusion-matrix bookkeeping and the six derived classification metrics.

Metrics are kept as fractions (accuracy etc. in [0, 1], MCC in [-1, 1]);
rendering multiplies by 100.  A metric whose denominator is zero is reported
as undefined rather than coerced to 0 or 1.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import InvalidArgumentError
from .labels import COVID, validate_label

METRIC_NAMES = ("accuracy", "sensitivity", "specificity", "precision", "f1", "mcc")


@dataclass(frozen=True)
class ConfusionMatrix:
    """Binary confusion counts with ``covid`` as the positive class."""

    tp: int
    tn: int
    fp: int
    fn: int

    def __post_init__(self):
        for name in ("tp", "tn", "fp", "fn"):
            v = getattr(self, name)
            if not isinstance(v, int) or v < 0:
                raise InvalidArgumentError(f"{name} must be a non-negative integer")
        if self.total < 1:
            raise InvalidArgumentError("confusion matrix must count at least one sample")

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


@dataclass(frozen=True)
class EvaluationReport:
    confusion: ConfusionMatrix
    accuracy: float | None
    sensitivity: float | None
    specificity: float | None
    precision: float | None
    f1: float | None
    mcc: float | None
    undefined_metrics: frozenset[str] = field(default_factory=frozenset)

    def as_dict(self) -> dict:
        c = self.confusion
        return {
            "confusion": {"tp": c.tp, "tn": c.tn, "fp": c.fp, "fn": c.fn},
            "metrics": {name: getattr(self, name) for name in METRIC_NAMES},
            "undefined": sorted(self.undefined_metrics),
        }


def confusion(predictions, truth) -> ConfusionMatrix:
    """Count TP/TN/FP/FN over parallel label sequences."""
    predictions = list(predictions)
    truth = list(truth)
    if len(predictions) != len(truth):
        raise InvalidArgumentError(
            f"length mismatch: {len(predictions)} predictions vs {len(truth)} truths")
    if not truth:
        raise InvalidArgumentError("empty prediction sequence")
    tp = tn = fp = fn = 0
    for pred, true in zip(predictions, truth):
        validate_label(pred)
        validate_label(true)
        if true == COVID:
            if pred == COVID:
                tp += 1
            else:
                fn += 1
        else:
            if pred == COVID:
                fp += 1
            else:
                tn += 1
    return ConfusionMatrix(tp=tp, tn=tn, fp=fp, fn=fn)


def _ratio(num: float, den: float) -> float | None:
    return None if den == 0 else num / den


def evaluate_metrics(c: ConfusionMatrix) -> EvaluationReport:
    """Compute the six metrics exactly as defined:

    sensitivity = TP/(TP+FN)            specificity = TN/(TN+FP)
    accuracy    = (TP+TN)/total         precision   = TP/(TP+FP)
    f1          = 2TP/(2TP+FP+FN)
    mcc         = (TP*TN - FP*FN) / sqrt((TP+FP)(TP+FN)(TN+FP)(TN+FN))
    """
    tp, tn, fp, fn = c.tp, c.tn, c.fp, c.fn
    values = {
        "accuracy": _ratio(tp + tn, c.total),
        "sensitivity": _ratio(tp, tp + fn),
        "specificity": _ratio(tn, tn + fp),
        "precision": _ratio(tp, tp + fp),
        "f1": _ratio(2 * tp, 2 * tp + fp + fn),
    }
    mcc_den_sq = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
    if mcc_den_sq == 0:
        values["mcc"] = None
    else:
        values["mcc"] = (tp * tn - fp * fn) / math.sqrt(mcc_den_sq)
    undefined = frozenset(name for name, v in values.items() if v is None)
    return EvaluationReport(confusion=c, undefined_metrics=undefined, **values)


def round_half_away(value: float, decimals: int) -> float:
    """Round half away from zero, matching how the printed tables round."""
    scale = 10 ** decimals
    return math.copysign(math.floor(abs(value) * scale + 0.5), value) / scale


def _pct(num: int, den: int) -> str:
    if den == 0:
        return "n/a"
    return f"{round_half_away(100.0 * num / den, 1):.1f}%"


def render_confusion_report(c: ConfusionMatrix) -> str:
    """2x2 count grid with per-row recall and per-column predictive value,
    one decimal each, arranged like the familiar confusion-matrix figure."""
    rows = [
        ("covid", c.tp, c.fn, _pct(c.tp, c.tp + c.fn), _pct(c.fn, c.tp + c.fn)),
        ("nofinding", c.fp, c.tn, _pct(c.tn, c.fp + c.tn), _pct(c.fp, c.fp + c.tn)),
    ]
    col_correct = (_pct(c.tp, c.tp + c.fp), _pct(c.tn, c.fn + c.tn))
    col_error = (_pct(c.fp, c.tp + c.fp), _pct(c.fn, c.fn + c.tn))

    lines = ["Confusion Matrix for Test Data", ""]
    header = f"{'True Class':<12} {'':<11} {'covid':>10} {'nofinding':>10}"
    lines.append(header)
    for name, a, b, ok, err in rows:
        lines.append(f"{'':<12} {name:<11} {a:>10} {b:>10} {ok:>8} {err:>8}")
    lines.append(f"{'':<12} {'':<11} {col_correct[0]:>10} {col_correct[1]:>10}")
    lines.append(f"{'':<12} {'':<11} {col_error[0]:>10} {col_error[1]:>10}")
    lines.append(f"{'':<12} {'':<11} {'covid':>10} {'nofinding':>10}")
    lines.append(f"{'':<12} {'':<11} {'Predicted Class':>21}")
    return "\n".join(lines) + "\n"
