"""Confusion-matrix measures, G-mean and ROC/AUC.

Class 1 (fully paid) is the positive class. Rates that would divide by zero
raise :class:`UndefinedMetric` instead of silently reporting 0.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import LengthMismatch, OneClassOnly, UndefinedMetric

METRIC_NAMES = ("accuracy", "auc", "sensitivity", "specificity", "fp_rate", "g_mean")
TABLE_HEADER = ("Classifier", "Accuracy", "AUC", "Sensitivity", "Specificity", "FP-Rate", "G-mean")


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    auc: float
    sensitivity: float
    specificity: float
    fp_rate: float
    g_mean: float

    def to_dict(self) -> dict:
        return asdict(self)

    def values(self) -> tuple[float, ...]:
        return tuple(getattr(self, m) for m in METRIC_NAMES)


@dataclass(frozen=True)
class RocCurve:
    fpr: tuple[float, ...]
    tpr: tuple[float, ...]
    thresholds: tuple[float, ...]

    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.fpr, self.tpr))


def _binary(a, name: str) -> np.ndarray:
    a = np.asarray(a).reshape(-1)
    if a.size and not np.isin(a, (0, 1)).all():
        raise ValueError(f"{name} must be binary 0/1")
    return a.astype(np.int64)


def confusion(y_true, y_pred) -> ConfusionMatrix:
    t = _binary(y_true, "y_true")
    p = _binary(y_pred, "y_pred")
    if t.size != p.size:
        raise LengthMismatch(f"y_true has {t.size} entries, y_pred has {p.size}")
    if t.size == 0:
        raise LengthMismatch("need at least one sample")
    tp = int(np.count_nonzero((t == 1) & (p == 1)))
    fp = int(np.count_nonzero((t == 0) & (p == 1)))
    tn = int(np.count_nonzero((t == 0) & (p == 0)))
    return ConfusionMatrix(tp, fp, tn, t.size - tp - fp - tn)


def sensitivity(cm: ConfusionMatrix) -> float:
    if cm.tp + cm.fn == 0:
        raise UndefinedMetric("sensitivity undefined: no positive (class 1) samples")
    return cm.tp / (cm.tp + cm.fn)


def specificity(cm: ConfusionMatrix) -> float:
    if cm.tn + cm.fp == 0:
        raise UndefinedMetric("specificity undefined: no negative (class 0) samples")
    return cm.tn / (cm.tn + cm.fp)


def g_mean_from_rates(sens: float, spec: float) -> float:
    return math.sqrt(sens * spec)


def g_mean(cm: ConfusionMatrix) -> float:
    return g_mean_from_rates(sensitivity(cm), specificity(cm))


def basic_rates(cm: ConfusionMatrix) -> tuple[float, float, float, float]:
    """(accuracy, sensitivity, specificity, fp_rate)."""
    if cm.total == 0:
        raise UndefinedMetric("no samples")
    sens = sensitivity(cm)
    spec = specificity(cm)
    return (cm.tp + cm.tn) / cm.total, sens, spec, cm.fp / (cm.fp + cm.tn)


def roc_auc(scores, y_true) -> tuple[RocCurve, float]:
    """Exact ROC over the distinct scores, and its trapezoidal area.

    Tied scores form a single curve point, so the area equals the
    Mann-Whitney statistic with ties counted one half.
    """
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    t = _binary(y_true, "y_true")
    if s.size != t.size:
        raise LengthMismatch(f"{s.size} scores for {t.size} labels")
    if not np.isfinite(s).all():
        raise ValueError("scores must be finite")
    n_pos = int(t.sum())
    n_neg = t.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise OneClassOnly("ROC needs both classes in y_true")
    order = np.argsort(-s, kind="stable")
    s, t = s[order], t[order]
    last = np.r_[np.flatnonzero(np.diff(s) != 0), s.size - 1]
    tps = np.cumsum(t)[last]
    fps = (last + 1) - tps
    tpr = np.r_[0, tps] / n_pos
    fpr = np.r_[0, fps] / n_neg
    # integer trapezoid sum keeps the area exact up to one final division
    area2 = np.sum((fps[1:] - fps[:-1]) * (tps[1:] + tps[:-1])) + fps[0] * tps[0]
    auc = float(area2) / (2.0 * n_pos * n_neg)
    curve = RocCurve(tuple(fpr.tolist()), tuple(tpr.tolist()), tuple(s[last].tolist()))
    return curve, auc


def evaluate(scores, y_true, threshold: float = 0.5) -> MetricsReport:
    """All reported measures for one test set."""
    scores = np.asarray(scores, dtype=np.float64)
    cm = confusion(y_true, (scores >= threshold).astype(np.int64))
    acc, sens, spec, fpr = basic_rates(cm)
    _, auc = roc_auc(scores, y_true)
    return MetricsReport(acc, auc, sens, spec, fpr, g_mean_from_rates(sens, spec))
