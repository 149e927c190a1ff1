"""Binary classification metrics with residential (1) as the positive class."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import UndefinedMetricError


class Score(float):
    """A float that remembers whether its denominator was zero."""

    zero_division: bool

    def __new__(cls, value, zero_division=False):
        obj = super().__new__(cls, value)
        obj.zero_division = zero_division
        return obj

    def __repr__(self):
        flag = ", zero_division" if self.zero_division else ""
        return f"Score({float(self)!r}{flag})"


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self):
        return self.tp + self.fp + self.fn + self.tn

    def swapped(self) -> "ConfusionMatrix":
        """Same predictions scored with the other class as positive."""
        return ConfusionMatrix(tp=self.tn, fp=self.fn, fn=self.fp, tn=self.tp)

    def as_matrix(self):
        """[[tn, fp], [fn, tp]] (rows = truth, columns = prediction)."""
        return [[self.tn, self.fp], [self.fn, self.tp]]


def confusion(labels_true, labels_pred, positive_class=1) -> ConfusionMatrix:
    t = np.asarray(labels_true)
    p = np.asarray(labels_pred)
    if t.shape != p.shape:
        raise ValueError(f"length mismatch: {t.shape} vs {p.shape}")
    bad = ~np.isin(t, (0, 1)) | ~np.isin(p, (0, 1))
    if bad.any():
        raise ValueError("labels must be 0 or 1")
    tpos = t == positive_class
    ppos = p == positive_class
    return ConfusionMatrix(
        tp=int(np.sum(tpos & ppos)), fp=int(np.sum(~tpos & ppos)),
        fn=int(np.sum(tpos & ~ppos)), tn=int(np.sum(~tpos & ~ppos)))


def accuracy(cm: ConfusionMatrix) -> float:
    if cm.total == 0:
        raise UndefinedMetricError("accuracy of an empty confusion matrix")
    return (cm.tp + cm.tn) / cm.total


def _ratio(num, den) -> Score:
    if den == 0:
        return Score(0.0, zero_division=True)
    return Score(num / den)


def precision(cm: ConfusionMatrix) -> Score:
    return _ratio(cm.tp, cm.tp + cm.fp)


def recall(cm: ConfusionMatrix) -> Score:
    return _ratio(cm.tp, cm.tp + cm.fn)


def f1(cm: ConfusionMatrix) -> Score:
    # 2PR/(P+R) reduces to 2tp/(2tp+fp+fn) whenever P+R > 0, i.e. tp > 0;
    # the integer form is a single correctly rounded division.
    if cm.tp == 0:
        return Score(0.0, zero_division=True)
    return Score(2 * cm.tp / (2 * cm.tp + cm.fp + cm.fn))


def scores(cm: ConfusionMatrix) -> dict:
    p, r, f = precision(cm), recall(cm), f1(cm)
    flags = [name for name, s in (("precision", p), ("recall", r), ("f1", f)) if s.zero_division]
    return {"precision": float(p), "recall": float(r), "f1": float(f), "zero_division": flags}


CLASS_NAMES = {0: "non_residential", 1: "residential"}


def class_report(labels_true, labels_pred) -> dict:
    """Per-class P/R/F1 plus macro and support-weighted averages."""
    cm = confusion(labels_true, labels_pred, positive_class=1)
    per_class = {}
    for cls, m in ((0, cm.swapped()), (1, cm)):
        entry = scores(m)
        entry["support"] = m.tp + m.fn
        per_class[CLASS_NAMES[cls]] = entry
    keys = ("precision", "recall", "f1")
    macro = {k: sum(per_class[c][k] for c in per_class) / 2 for k in keys}
    total = sum(per_class[c]["support"] for c in per_class)
    if total:
        weighted = {k: sum(per_class[c][k] * per_class[c]["support"] for c in per_class) / total
                    for k in keys}
    else:
        weighted = {k: 0.0 for k in keys}
    return {
        "per_class": per_class,
        "macro": macro,
        "weighted": weighted,
        "accuracy": accuracy(cm) if cm.total else None,
        "confusion": cm.as_matrix(),
    }


@dataclass(frozen=True)
class RocCurve:
    fpr: tuple
    tpr: tuple
    thresholds: tuple
    auc: float


def roc_auc(labels_true, scores_) -> RocCurve:
    """ROC points over all distinct thresholds and the Mann-Whitney AUC."""
    y = np.asarray(labels_true)
    s = np.asarray(scores_, dtype=np.float64)
    if y.shape != s.shape:
        raise ValueError(f"length mismatch: {y.shape} vs {s.shape}")
    pos = int(np.sum(y == 1))
    neg = int(np.sum(y == 0))
    if pos == 0 or neg == 0:
        raise UndefinedMetricError("AUC needs at least one positive and one negative")

    # average ranks, ties share the mean rank
    order = np.argsort(s, kind="mergesort")
    sorted_s = s[order]
    ranks = np.empty(len(s), dtype=np.float64)
    i = 0
    while i < len(s):
        j = i
        while j + 1 < len(s) and sorted_s[j + 1] == sorted_s[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    u = ranks[y == 1].sum() - pos * (pos + 1) / 2.0
    auc = u / (pos * neg)

    desc = np.argsort(-s, kind="mergesort")
    ds = s[desc]
    yd = y[desc]
    last = np.r_[np.nonzero(np.diff(ds))[0], len(ds) - 1]  # end of each tie group
    tps = np.cumsum(yd == 1)[last]
    fps = np.cumsum(yd == 0)[last]
    tpr = [0.0] + [float(v) for v in tps / pos]
    fpr = [0.0] + [float(v) for v in fps / neg]
    thresholds = ds[last]
    return RocCurve(tuple(fpr), tuple(tpr), (float("inf"),) + tuple(float(t) for t in thresholds), float(auc))
