"""Multi-label evaluation: per-class and overall precision/recall/F1.

Conventions (the "100% rule"): whenever a precision or recall denominator
is zero — nothing predicted, or no ground truth — the metric is defined as
1.0.  Per-class metrics (C-P, C-R) average class-level values over all
classes; overall metrics (O-P, O-R) come from corpus-level summed counts.
F1 is the harmonic mean of precision and recall at each level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import NumericError

__all__ = [
    "LabelSet",
    "EvalRecord",
    "MetricSummary",
    "f1_score",
    "precision_recall",
    "aggregate",
    "top_k_labels",
    "topk_sweep",
    "predicted_k_eval",
    "mce",
]


@dataclass(frozen=True)
class LabelSet:
    """Sorted unique category indices."""

    labels: tuple[int, ...]

    def __post_init__(self) -> None:
        labels = tuple(int(v) for v in self.labels)
        if any(v < 0 for v in labels):
            raise NumericError(f"labels must be >= 0: {labels!r}")
        if any(b <= a for a, b in zip(labels, labels[1:])):
            raise NumericError(f"labels must be strictly increasing: {labels!r}")
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return len(self.labels)

    def __contains__(self, item: int) -> bool:
        return item in self.labels


@dataclass(frozen=True)
class EvalRecord:
    """Per-example classifier scores plus the ground-truth label set."""

    scores: tuple[float, ...]
    truth: LabelSet

    def __post_init__(self) -> None:
        scores = tuple(float(s) for s in self.scores)
        if not all(math.isfinite(s) for s in scores):
            raise NumericError("scores must be finite")
        if self.truth.labels and self.truth.labels[-1] >= len(scores):
            raise NumericError(
                f"truth label {self.truth.labels[-1]} outside {len(scores)} categories"
            )
        object.__setattr__(self, "scores", scores)


@dataclass(frozen=True)
class MetricSummary:
    """The six headline numbers of one evaluation."""

    c_precision: float
    c_recall: float
    c_f1: float
    o_precision: float
    o_recall: float
    o_f1: float

    def as_dict(self) -> dict[str, float]:
        return {
            "C-P": self.c_precision,
            "C-R": self.c_recall,
            "C-F1": self.c_f1,
            "O-P": self.o_precision,
            "O-R": self.o_recall,
            "O-F1": self.o_f1,
        }


def f1_score(precision: float, recall: float) -> float:
    """Harmonic mean; 0 when both inputs are 0."""
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def precision_recall(pred: LabelSet, truth: LabelSet) -> tuple[float, float]:
    """Set-overlap precision and recall with the 100% rule for empty sets."""
    hits = len(set(pred.labels) & set(truth.labels))
    precision = 1.0 if len(pred) == 0 else hits / len(pred)
    recall = 1.0 if len(truth) == 0 else hits / len(truth)
    return precision, recall


def aggregate(
    preds: Sequence[LabelSet], truths: Sequence[LabelSet], n_classes: int
) -> MetricSummary:
    """Per-class averaged and corpus-level metrics over a prediction run.

    Every one of the ``n_classes`` categories contributes to the per-class
    averages; a class never predicted and never present scores 1.0 on both
    by the 100% rule.
    """
    if not preds or len(preds) != len(truths):
        raise NumericError("need equally many non-empty predictions and truths")
    tp_c = np.zeros(n_classes)
    pred_c = np.zeros(n_classes)
    gt_c = np.zeros(n_classes)
    for pred, truth in zip(preds, truths):
        if pred.labels and pred.labels[-1] >= n_classes:
            raise NumericError(f"prediction label {pred.labels[-1]} >= C={n_classes}")
        if truth.labels and truth.labels[-1] >= n_classes:
            raise NumericError(f"truth label {truth.labels[-1]} >= C={n_classes}")
        t = set(truth.labels)
        for c in pred.labels:
            pred_c[c] += 1
            if c in t:
                tp_c[c] += 1
        for c in truth.labels:
            gt_c[c] += 1
    prec_per_class = np.where(pred_c > 0, tp_c / np.maximum(pred_c, 1), 1.0)
    rec_per_class = np.where(gt_c > 0, tp_c / np.maximum(gt_c, 1), 1.0)
    c_p = float(prec_per_class.mean())
    c_r = float(rec_per_class.mean())
    tp, npred, ngt = tp_c.sum(), pred_c.sum(), gt_c.sum()
    o_p = 1.0 if npred == 0 else float(tp / npred)
    o_r = 1.0 if ngt == 0 else float(tp / ngt)
    return MetricSummary(
        c_precision=c_p,
        c_recall=c_r,
        c_f1=f1_score(c_p, c_r),
        o_precision=o_p,
        o_recall=o_r,
        o_f1=f1_score(o_p, o_r),
    )


def top_k_labels(scores: Sequence[float], k: int) -> LabelSet:
    """The k highest-scored categories; ties resolve to the lower index."""
    if k < 0 or k > len(scores):
        raise NumericError(f"k must lie in [0, {len(scores)}], got {k!r}")
    if k == 0:
        return LabelSet(labels=())
    order = np.argsort(-np.asarray(scores), kind="stable")
    return LabelSet(labels=tuple(sorted(int(i) for i in order[:k])))


def topk_sweep(
    records: Sequence[EvalRecord], k_values: Sequence[int]
) -> list[tuple[int, MetricSummary]]:
    """Fixed-k evaluation for each requested k."""
    if not records:
        raise NumericError("records must be non-empty")
    n_classes = len(records[0].scores)
    truths = [r.truth for r in records]
    out = []
    for k in k_values:
        preds = [top_k_labels(r.scores, k) for r in records]
        out.append((int(k), aggregate(preds, truths, n_classes)))
    return out


def predicted_k_eval(
    records: Sequence[EvalRecord], m_stars: Sequence[int]
) -> MetricSummary:
    """Evaluation at per-record predicted cardinalities."""
    if len(records) != len(m_stars):
        raise NumericError(
            f"got {len(m_stars)} cardinalities for {len(records)} records"
        )
    if not records:
        raise NumericError("records must be non-empty")
    n_classes = len(records[0].scores)
    preds = [
        top_k_labels(r.scores, min(int(k), len(r.scores)))
        for r, k in zip(records, m_stars)
    ]
    return aggregate(preds, [r.truth for r in records], n_classes)


def mce(predicted: Sequence[int], truth: Sequence[int]) -> tuple[float, float]:
    """Mean absolute cardinality error and its population standard deviation."""
    if len(predicted) != len(truth) or not predicted:
        raise NumericError("predicted and truth must have equal positive length")
    err = np.abs(np.asarray(predicted, dtype=float) - np.asarray(truth, dtype=float))
    return float(err.mean()), float(err.std())
