"""Box geometry, greedy and cardinality-constrained NMS, detection metrics.

The adaptive NMS sweeps the overlap threshold upward from its starting
value until the greedy pass keeps at least the requested number of boxes.
Note that the kept count of greedy NMS is *not* monotone in the threshold
(a suppressed box can shadow others), so the sweep stops at the first
qualifying threshold instead of bisecting.

Matching and the log-average miss rate follow the usual detection
benchmark protocol: greedy one-to-one matching in descending score order,
miss rate sampled at 9 log-spaced false-positives-per-image reference
points in [1e-2, 1] and averaged in log space with a 1e-10 floor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NumericError
from .mlmetrics import f1_score

__all__ = [
    "BoxDetection",
    "NMSConfig",
    "MatchResult",
    "iou",
    "greedy_nms",
    "adaptive_nms",
    "match_detections",
    "log_avg_miss_rate",
    "miss_rate_curve",
    "detection_f1",
    "best_f1_over_thresholds",
]

MISS_RATE_FLOOR = 1e-10
FPPI_REFERENCES = tuple(10.0 ** e for e in np.linspace(-2.0, 0.0, 9))


@dataclass(frozen=True)
class BoxDetection:
    """Axis-aligned box with a confidence score in [0,1]."""

    x1: float
    y1: float
    x2: float
    y2: float
    score: float = 1.0

    def __post_init__(self) -> None:
        for name in ("x1", "y1", "x2", "y2", "score"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise NumericError(f"box field {name} must be finite, got {v!r}")
            object.__setattr__(self, name, v)
        if self.x2 <= self.x1 or self.y2 <= self.y1:
            raise NumericError(f"box must have positive extent: {self!r}")
        if not 0.0 <= self.score <= 1.0:
            raise NumericError(f"score must lie in [0,1]: {self.score!r}")

    @property
    def area(self) -> float:
        return (self.x2 - self.x1) * (self.y2 - self.y1)


@dataclass(frozen=True)
class NMSConfig:
    """Threshold sweep for the cardinality-constrained NMS."""

    t0: float = 0.4
    step: float = 0.01
    t_max: float = 0.95

    def __post_init__(self) -> None:
        if not 0.0 <= self.t0 <= self.t_max < 1.0:
            raise NumericError(f"need 0 <= t0 <= t_max < 1, got {self.t0!r}, {self.t_max!r}")
        if self.step <= 0.0:
            raise NumericError(f"step must be > 0, got {self.step!r}")


@dataclass(frozen=True)
class MatchResult:
    """Per-image matching outcome.

    ``flags`` lists (score, is_true_positive) for every detection in
    descending score order; curves are built from these.
    """

    tp: int
    fp: int
    fn: int
    flags: tuple[tuple[float, bool], ...] = ()

    def __post_init__(self) -> None:
        if min(self.tp, self.fp, self.fn) < 0:
            raise NumericError("counts must be non-negative")

    @property
    def n_gt(self) -> int:
        return self.tp + self.fn


def iou(a: BoxDetection, b: BoxDetection) -> float:
    """Intersection area over union area, in [0,1]."""
    ix = min(a.x2, b.x2) - max(a.x1, b.x1)
    iy = min(a.y2, b.y2) - max(a.y1, b.y1)
    if ix <= 0.0 or iy <= 0.0:
        return 0.0
    inter = ix * iy
    return inter / (a.area + b.area - inter)


def _by_score(boxes: list[BoxDetection]) -> list[BoxDetection]:
    # Stable sort: equal scores keep input order.
    return sorted(boxes, key=lambda bx: -bx.score)


def greedy_nms(boxes: list[BoxDetection], t: float) -> list[BoxDetection]:
    """Score-descending sweep keeping boxes whose IoU with every kept box is <= t."""
    if not 0.0 <= t < 1.0:
        raise NumericError(f"threshold must lie in [0,1), got {t!r}")
    kept: list[BoxDetection] = []
    for box in _by_score(boxes):
        if all(iou(box, k) <= t for k in kept):
            kept.append(box)
    return kept


def adaptive_nms(
    boxes: list[BoxDetection], m_star: int | None, cfg: NMSConfig = NMSConfig()
) -> list[BoxDetection]:
    """Raise the NMS threshold until at least m_star boxes survive.

    Sweeps t = t0, t0+step, ... up to t_max and stops at the first
    threshold whose greedy pass keeps >= m_star boxes; the top-m_star by
    score are returned.  If no threshold qualifies, all survivors of the
    final threshold are returned (fewer than m_star).  ``m_star=None``
    lifts the constraint and returns the survivors of t0 unchanged.
    """
    if m_star is not None and m_star < 0:
        raise NumericError(f"m_star must be >= 0, got {m_star!r}")
    if m_star == 0:
        return []
    n_steps = int(math.floor((cfg.t_max - cfg.t0) / cfg.step + 1e-9))
    kept: list[BoxDetection] = []
    for k in range(n_steps + 1):
        t = min(cfg.t0 + k * cfg.step, cfg.t_max)
        kept = greedy_nms(boxes, t)
        if m_star is not None and len(kept) >= m_star:
            return kept[:m_star]
        if m_star is None:
            return kept
    return kept if m_star is None else kept[:m_star]


def match_detections(
    dets: list[BoxDetection], gts: list[BoxDetection], iou_thresh: float
) -> MatchResult:
    """Greedy one-to-one matching in descending score order.

    A detection is a true positive when its best-overlap unmatched ground
    truth reaches ``iou_thresh``; equal overlaps resolve to the lower
    ground-truth index.  Ground truths left unmatched count as misses.
    """
    if not 0.0 < iou_thresh < 1.0:
        raise NumericError(f"iou_thresh must lie in (0,1), got {iou_thresh!r}")
    taken = [False] * len(gts)
    flags: list[tuple[float, bool]] = []
    tp = 0
    for det in _by_score(dets):
        best_i, best_v = -1, 0.0
        for gi, gt in enumerate(gts):
            if taken[gi]:
                continue
            v = iou(det, gt)
            if v > best_v:
                best_i, best_v = gi, v
        if best_i >= 0 and best_v >= iou_thresh:
            taken[best_i] = True
            tp += 1
            flags.append((det.score, True))
        else:
            flags.append((det.score, False))
    fn = len(gts) - tp
    return MatchResult(tp=tp, fp=len(dets) - tp, fn=fn, flags=tuple(flags))


def miss_rate_curve(
    matches: list[MatchResult], n_images: int
) -> tuple[np.ndarray, np.ndarray]:
    """Miss rate and FPPI at every score threshold, descending by threshold."""
    total_gt = sum(m.n_gt for m in matches)
    all_flags = [fl for m in matches for fl in m.flags]
    if not all_flags:
        return np.asarray([1.0]), np.asarray([0.0])
    all_flags.sort(key=lambda f: -f[0])
    scores = np.asarray([f[0] for f in all_flags])
    is_tp = np.asarray([f[1] for f in all_flags], dtype=float)
    cum_tp = np.cumsum(is_tp)
    cum_fp = np.cumsum(1.0 - is_tp)
    # Operating points sit at each distinct score (threshold = that score,
    # keeping every detection scored >= it).
    last = np.flatnonzero(np.diff(scores, append=-np.inf) != 0.0)
    miss = 1.0 - cum_tp[last] / total_gt
    fppi = cum_fp[last] / n_images
    # Prepend the empty operating point (threshold above every score).
    return np.concatenate([[1.0], miss]), np.concatenate([[0.0], fppi])


def log_avg_miss_rate(matches: list[MatchResult], n_images: int) -> float:
    """Geometric mean of the miss rate at 9 log-spaced FPPI references.

    For each reference the miss rate of the operating point with the
    largest FPPI not exceeding it is used; rates are floored at 1e-10
    before the log average.
    """
    if n_images < 1:
        raise NumericError("n_images must be >= 1")
    if sum(m.n_gt for m in matches) == 0:
        raise NumericError("log-average miss rate is undefined without ground truth")
    miss, fppi = miss_rate_curve(matches, n_images)
    sampled = []
    for ref in FPPI_REFERENCES:
        # fppi is non-decreasing along the curve; the last point at or below
        # the reference has both the nearest FPPI and the lowest miss rate.
        idx = int(np.searchsorted(fppi, ref, side="right")) - 1
        mr = 1.0 if idx < 0 else float(miss[idx])
        sampled.append(max(mr, MISS_RATE_FLOOR))
    return float(math.exp(np.mean(np.log(sampled))))


def _aggregate_counts(matches: list[MatchResult]) -> tuple[int, int, int]:
    return (
        sum(m.tp for m in matches),
        sum(m.fp for m in matches),
        sum(m.fn for m in matches),
    )


def detection_f1(matches: list[MatchResult]) -> float:
    """F1 from aggregated counts; empty denominators count as 100%."""
    tp, fp, fn = _aggregate_counts(matches)
    precision = 1.0 if tp + fp == 0 else tp / (tp + fp)
    recall = 1.0 if tp + fn == 0 else tp / (tp + fn)
    return f1_score(precision, recall)


def best_f1_over_thresholds(matches: list[MatchResult]) -> float:
    """Highest F1 along the score-threshold sweep of the matched detections.

    The fixed-threshold baseline is evaluated this way (its best operating
    point), which is the strictest comparison for the adaptive variant.
    """
    total_gt = sum(m.n_gt for m in matches)
    all_flags = sorted((fl for m in matches for fl in m.flags), key=lambda f: -f[0])
    best = f1_score(1.0, 1.0 if total_gt == 0 else 0.0)  # empty-output point
    tp = fp = 0
    for i, (score, flag) in enumerate(all_flags):
        tp += int(flag)
        fp += int(not flag)
        if i + 1 < len(all_flags) and all_flags[i + 1][0] == score:
            continue
        precision = tp / (tp + fp)
        recall = 1.0 if total_gt == 0 else tp / total_gt
        best = max(best, f1_score(precision, recall))
    return best
