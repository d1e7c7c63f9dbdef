"""Detection evaluation: IoU matching, precision/recall/F1, AP and mAP.

Class labels are compared as whole strings, so ``dynamicCar`` and
``staticCar`` are distinct classes.
"""
from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from occfusion.errors import InvariantViolation
from occfusion.model import BoundingBox2D, FusedObject

log = logging.getLogger(__name__)

DEFAULT_IOU_THRESHOLD = 0.5
DEFAULT_CUTOFF_M = 30.0


@dataclass(frozen=True)
class GroundTruthObject:
    frame_id: int
    class_label: str
    box: BoundingBox2D
    longitudinal_distance: Optional[float] = None

    def __post_init__(self):
        if self.frame_id < 0:
            raise InvariantViolation("frame_id must be non-negative")


@dataclass(frozen=True)
class Prediction:
    frame_id: int
    class_label: str
    box: BoundingBox2D
    longitudinal_distance: Optional[float] = None

    @property
    def confidence(self) -> float:
        return self.box.confidence

    @classmethod
    def from_fused(cls, obj: FusedObject) -> "Prediction":
        return cls(obj.frame_id, obj.evaluation_label, obj.source_box, obj.position[0])


@dataclass(frozen=True)
class ClassMetrics:
    class_label: str
    precision: float
    recall: float
    f1: float
    ap: float
    tp: int
    fp: int
    fn: int

    @classmethod
    def from_counts(cls, class_label: str, tp: int, fp: int, fn: int, ap: float = 0.0):
        precision = 100.0 * tp / (tp + fp) if tp + fp else 0.0
        recall = 100.0 * tp / (tp + fn) if tp + fn else 0.0
        return cls(class_label, precision, recall, f1_score(precision, recall), ap, tp, fp, fn)


def f1_score(precision: float, recall: float) -> float:
    s = precision + recall
    return 2.0 * precision * recall / s if s > 0 else 0.0


@dataclass(frozen=True)
class PRCurve:
    """(confidence, recall, precision) triples by descending confidence."""

    confidence: np.ndarray
    recall: np.ndarray
    precision: np.ndarray

    def __len__(self):
        return len(self.recall)

    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.recall.tolist(), self.precision.tolist()))


def iou(a: BoundingBox2D, b: BoundingBox2D) -> float:
    iw = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    ih = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


def longitudinal_filter(objects: Iterable, cutoff: float) -> list:
    """Keep objects within ``cutoff`` metres ahead; objects without a distance are kept."""
    if not cutoff > 0:
        raise ValueError("cutoff must be positive")
    return [o for o in objects
            if o.longitudinal_distance is None or o.longitudinal_distance <= cutoff]


def _by_confidence(preds: Sequence[Prediction]) -> list[int]:
    # stable: equal confidences keep input order
    return sorted(range(len(preds)), key=lambda i: -preds[i].confidence)


def _greedy_match(preds, gts, iou_threshold) -> tuple[list[int], list[bool], list[bool]]:
    if not 0 < iou_threshold <= 1:
        raise ValueError("iou_threshold must be in (0, 1]")
    frames = {o.frame_id for o in (*preds, *gts)}
    if len(frames) > 1:
        raise ValueError(f"cannot match across frames {sorted(frames)}")
    order = _by_confidence(preds)
    pred_hit = [False] * len(preds)
    gt_used = [False] * len(gts)
    for i in order:
        p = preds[i]
        best, best_iou = -1, iou_threshold
        for j, g in enumerate(gts):
            if gt_used[j] or g.class_label != p.class_label:
                continue
            o = iou(p.box, g.box)
            if o > best_iou or (o == best_iou and best < 0):
                best, best_iou = j, o
        if best >= 0:
            gt_used[best] = True
            pred_hit[i] = True
    return order, pred_hit, gt_used


def match_frame(preds: Sequence[Prediction], gts: Sequence[GroundTruthObject],
                iou_threshold: float = DEFAULT_IOU_THRESHOLD) -> tuple[list, list, list]:
    """Greedy matching by descending confidence.

    Each prediction takes the unmatched same-class ground truth with the
    highest IoU at or above the threshold (lowest index on ties). Returns
    (TP predictions, FP predictions, FN ground truths); TP and FP keep
    confidence order.
    """
    order, pred_hit, gt_used = _greedy_match(preds, gts, iou_threshold)
    tp = [preds[i] for i in order if pred_hit[i]]
    fp = [preds[i] for i in order if not pred_hit[i]]
    fn = [g for g, used in zip(gts, gt_used) if not used]
    return tp, fp, fn


def pr_curve(hits: Sequence[bool], n_gt: int, confidences: Optional[Sequence[float]] = None) -> PRCurve:
    hits = np.asarray(hits, dtype=bool)
    tp = np.cumsum(hits)
    fp = np.cumsum(~hits)
    recall = tp / n_gt if n_gt > 0 else np.zeros(len(hits))
    precision = tp / np.maximum(tp + fp, 1)
    conf = np.asarray(confidences if confidences is not None else np.full(len(hits), np.nan), float)
    return PRCurve(conf, recall, precision)


def average_precision(hits: Sequence[bool], n_gt: int, method: str = "all_points") -> float:
    """AP of a confidence-ordered TP/FP sequence.

    ``all_points`` integrates the monotone precision envelope over recall;
    ``11_point`` averages the envelope at recall 0, 0.1, ..., 1.
    """
    if n_gt < 0:
        raise ValueError("n_gt must be non-negative")
    if n_gt == 0 or len(hits) == 0:
        return 0.0
    curve = pr_curve(hits, n_gt)
    if method == "11_point":
        total = 0.0
        for t in np.linspace(0.0, 1.0, 11):
            above = curve.precision[curve.recall >= t]
            total += above.max() if above.size else 0.0
        return float(total / 11.0)
    if method != "all_points":
        raise ValueError(f"unknown AP method {method!r}")
    mrec = np.concatenate([[0.0], curve.recall, [1.0]])
    mpre = np.concatenate([[0.0], curve.precision, [0.0]])
    mpre = np.maximum.accumulate(mpre[::-1])[::-1]
    step = np.flatnonzero(mrec[1:] != mrec[:-1]) + 1
    return float(np.sum((mrec[step] - mrec[step - 1]) * mpre[step]))


@dataclass
class ClassTally:
    """Per-class counts that merge associatively across frames."""

    n_gt: int = 0
    fn: int = 0
    # (confidence, frame_id, rank within frame, is_tp)
    scored: list = field(default_factory=list)

    def merge(self, other: "ClassTally") -> "ClassTally":
        return ClassTally(self.n_gt + other.n_gt, self.fn + other.fn, self.scored + other.scored)

    def ordered_hits(self) -> tuple[list[bool], list[float]]:
        ranked = sorted(self.scored, key=lambda s: (-s[0], s[1], s[2]))
        return [s[3] for s in ranked], [s[0] for s in ranked]


@dataclass
class EvaluationResult:
    per_class: dict[str, ClassMetrics]
    mean_ap: float
    curves: dict[str, PRCurve]
    label_mismatches: list[Prediction] = field(default_factory=list)


def tally_frame(preds, gts, iou_threshold) -> dict[str, ClassTally]:
    tallies: dict[str, ClassTally] = defaultdict(ClassTally)
    order, pred_hit, gt_used = _greedy_match(preds, gts, iou_threshold)
    for g, used in zip(gts, gt_used):
        t = tallies[g.class_label]
        t.n_gt += 1
        t.fn += not used
    for rank, i in enumerate(order):
        p = preds[i]
        tallies[p.class_label].scored.append((p.confidence, p.frame_id, rank, pred_hit[i]))
    return dict(tallies)


def merge_tallies(parts: Iterable[dict[str, ClassTally]]) -> dict[str, ClassTally]:
    out: dict[str, ClassTally] = {}
    for part in parts:
        for label, t in part.items():
            out[label] = out[label].merge(t) if label in out else t
    return out


def metrics_from_tallies(tallies: dict[str, ClassTally], gt_labels: Iterable[str],
                         ap_method: str = "all_points") -> tuple[dict[str, ClassMetrics], float, dict[str, PRCurve]]:
    per_class, curves = {}, {}
    for label in sorted(set(tallies) | set(gt_labels)):
        t = tallies.get(label, ClassTally())
        hits, conf = t.ordered_hits()
        n_tp = sum(hits)
        ap = average_precision(hits, t.n_gt, ap_method)
        per_class[label] = ClassMetrics.from_counts(label, n_tp, len(hits) - n_tp, t.fn, ap)
        curves[label] = pr_curve(hits, t.n_gt, conf)
    present = [m.ap for label, m in per_class.items() if tallies.get(label, ClassTally()).n_gt > 0]
    mean_ap = float(np.mean(present)) if present else 0.0
    return per_class, mean_ap, curves


def evaluate(preds: Sequence[Prediction], gts: Sequence[GroundTruthObject],
             iou_threshold: float = DEFAULT_IOU_THRESHOLD, cutoff: float = DEFAULT_CUTOFF_M,
             ap_method: str = "all_points") -> EvaluationResult:
    """Per-class metrics and mAP over classes with at least one ground truth in range."""
    vocabulary = {g.class_label for g in gts}
    mismatches = [p for p in preds if p.class_label not in vocabulary]
    for p in mismatches:
        log.warning("prediction label %r (frame %d) not in ground-truth vocabulary",
                    p.class_label, p.frame_id)
    preds = longitudinal_filter(preds, cutoff)
    gts = longitudinal_filter(gts, cutoff)
    by_frame_p, by_frame_g = defaultdict(list), defaultdict(list)
    for p in preds:
        by_frame_p[p.frame_id].append(p)
    for g in gts:
        by_frame_g[g.frame_id].append(g)
    frames = sorted(set(by_frame_p) | set(by_frame_g))
    tallies = merge_tallies(
        tally_frame(by_frame_p[f], by_frame_g[f], iou_threshold) for f in frames
    )
    per_class, mean_ap, curves = metrics_from_tallies(tallies, vocabulary, ap_method)
    return EvaluationResult(per_class, mean_ap, curves, mismatches)
