"""Pseudo-label selection, threshold optimization, GT merging, and scoring.

Selection is strict (score > tau) following the published selection rule,
unlike the inclusive detection-score filters in postprocess. Ground truth
always survives merging: GT entries carry an implicit confidence of 1.0 and
are exempt from suppression.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .boxes import Annotation, DatasetSplit, Detection, iou
from .evaluation import coco_map, fbeta

__all__ = [
    "SENTINEL_TAU",
    "PseudoLabelPolicy",
    "select_pseudo",
    "optimize_thresholds",
    "merge_with_gt",
    "fsod_map",
    "confidence_floor",
]

# Scores live in [0, 1]; a tau above 1 selects nothing under the strict rule.
SENTINEL_TAU = 1.0 + 1e-6


@dataclass(frozen=True)
class PseudoLabelPolicy:
    """Knobs for promoting detections into support annotations.

    ``dedup_iou_gt`` removes pseudo-labels overlapping a same-class GT box
    with IoU strictly above the threshold; ``dedup_iou_support`` removes
    pseudo-labels overlapping any existing support annotation at IoU >=
    threshold. Either rule can be disabled with None. ``merge_mode``
    "class_agnostic_nms" additionally suppresses surviving pseudo-labels
    against the GT-priority pool at ``nms_iou``; "append" keeps them all.
    """

    tau: float = 0.5
    beta: float = 0.5
    dedup_iou_gt: float | None = 0.8
    dedup_iou_support: float | None = 0.70
    merge_mode: str = "class_agnostic_nms"
    nms_iou: float = 0.5

    def __post_init__(self) -> None:
        if not (0.0 <= self.tau <= 1.0):
            raise ValueError(f"tau {self.tau} outside [0, 1]")
        if self.beta <= 0:
            raise ValueError("beta must be > 0")
        for name in ("dedup_iou_gt", "dedup_iou_support"):
            v = getattr(self, name)
            if v is not None and not (0.0 < v <= 1.0):
                raise ValueError(f"{name} must be in (0, 1] or None")
        if self.merge_mode not in ("class_agnostic_nms", "append"):
            raise ValueError(f"unknown merge_mode {self.merge_mode!r}")


def select_pseudo(dets: list[Detection], tau: float) -> list[Detection]:
    """Keep detections with score strictly above tau."""
    return [d for d in dets if d.score > tau]


def _greedy_match_counts(
    dets: list[Detection],
    gts: list[Annotation],
    iou_match: float,
) -> tuple[int, int, int]:
    """(tp, fp, fn) under greedy highest-score-first matching, each GT once."""
    matched: set[int] = set()
    tp = 0
    ordered = sorted(dets, key=lambda d: (-d.score, d.image_id, d.box.x, d.box.y))
    for d in ordered:
        best_iou, best_g = 0.0, -1
        for gi, g in enumerate(gts):
            if gi in matched or g.image_id != d.image_id:
                continue
            ov = iou(d.box, g.box)
            if ov > best_iou:
                best_iou, best_g = ov, gi
        if best_g >= 0 and best_iou >= iou_match:
            matched.add(best_g)
            tp += 1
    fp = len(dets) - tp
    fn = len(gts) - tp
    return tp, fp, fn


def optimize_thresholds(
    dets: list[Detection],
    gt: DatasetSplit,
    beta: float = 0.5,
    iou_match: float = 0.5,
) -> dict[int, float]:
    """Per-class tau maximizing F_beta of greedy IoU matching.

    Candidate cut points are the observed scores of each class: for a cut at
    score s the strict selection rule must admit s itself, so the candidate
    tau is nudged just below s (math.nextafter). The sentinel tau (> 1,
    selecting nothing) is always a candidate and wins for classes with no
    useful detections. Ties resolve to the highest tau, favoring precision.
    """
    if beta <= 0:
        raise ValueError("beta must be > 0")
    out: dict[int, float] = {}
    gt_by_class: dict[int, list[Annotation]] = {}
    for a in gt.annotations:
        gt_by_class.setdefault(a.category_id, []).append(a)
    dets_by_class: dict[int, list[Detection]] = {}
    for d in dets:
        dets_by_class.setdefault(d.category_id, []).append(d)

    for cat in sorted(gt_by_class):
        cat_dets = dets_by_class.get(cat, [])
        if not cat_dets:
            out[cat] = SENTINEL_TAU
            continue
        candidates = sorted({math.nextafter(d.score, -math.inf) for d in cat_dets})
        candidates.append(SENTINEL_TAU)
        best_tau, best_f = SENTINEL_TAU, -1.0
        for tau in candidates:
            selected = select_pseudo(cat_dets, tau)
            tp, fp, fn = _greedy_match_counts(selected, gt_by_class[cat], iou_match)
            f = fbeta(tp, fp, fn, beta)
            if f > best_f or (f == best_f and tau > best_tau):
                best_tau, best_f = tau, f
        out[cat] = best_tau
    return out


def merge_with_gt(
    pseudo: list[Detection],
    gt: list[Annotation],
    policy: PseudoLabelPolicy = PseudoLabelPolicy(),
) -> list[Annotation]:
    """Fold pseudo-labels into an annotation set without ever losing GT.

    Pseudo entries are first deduplicated against GT (same-class IoU strictly
    above ``dedup_iou_gt``; any-class IoU at or above ``dedup_iou_support``),
    then, in class_agnostic_nms mode, greedily suppressed against the
    GT-first pool at ``nms_iou``. Survivors get fresh annotation ids and
    is_ground_truth=False.
    """
    survivors: list[Detection] = []
    for p in pseudo:
        drop = False
        for g in gt:
            if g.image_id != p.image_id:
                continue
            ov = iou(p.box, g.box)
            if (
                policy.dedup_iou_gt is not None
                and g.category_id == p.category_id
                and ov > policy.dedup_iou_gt
            ):
                drop = True
                break
            if policy.dedup_iou_support is not None and ov >= policy.dedup_iou_support:
                drop = True
                break
        if not drop:
            survivors.append(p)

    kept_pseudo: list[Detection] = []
    if policy.merge_mode == "class_agnostic_nms":
        ordered = sorted(
            survivors, key=lambda d: (-d.score, d.image_id, d.box.x, d.box.y, d.box.w, d.box.h)
        )
        for p in ordered:
            pool = [g.box for g in gt if g.image_id == p.image_id]
            pool += [k.box for k in kept_pseudo if k.image_id == p.image_id]
            if all(iou(p.box, b) <= policy.nms_iou for b in pool):
                kept_pseudo.append(p)
    else:
        kept_pseudo = survivors

    next_id = max((g.annotation_id for g in gt), default=0) + 1
    merged = list(gt)
    for p in kept_pseudo:
        merged.append(
            Annotation(
                image_id=p.image_id,
                box=p.box,
                category_id=p.category_id,
                annotation_id=next_id,
                is_ground_truth=False,
            )
        )
        next_id += 1
    return merged


def fsod_map(
    pseudo: list[Detection],
    few_shot_gt: DatasetSplit,
    iou_floor: float = 0.3,
) -> float:
    """Pseudo-label quality proxy: mAP of predictions anchored to the few shots.

    Predictions lacking a same-class few-shot GT overlap strictly above
    ``iou_floor`` are discarded as presumed false positives; the survivors
    are scored with COCO mAP against the few-shot ground truth.
    """
    if not few_shot_gt.annotations:
        raise ValueError("few_shot_gt must be nonempty")
    retained = []
    for d in pseudo:
        for g in few_shot_gt.annotations:
            if g.image_id == d.image_id and g.category_id == d.category_id:
                if iou(d.box, g.box) > iou_floor:
                    retained.append(d)
                    break
    return coco_map(retained, few_shot_gt).map


def confidence_floor(dets: list[Detection], floor: float = 0.8) -> list[Detection]:
    """Keep detections with score >= floor (inclusive)."""
    return [d for d in dets if d.score >= floor]
