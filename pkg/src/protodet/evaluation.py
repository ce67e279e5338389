"""COCO-style average precision and the challenge's weighted score.

AP follows the COCO convention: greedy score-ordered matching (each GT
matchable once per IoU threshold), 101-point interpolated precision, IoU
thresholds 0.50:0.05:0.95, a single per-image detection cap (default 100),
and no area breakdown. Classes with zero ground truth are excluded from the
mean. Detections are canonically reordered before matching so results do not
depend on input order.

The challenge score aggregates nine per-(dataset, shot) mAP percentages:
twice the average of the 1-shot cells plus the averages of the 5-shot and
10-shot cells.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .boxes import Annotation, DatasetSplit, Detection, iou_matrix
from .errors import EmptyGroundTruthError

__all__ = [
    "EvalReport",
    "ScoreCard",
    "SHOTS",
    "coco_map",
    "challenge_score",
    "fbeta",
    "default_iou_thresholds",
]

SHOTS = (1, 5, 10)

RECALL_POINTS = np.linspace(0.0, 1.0, 101)


def default_iou_thresholds() -> np.ndarray:
    return np.linspace(0.5, 0.95, 10)


@dataclass(frozen=True)
class EvalReport:
    """Per-class AP (averaged over IoU thresholds) and their mean."""

    per_class_ap: dict[int, float]
    map: float
    iou_thresholds: tuple[float, ...]

    def to_dict(self) -> dict:
        return {
            "per_class_ap": {str(k): v for k, v in sorted(self.per_class_ap.items())},
            "map": self.map,
            "iou_thresholds": list(self.iou_thresholds),
        }


def _canonical_det_order(dets: list[Detection]) -> list[Detection]:
    return sorted(
        dets,
        key=lambda d: (-d.score, d.image_id, d.category_id, d.box.x, d.box.y, d.box.w, d.box.h),
    )


def _cap_per_image(dets: list[Detection], max_dets: int) -> list[Detection]:
    taken: dict[int, int] = {}
    out = []
    for d in dets:
        n = taken.get(d.image_id, 0)
        if n < max_dets:
            out.append(d)
            taken[d.image_id] = n + 1
    return out


def _ap_from_pr(recall: np.ndarray, precision: np.ndarray) -> float:
    """101-point interpolated AP from raw PR samples."""
    if recall.size == 0:
        return 0.0
    # Monotone precision envelope from the right, then sample at the fixed
    # recall grid: first PR sample whose recall reaches the grid point.
    prec = precision.copy()
    for i in range(prec.size - 1, 0, -1):
        prec[i - 1] = max(prec[i - 1], prec[i])
    idx = np.searchsorted(recall, RECALL_POINTS, side="left")
    sampled = np.where(idx < prec.size, prec[np.clip(idx, 0, prec.size - 1)], 0.0)
    return float(sampled.mean())


def _class_ap(
    dets: list[Detection],
    gts_by_image: dict[int, list[Annotation]],
    n_gt: int,
    thresholds: np.ndarray,
) -> float:
    """Mean AP over IoU thresholds for one class (dets pre-ordered)."""
    if n_gt == 0:
        raise ValueError("class must have ground truth")
    if not dets:
        return 0.0
    # IoU rows per detection against its image's GT list (canonical order).
    iou_rows: list[np.ndarray] = []
    for d in dets:
        gts = gts_by_image.get(d.image_id, [])
        if gts:
            iou_rows.append(iou_matrix([d.box], [g.box for g in gts])[0])
        else:
            iou_rows.append(np.zeros(0))

    aps = []
    for t in thresholds:
        matched: set[tuple[int, int]] = set()
        tp = np.zeros(len(dets))
        for di, d in enumerate(dets):
            row = iou_rows[di]
            best_iou, best_gi = 0.0, -1
            for gi in range(row.size):
                if (d.image_id, gi) in matched:
                    continue
                if row[gi] > best_iou:
                    best_iou, best_gi = float(row[gi]), gi
            if best_gi >= 0 and best_iou >= t:
                matched.add((d.image_id, best_gi))
                tp[di] = 1.0
        cum_tp = np.cumsum(tp)
        cum_fp = np.cumsum(1.0 - tp)
        recall = cum_tp / n_gt
        precision = cum_tp / (cum_tp + cum_fp)
        aps.append(_ap_from_pr(recall, precision))
    return float(np.mean(aps))


def coco_map(
    dets: list[Detection],
    gt: DatasetSplit,
    iou_thresholds: list[float] | np.ndarray | None = None,
    max_dets: int = 100,
) -> EvalReport:
    """COCO mAP of ``dets`` against a ground-truth split.

    Raises EmptyGroundTruthError when the split has no annotations. Classes
    without ground truth are excluded from the mean; classes without
    detections score 0.
    """
    if not gt.annotations:
        raise EmptyGroundTruthError("ground-truth split has no annotations")
    thresholds = (
        default_iou_thresholds() if iou_thresholds is None else np.asarray(iou_thresholds, float)
    )
    ordered = _cap_per_image(_canonical_det_order(dets), max_dets)

    gt_classes = sorted({a.category_id for a in gt.annotations})
    per_class: dict[int, float] = {}
    for cat in gt_classes:
        cat_gts = [a for a in gt.annotations if a.category_id == cat]
        gts_by_image: dict[int, list[Annotation]] = {}
        for a in sorted(cat_gts, key=lambda a: (a.box.x, a.box.y, a.box.w, a.box.h, a.annotation_id)):
            gts_by_image.setdefault(a.image_id, []).append(a)
        cat_dets = [d for d in ordered if d.category_id == cat]
        per_class[cat] = _class_ap(cat_dets, gts_by_image, len(cat_gts), thresholds)

    mean_ap = float(np.mean(list(per_class.values()))) if per_class else 0.0
    return EvalReport(
        per_class_ap=per_class,
        map=mean_ap,
        iou_thresholds=tuple(float(t) for t in thresholds),
    )


@dataclass(frozen=True)
class ScoreCard:
    """Nine (dataset, shot) mAP cells, as percentages, plus the weighted total."""

    cells: dict[tuple[str, int], float] = field(default_factory=dict)

    @property
    def datasets(self) -> list[str]:
        return sorted({d for d, _ in self.cells})

    @property
    def score(self) -> float:
        return challenge_score(self.cells)

    def to_dict(self) -> dict:
        return {
            "cells": {f"{d}_{k}shot": v for (d, k), v in sorted(self.cells.items())},
            "score": self.score,
        }


def challenge_score(cells: dict[tuple[str, int], float]) -> float:
    """Weighted total over nine (dataset, shot) mAP percentages.

    score = 2 * avg(1-shot cells) + avg(5-shot cells) + avg(10-shot cells),
    averaging across the three datasets within each shot group. All nine
    cells must be present and within [0, 100].
    """
    datasets = sorted({d for d, _ in cells})
    if len(datasets) != 3:
        raise ValueError(f"expected 3 datasets, got {datasets}")
    for d in datasets:
        for k in SHOTS:
            if (d, k) not in cells:
                raise ValueError(f"missing cell ({d}, {k}-shot)")
            v = cells[(d, k)]
            if not (0.0 <= v <= 100.0):
                raise ValueError(f"cell ({d}, {k}) = {v} outside [0, 100]")
    if len(cells) != 9:
        raise ValueError(f"expected 9 cells, got {len(cells)}")
    shot_avg = {k: sum(cells[(d, k)] for d in datasets) / 3.0 for k in SHOTS}
    return 2.0 * shot_avg[1] + shot_avg[5] + shot_avg[10]


def fbeta(tp: int, fp: int, fn: int, beta: float) -> float:
    """F_beta from match counts; 0 when precision/recall are undefined."""
    if beta <= 0:
        raise ValueError("beta must be > 0")
    if tp == 0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    b2 = beta * beta
    denom = b2 * precision + recall
    if denom == 0:
        return 0.0
    return (1.0 + b2) * precision * recall / denom
