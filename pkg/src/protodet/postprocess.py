"""Detection post-processing: suppression, fusion, thresholds, relabeling.

Threshold semantics, fixed across the module: detection-score filters keep
score >= threshold (inclusive), while pseudo-label selection elsewhere uses
strict >. NMS suppresses on IoU strictly greater than the threshold, so kept
same-class boxes never exceed it; ties at equal score are broken by input
index (earlier wins) for determinism.
"""
from __future__ import annotations

import math

import numpy as np

from .boxes import BBox, Detection, group_by_image, iou
from .embeddings import cosine
from .errors import UnknownPhraseError
from .prototypes import PrototypeSet

__all__ = [
    "nms",
    "soft_nms",
    "wbf",
    "multiscale_tta_merge",
    "threshold_filter",
    "size_filter",
    "topk_per_image",
    "restrict_classes",
    "phrase_map",
]


def _ordered_indices(dets: list[Detection]) -> list[int]:
    # Stable descending-score order: earlier input index wins ties.
    return sorted(range(len(dets)), key=lambda i: -dets[i].score)


def _suppression_key(det: Detection, class_agnostic: bool):
    return (det.image_id,) if class_agnostic else (det.image_id, det.category_id)


def nms(
    dets: list[Detection],
    iou_thresh: float = 0.5,
    class_agnostic: bool = False,
) -> list[Detection]:
    """Greedy non-maximum suppression, per class unless ``class_agnostic``."""
    kept: list[Detection] = []
    kept_by_key: dict[tuple, list[BBox]] = {}
    for i in _ordered_indices(dets):
        d = dets[i]
        key = _suppression_key(d, class_agnostic)
        if all(iou(d.box, kb) <= iou_thresh for kb in kept_by_key.get(key, ())):
            kept.append(d)
            kept_by_key.setdefault(key, []).append(d.box)
    return kept


def soft_nms(
    dets: list[Detection],
    sigma: float = 0.5,
    score_floor: float = 0.001,
    class_agnostic: bool = False,
) -> list[Detection]:
    """Gaussian score decay instead of hard suppression.

    Iteratively keeps the highest-scored remaining detection and rescales
    every remaining same-class (same-image) score by exp(-iou^2 / sigma).
    Detections whose final score falls below ``score_floor`` are dropped.
    """
    if sigma <= 0:
        raise ValueError("sigma must be > 0")
    order = _ordered_indices(dets)
    scores = {i: dets[i].score for i in order}
    remaining = list(order)
    kept: list[Detection] = []
    while remaining:
        # argmax over current (decayed) scores; earlier input index wins ties
        best = min(remaining, key=lambda i: (-scores[i], i))
        remaining.remove(best)
        d = dets[best]
        if scores[best] >= score_floor:
            kept.append(d.with_score(scores[best]))
        key = _suppression_key(d, class_agnostic)
        for j in remaining:
            if _suppression_key(dets[j], class_agnostic) == key:
                ov = iou(d.box, dets[j].box)
                scores[j] *= math.exp(-(ov * ov) / sigma)
    return kept


def _wbf_fuse_cluster(cluster: list[tuple[Detection, float]]) -> tuple[BBox, float, int, int]:
    """Confidence-weighted coordinate average and mean weighted score."""
    coords = np.array([d.box.corners for d, _ in cluster])
    eff = np.array([d.score * w for d, w in cluster])
    fused = (eff[:, None] * coords).sum(axis=0) / eff.sum()
    x1, y1, x2, y2 = fused
    det0 = cluster[0][0]
    return BBox(x1, y1, x2 - x1, y2 - y1), float(eff.mean()), det0.category_id, det0.image_id


def wbf(
    det_sets: list[list[Detection]],
    iou_thresh: float = 0.55,
    weights: list[float] | None = None,
) -> list[Detection]:
    """Weighted boxes fusion across model outputs, per the reference algorithm.

    Same-class boxes (within an image) are clustered against the running
    fused box at IoU >= ``iou_thresh``; the fused box is the score-weighted
    coordinate average and the fused score is the mean of the cluster's
    scores rescaled by min(cluster size, total weight) / total weight, so
    boxes confirmed by fewer models lose confidence.
    """
    if not det_sets:
        raise ValueError("need at least one detection set")
    if weights is None:
        weights = [1.0] * len(det_sets)
    if len(weights) != len(det_sets) or any(w <= 0 for w in weights):
        raise ValueError("weights must be positive, one per set")
    total_w = float(sum(weights))

    flat: list[tuple[Detection, float]] = []
    for dset, w in zip(det_sets, weights):
        flat.extend((d, w) for d in dset)
    order = sorted(range(len(flat)), key=lambda i: (-flat[i][0].score * flat[i][1], i))

    clusters: list[list[tuple[Detection, float]]] = []
    fused: list[tuple[BBox, float, int, int]] = []
    for i in order:
        d, w = flat[i]
        best_j, best_iou = -1, 0.0
        for j, (fbox, _, fcat, fimg) in enumerate(fused):
            if fcat != d.category_id or fimg != d.image_id:
                continue
            ov = iou(d.box, fbox)
            if ov >= iou_thresh and ov > best_iou:
                best_j, best_iou = j, ov
        if best_j < 0:
            clusters.append([(d, w)])
            fused.append(_wbf_fuse_cluster(clusters[-1]))
        else:
            clusters[best_j].append((d, w))
            fused[best_j] = _wbf_fuse_cluster(clusters[best_j])

    out = []
    for cluster, (box, mean_score, cat, img) in zip(clusters, fused):
        scale = min(float(len(cluster)), total_w) / total_w
        out.append(
            Detection(
                image_id=img,
                box=box,
                category_id=cat,
                score=float(np.clip(mean_score * scale, 0.0, 1.0)),
            )
        )
    out.sort(key=lambda d: (-d.score, d.image_id, d.category_id))
    return out


def multiscale_tta_merge(
    per_resolution_dets: list[list[Detection]],
    strategy: str = "nms",
    **kwargs,
) -> list[Detection]:
    """Merge per-resolution detections (already mapped back to original
    coordinates) with either plain NMS over the union or WBF."""
    if strategy == "nms":
        merged: list[Detection] = []
        for dset in per_resolution_dets:
            merged.extend(dset)
        return nms(merged, **kwargs)
    if strategy == "wbf":
        return wbf(per_resolution_dets, **kwargs)
    raise ValueError(f"unknown merge strategy {strategy!r}")


def threshold_filter(dets: list[Detection], box_threshold: float) -> list[Detection]:
    """Keep detections with score >= box_threshold (inclusive)."""
    if not (0.0 <= box_threshold <= 1.0):
        raise ValueError("box_threshold must be in [0, 1]")
    return [d for d in dets if d.score >= box_threshold]


def size_filter(
    dets: list[Detection],
    max_area_frac: float = 0.9,
    image_sizes: dict[int, tuple[int, int]] | None = None,
) -> list[Detection]:
    """Drop detections whose box covers more than ``max_area_frac`` of the image."""
    if image_sizes is None:
        raise ValueError("size_filter needs image_sizes")
    out = []
    for d in dets:
        w, h = image_sizes[d.image_id]
        if d.box.area / (w * h) <= max_area_frac:
            out.append(d)
    return out


def topk_per_image(dets: list[Detection], k: int) -> list[Detection]:
    """Keep the k highest-scored detections per image.

    Ties are broken by (category_id, box lexicographic), so the result does
    not depend on input ordering.
    """
    if k < 0:
        raise ValueError("k must be >= 0")
    out = []
    for _, group in sorted(group_by_image(dets).items()):
        ranked = sorted(
            group,
            key=lambda d: (-d.score, d.category_id, d.box.x, d.box.y, d.box.w, d.box.h),
        )
        out.extend(ranked[:k])
    return out


def restrict_classes(
    dets: list[Detection],
    allowed: set[int],
    mode: str = "filter",
    remap_target: int | None = None,
    protos: PrototypeSet | None = None,
) -> list[Detection]:
    """Filter out, or relabel into, a permitted class set.

    ``filter`` drops detections outside ``allowed``. ``reclassify`` relabels
    every detection into the allowed set, either to the fixed
    ``remap_target`` or, given ``protos``, to the allowed class whose
    prototype is nearest (by cosine) to the detection's current class
    prototype.
    """
    if mode == "filter":
        return [d for d in dets if d.category_id in allowed]
    if mode != "reclassify":
        raise ValueError(f"unknown mode {mode!r}")
    if remap_target is not None:
        if remap_target not in allowed:
            raise ValueError("remap_target must be in the allowed set")
        return [d if d.category_id in allowed else d.with_category(remap_target) for d in dets]
    if protos is None:
        raise ValueError("reclassify needs remap_target or a PrototypeSet")
    allowed_list = sorted(allowed)
    out = []
    for d in dets:
        if d.category_id in allowed:
            out.append(d)
            continue
        src = protos.class_protos.get(d.category_id)
        if src is None:
            raise ValueError(f"no prototype for category {d.category_id}")
        sims = [cosine(src, protos.class_protos[a]) for a in allowed_list]
        out.append(d.with_category(allowed_list[int(np.argmax(sims))]))
    return out


def phrase_map(
    dets_with_phrases: list[tuple[Detection, str]],
    mapping: dict[str, int],
    unknown: str = "drop",
) -> list[Detection]:
    """Assign category ids from detector phrases (e.g. grounding-model text).

    ``unknown`` selects the policy for phrases missing from the mapping:
    "drop" removes the detection, "error" raises UnknownPhraseError.
    """
    if unknown not in ("drop", "error"):
        raise ValueError("unknown policy must be 'drop' or 'error'")
    out = []
    for det, phrase in dets_with_phrases:
        if phrase in mapping:
            out.append(det.with_category(mapping[phrase]))
        elif unknown == "error":
            raise UnknownPhraseError(f"no mapping for phrase {phrase!r}")
    return out
