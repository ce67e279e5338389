"""Independent brute-force reference implementations used only by tests.

Everything here is written naively and separately from the package: plain
loops, corner-form box arithmetic recomputed from scratch, no shared helpers
with the code under test. Keep it slow and obvious.
"""
from __future__ import annotations

import math

import numpy as np


def box_iou(a, b) -> float:
    """IoU from (x, y, w, h) tuples, recomputed from corners."""
    ax1, ay1, ax2, ay2 = a[0], a[1], a[0] + a[2], a[1] + a[3]
    bx1, by1, bx2, by2 = b[0], b[1], b[0] + b[2], b[1] + b[3]
    iw = min(ax2, bx2) - max(ax1, bx1)
    ih = min(ay2, by2) - max(ay1, by1)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = a[2] * a[3] + b[2] * b[3] - inter
    return inter / union


def grid_iou_count(a, b, scale: int = 1) -> float:
    """IoU by counting integer pixel cells (boxes scaled to integers first)."""
    cells_a = {
        (x, y)
        for x in range(int(a[0] * scale), int((a[0] + a[2]) * scale))
        for y in range(int(a[1] * scale), int((a[1] + a[3]) * scale))
    }
    cells_b = {
        (x, y)
        for x in range(int(b[0] * scale), int((b[0] + b[2]) * scale))
        for y in range(int(b[1] * scale), int((b[1] + b[3]) * scale))
    }
    inter = len(cells_a & cells_b)
    union = len(cells_a | cells_b)
    return inter / union


# --- COCO mAP ---------------------------------------------------------------
# Detections: (image_id, category_id, (x, y, w, h), score)
# Ground truth: (image_id, category_id, (x, y, w, h), ann_id)


def _canonical_dets(dets):
    return sorted(dets, key=lambda d: (-d[3], d[0], d[1], d[2][0], d[2][1], d[2][2], d[2][3]))


def brute_force_ap_one_class(dets, gts, threshold: float) -> float:
    """101-point interpolated AP for one class at one IoU threshold."""
    n_gt = len(gts)
    if n_gt == 0:
        raise ValueError("class needs ground truth")
    gts = sorted(gts, key=lambda g: (g[2][0], g[2][1], g[2][2], g[2][3], g[3]))
    matched = [False] * len(gts)
    flags = []
    for d in dets:
        best_iou = 0.0
        best = -1
        for gi, g in enumerate(gts):
            if matched[gi] or g[0] != d[0]:
                continue
            ov = box_iou(d[2], g[2])
            if ov > best_iou:
                best_iou, best = ov, gi
        if best >= 0 and best_iou >= threshold:
            matched[best] = True
            flags.append(True)
        else:
            flags.append(False)
    precisions, recalls = [], []
    tp = fp = 0
    for hit in flags:
        tp += int(hit)
        fp += int(not hit)
        precisions.append(tp / (tp + fp))
        recalls.append(tp / n_gt)
    total = 0.0
    for r in [i / 100 for i in range(101)]:
        best_p = 0.0
        for p, rec in zip(precisions, recalls):
            if rec >= r and p > best_p:
                best_p = p
        total += best_p
    return total / 101


def brute_force_map(dets, gts, thresholds=None, max_dets: int = 100):
    """(per-class AP dict, mAP) over classes that have ground truth."""
    if thresholds is None:
        thresholds = [0.5 + 0.05 * i for i in range(10)]
    ordered = _canonical_dets(dets)
    capped = []
    per_image = {}
    for d in ordered:
        c = per_image.get(d[0], 0)
        if c < max_dets:
            capped.append(d)
            per_image[d[0]] = c + 1
    classes = sorted({g[1] for g in gts})
    per_class = {}
    for cat in classes:
        cat_dets = [d for d in capped if d[1] == cat]
        cat_gts = [g for g in gts if g[1] == cat]
        aps = [brute_force_ap_one_class(cat_dets, cat_gts, t) for t in thresholds]
        per_class[cat] = sum(aps) / len(aps)
    mean_ap = sum(per_class.values()) / len(per_class) if per_class else 0.0
    return per_class, mean_ap


# --- NMS family -------------------------------------------------------------
# Detections: (image_id, category_id, (x, y, w, h), score); returns kept indices.


def brute_force_nms(dets, iou_thresh: float, class_agnostic: bool = False):
    order = sorted(range(len(dets)), key=lambda i: (-dets[i][3], i))
    kept = []
    for i in order:
        suppressed = False
        for j in kept:
            same_image = dets[j][0] == dets[i][0]
            same_class = class_agnostic or dets[j][1] == dets[i][1]
            if same_image and same_class and box_iou(dets[j][2], dets[i][2]) > iou_thresh:
                suppressed = True
                break
        if not suppressed:
            kept.append(i)
    return kept


def brute_force_soft_nms(dets, sigma: float, score_floor: float, class_agnostic: bool = False):
    """Returns [(index, final_score)] in selection order."""
    scores = {i: dets[i][3] for i in range(len(dets))}
    remaining = set(range(len(dets)))
    out = []
    while remaining:
        best = min(remaining, key=lambda i: (-scores[i], i))
        remaining.discard(best)
        if scores[best] >= score_floor:
            out.append((best, scores[best]))
        for j in list(remaining):
            same_image = dets[j][0] == dets[best][0]
            same_class = class_agnostic or dets[j][1] == dets[best][1]
            if same_image and same_class:
                ov = box_iou(dets[best][2], dets[j][2])
                scores[j] = scores[j] * math.exp(-(ov * ov) / sigma)
    return out


# --- Diffusion fixed point ---------------------------------------------------


def diffusion_fixed_point(boxes, s0, alpha: float, edge_iou_min: float = 0.0):
    """Solve s* = (1 - alpha) s0 + alpha W s* directly."""
    n = len(boxes)
    w = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i != j:
                ov = box_iou(boxes[i], boxes[j])
                if ov > edge_iou_min:
                    w[i, j] = ov
    for i in range(n):
        if w[i].sum() == 0:
            w[i, i] = 1.0
    w = w / w.sum(axis=1, keepdims=True)
    s0 = np.asarray(s0, dtype=float)
    return np.linalg.solve(np.eye(n) - alpha * w, (1 - alpha) * s0)


# --- Gradients ---------------------------------------------------------------


def finite_diff_grad(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar function of an array."""
    x = np.asarray(x, dtype=float)
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        xp = x.copy()
        xm = x.copy()
        xp[idx] += h
        xm[idx] -= h
        grad[idx] = (f(xp) - f(xm)) / (2 * h)
        it.iternext()
    return grad


# --- F-beta threshold sweep ---------------------------------------------------


def fbeta_score(tp: int, fp: int, fn: int, beta: float) -> float:
    if tp == 0:
        return 0.0
    p = tp / (tp + fp)
    r = tp / (tp + fn)
    denom = beta * beta * p + r
    return (1 + beta * beta) * p * r / denom if denom else 0.0


def sweep_fbeta(dets, gts, tau: float, beta: float, iou_match: float = 0.5) -> float:
    """F-beta of the strict-threshold selection at ``tau`` for one class.

    dets: (image_id, (x, y, w, h), score); gts: (image_id, (x, y, w, h)).
    """
    selected = [d for d in dets if d[2] > tau]
    selected.sort(key=lambda d: (-d[2], d[0], d[1][0], d[1][1]))
    matched = [False] * len(gts)
    tp = 0
    for d in selected:
        best_iou, best = 0.0, -1
        for gi, g in enumerate(gts):
            if matched[gi] or g[0] != d[0]:
                continue
            ov = box_iou(d[1], g[1])
            if ov > best_iou:
                best_iou, best = ov, gi
        if best >= 0 and best_iou >= iou_match:
            matched[best] = True
            tp += 1
    return fbeta_score(tp, len(selected) - tp, len(gts) - tp, beta)
