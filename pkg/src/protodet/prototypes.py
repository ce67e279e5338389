"""Class prototypes and background references from K-shot support embeddings.

All returned prototypes are unit-normalized. Quality-weighted blending keeps
the published two-path structure (attention path + plain average, mixed by
``alpha``) with the learned projection taken as identity, since training is
out of scope here. Weights pass through a softmax so the attention path is
always a convex combination of instances.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .boxes import BBox, iou
from .embeddings import EmbeddingStore, l2_normalize
from .errors import (
    EmptyClassError,
    EmptyInputError,
    NegativeWeightError,
    NonPositiveTemperatureError,
    RetryExhaustedError,
)

__all__ = [
    "PrototypeSet",
    "PUBLISHED_N_BG",
    "DEFAULT_N_BG",
    "mean_prototype",
    "reweighted_prototype",
    "multiscale_fuse",
    "jitter_negatives",
    "build_prototypes",
]

# Published setting uses 530 background instances; desk-scale default is far
# smaller so synthetic tasks stay readable.
PUBLISHED_N_BG = 530
DEFAULT_N_BG = 16


@dataclass
class PrototypeSet:
    """Per-class prototype vectors plus background references."""

    class_protos: dict[int, np.ndarray] = field(default_factory=dict)
    bg_protos: list[np.ndarray] = field(default_factory=list)
    alpha: float = 0.7
    temperature_fuse: float = 0.1

    def __post_init__(self) -> None:
        if not (0.0 <= self.alpha <= 1.0):
            raise ValueError(f"alpha {self.alpha} outside [0, 1]")

    def category_ids(self) -> list[int]:
        return sorted(self.class_protos)


def _softmax(values: np.ndarray) -> np.ndarray:
    z = values - np.max(values)
    e = np.exp(z)
    return e / e.sum()


def _stack(instances: list[np.ndarray]) -> np.ndarray:
    if not instances:
        raise EmptyClassError("no instances for this class")
    return np.stack([np.asarray(v, dtype=np.float64) for v in instances])


def mean_prototype(instances: list[np.ndarray]) -> np.ndarray:
    """Normalized arithmetic mean of the instance embeddings."""
    mat = _stack(instances)
    return l2_normalize(mat.mean(axis=0))


def reweighted_prototype(
    instances: list[np.ndarray],
    weights: list[float] | np.ndarray,
    alpha: float = 0.7,
) -> np.ndarray:
    """Blend a quality-weighted sum with the plain mean, then normalize.

    Computes normalize(alpha * sum_i softmax(w)_i e_i + (1-alpha) * mean(e)).
    Uniform weights (or alpha=0) reduce to mean_prototype. Invariant to adding
    a constant to all weights.
    """
    mat = _stack(instances)
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (len(instances),):
        raise ValueError(f"{len(instances)} instances but weight shape {w.shape}")
    if np.any(w < 0):
        raise NegativeWeightError("quality weights must be nonnegative")
    if not (0.0 <= alpha <= 1.0):
        raise ValueError(f"alpha {alpha} outside [0, 1]")
    attended = _softmax(w) @ mat
    return l2_normalize(alpha * attended + (1.0 - alpha) * mat.mean(axis=0))


def multiscale_fuse(
    per_scale: list[tuple[float, np.ndarray]],
    quality: list[float] | np.ndarray | None = None,
    temperature: float = 0.1,
) -> np.ndarray:
    """Fuse per-scale embeddings by temperature-scaled softmax weighting.

    ``quality`` defaults to uniform (no learned per-scale signal available at
    inference). Output is invariant to scaling quality and temperature by the
    same positive constant.
    """
    if not per_scale:
        raise EmptyInputError("need at least one scale")
    if temperature <= 0:
        raise NonPositiveTemperatureError(f"temperature {temperature} must be > 0")
    mat = _stack([vec for _, vec in per_scale])
    if quality is None:
        q = np.zeros(len(per_scale))
    else:
        q = np.asarray(quality, dtype=np.float64)
        if q.shape != (len(per_scale),):
            raise ValueError(f"{len(per_scale)} scales but quality shape {q.shape}")
    return l2_normalize(_softmax(q / temperature) @ mat)


def jitter_negatives(
    positives: list[tuple[BBox, tuple[int, int]]],
    n_per_box: int = 4,
    shift_frac: float = 1.0,
    scale_range: tuple[float, float] = (0.5, 1.5),
    seed: int = 0,
    max_iou: float = 0.5,
    max_retries: int = 50,
) -> list[BBox]:
    """Background boxes made by randomly shifting and scaling positives.

    Each positive (box, (image_w, image_h)) yields ``n_per_box`` jittered
    boxes, clipped to image bounds and resampled until IoU with the source
    drops below ``max_iou``. Deterministic for a fixed seed; raises
    RetryExhaustedError when a placement cannot be found.
    """
    if shift_frac < 0:
        raise ValueError("shift_frac must be >= 0")
    lo, hi = scale_range
    if lo <= 0 or hi < lo:
        raise ValueError(f"bad scale_range {scale_range}")
    rng = np.random.default_rng(seed)
    out: list[BBox] = []
    for box, (img_w, img_h) in positives:
        for _ in range(n_per_box):
            placed = None
            for _ in range(max_retries):
                scale = rng.uniform(lo, hi)
                dx = rng.uniform(-1, 1) * shift_frac * box.w
                dy = rng.uniform(-1, 1) * shift_frac * box.h
                w = box.w * scale
                h = box.h * scale
                cx = box.x + box.w / 2 + dx
                cy = box.y + box.h / 2 + dy
                x1 = max(0.0, cx - w / 2)
                y1 = max(0.0, cy - h / 2)
                x2 = min(float(img_w), cx + w / 2)
                y2 = min(float(img_h), cy + h / 2)
                if x2 - x1 <= 0 or y2 - y1 <= 0:
                    continue
                cand = BBox(x1, y1, x2 - x1, y2 - y1)
                if iou(cand, box) < max_iou:
                    placed = cand
                    break
            if placed is None:
                raise RetryExhaustedError(
                    f"could not place a negative with IoU < {max_iou} near {box}"
                )
            out.append(placed)
    return out


def build_prototypes(
    store: EmbeddingStore,
    method: str = "mean",
    alpha: float = 0.7,
    quality: dict[int, list[float]] | None = None,
    n_bg: int = DEFAULT_N_BG,
) -> PrototypeSet:
    """Assemble a PrototypeSet from a support store.

    Entries whose sidecar category_id is None are treated as background
    instances (at most ``n_bg`` kept, in store order); the rest are grouped
    by category. ``quality`` optionally maps category_id to per-instance
    weights for the reweighted method.
    """
    by_class: dict[int, list[np.ndarray]] = {}
    bg: list[np.ndarray] = []
    for entry_id, vec in store.entries.items():
        meta = store.meta[entry_id]
        if meta.category_id is None:
            bg.append(np.asarray(vec, dtype=np.float64))
        else:
            by_class.setdefault(meta.category_id, []).append(np.asarray(vec, dtype=np.float64))
    protos = PrototypeSet(alpha=alpha)
    for cat in sorted(by_class):
        instances = by_class[cat]
        if method == "mean":
            protos.class_protos[cat] = mean_prototype(instances)
        elif method == "reweighted":
            w = (quality or {}).get(cat)
            if w is None:
                w = [0.0] * len(instances)
            protos.class_protos[cat] = reweighted_prototype(instances, w, alpha)
        else:
            raise ValueError(f"unknown prototype method {method!r}")
    protos.bg_protos = [l2_normalize(v) for v in bg[:n_bg]]
    return protos
