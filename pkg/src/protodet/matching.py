"""Cosine classification of proposals and graph-diffusion score reweighting.

Classification assigns each proposal its argmax-cosine class against the
prototype set, maps cosine from [-1, 1] to a [0, 1] score affinely, and drops
proposals that look more like background than like any class (max-over-bg
beats max-over-class).

Diffusion smooths confidences over the per-image proposal-overlap graph:
W is the row-normalized IoU-weighted adjacency (self-loops for isolated
nodes) and scores follow s <- (1 - alpha) * s0 + alpha * W s for a fixed
number of steps. For alpha < 1 this is a contraction with fixed point
(I - alpha W)^{-1} (1 - alpha) s0.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .boxes import BBox, Detection, group_by_image, iou_matrix
from .embeddings import EmbeddingStore, cosine
from .errors import MissingEmbeddingError
from .prototypes import PrototypeSet

__all__ = [
    "Proposal",
    "DiffusionConfig",
    "BoxRefiner",
    "classify",
    "diffuse",
    "refine_boxes",
    "identity_refiner",
]


@dataclass(frozen=True)
class Proposal:
    """A category-agnostic candidate box with a pointer into the query store."""

    image_id: int
    box: BBox
    objectness: float
    embedding_id: int

    def __post_init__(self) -> None:
        if not (0.0 <= self.objectness <= 1.0):
            raise ValueError(f"objectness {self.objectness} outside [0, 1]")


@dataclass(frozen=True)
class DiffusionConfig:
    """Graph-diffusion hyperparameters (defaults follow the training-free
    matcher: 30 steps, diffusion weight 0.3, edges on any overlap)."""

    steps: int = 30
    alpha: float = 0.3
    edge_iou_min: float = 0.0
    fuse_objectness: bool = False

    def __post_init__(self) -> None:
        if not (0.0 <= self.alpha < 1.0):
            raise ValueError(f"alpha {self.alpha} outside [0, 1)")
        if self.steps < 0:
            raise ValueError("steps must be >= 0")


def classify(
    proposals: list[Proposal],
    protos: PrototypeSet,
    store: EmbeddingStore,
    fuse_objectness: bool = False,
) -> list[Detection]:
    """Label each proposal with its best-matching class.

    Score is (cos + 1) / 2; with ``fuse_objectness`` it becomes the geometric
    mean of that value and the proposal objectness. Proposals whose best
    background similarity exceeds their best class similarity are dropped.
    Raises MissingEmbeddingError when a proposal's embedding id is absent.
    """
    cats = protos.category_ids()
    if not cats:
        return []
    proto_mat = np.stack([protos.class_protos[c] for c in cats])
    bg_mat = np.stack(protos.bg_protos) if protos.bg_protos else None
    out: list[Detection] = []
    for p in proposals:
        if p.embedding_id not in store.entries:
            raise MissingEmbeddingError(f"proposal embedding {p.embedding_id} not in store")
        vec = np.asarray(store.vector(p.embedding_id), dtype=np.float64)
        sims = np.array([cosine(vec, proto) for proto in proto_mat])
        best = int(np.argmax(sims))
        if bg_mat is not None:
            bg_best = max(cosine(vec, bg) for bg in bg_mat)
            if bg_best > sims[best]:
                continue
        score = (sims[best] + 1.0) / 2.0
        if fuse_objectness:
            score = float(np.sqrt(score * p.objectness))
        out.append(
            Detection(
                image_id=p.image_id,
                box=p.box,
                category_id=cats[best],
                score=float(np.clip(score, 0.0, 1.0)),
            )
        )
    return out


def overlap_weights(boxes: list[BBox], edge_iou_min: float = 0.0) -> np.ndarray:
    """Row-normalized IoU adjacency; isolated nodes get a self-loop."""
    n = len(boxes)
    w = iou_matrix(boxes, boxes)
    np.fill_diagonal(w, 0.0)
    w[w <= edge_iou_min] = 0.0
    row_sums = w.sum(axis=1)
    isolated = row_sums == 0
    w[isolated, np.arange(n)[isolated]] = 1.0
    row_sums = w.sum(axis=1)
    return w / row_sums[:, None]


def diffuse(dets: list[Detection], cfg: DiffusionConfig = DiffusionConfig()) -> list[Detection]:
    """Reweight confidences along each image's proposal-overlap graph.

    Boxes, classes, and image grouping are unchanged; only scores move, and
    they are clamped to [0, 1] on output. alpha=0, steps=0, or a single
    detection per image leave scores untouched.
    """
    if cfg.alpha == 0.0 or cfg.steps == 0:
        return list(dets)
    grouped = group_by_image(dets)
    rescored: dict[int, list[Detection]] = {}
    for image_id, group in grouped.items():
        if len(group) == 1:
            rescored[image_id] = group
            continue
        w = overlap_weights([d.box for d in group], cfg.edge_iou_min)
        s0 = np.array([d.score for d in group])
        s = s0.copy()
        for _ in range(cfg.steps):
            s = (1.0 - cfg.alpha) * s0 + cfg.alpha * (w @ s)
        s = np.clip(s, 0.0, 1.0)
        rescored[image_id] = [d.with_score(float(v)) for d, v in zip(group, s)]
    # Reassemble in the original order.
    cursor = {k: 0 for k in rescored}
    out = []
    for d in dets:
        replacement = rescored[d.image_id][cursor[d.image_id]]
        cursor[d.image_id] += 1
        out.append(replacement)
    return out


BoxRefiner = Callable[[Detection], BBox]


def identity_refiner(det: Detection) -> BBox:
    return det.box


def refine_boxes(dets: list[Detection], refiner: BoxRefiner = identity_refiner) -> list[Detection]:
    """Replace each box with the refiner's output; scores/classes unchanged.

    This is the seam where a mask-based boundary refiner plugs in; the
    identity refiner ships as the default. Refiner exceptions propagate.
    """
    return [d.with_box(refiner(d)) for d in dets]
