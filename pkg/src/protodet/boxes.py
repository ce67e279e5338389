"""Box geometry, detection records, and COCO-format JSON ingestion/emission.

Boxes are stored as floating (x, y, w, h) following the COCO convention and
are converted to corner form only inside geometry kernels. Touching boxes
have IoU 0 (continuous-area convention; edges carry no area). All types are
immutable after construction and safe to share across threads.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    DanglingReferenceError,
    MalformedJsonError,
    NonPositiveBoxError,
    UnknownImageIdError,
)

__all__ = [
    "BBox",
    "Detection",
    "Annotation",
    "ImageInfo",
    "Category",
    "DatasetSplit",
    "iou",
    "iou_matrix",
    "load_coco",
    "emit_results",
    "emit_split",
    "group_by_image",
]


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box: (x, y) is the top-left corner, w/h strictly positive."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self) -> None:
        for name in ("x", "y", "w", "h"):
            object.__setattr__(self, name, float(getattr(self, name)))
        vals = (self.x, self.y, self.w, self.h)
        if not all(math.isfinite(v) for v in vals):
            raise NonPositiveBoxError(f"non-finite box {vals}")
        if self.w <= 0 or self.h <= 0:
            raise NonPositiveBoxError(f"non-positive box size {vals}")

    @property
    def area(self) -> float:
        return self.w * self.h

    @property
    def corners(self) -> tuple[float, float, float, float]:
        """(x1, y1, x2, y2) corner form, used only by geometry kernels."""
        return (self.x, self.y, self.x + self.w, self.y + self.h)

    def as_list(self) -> list[float]:
        return [self.x, self.y, self.w, self.h]


@dataclass(frozen=True)
class Detection:
    """A scored, classified box on one image."""

    image_id: int
    box: BBox
    category_id: int
    score: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.score <= 1.0):
            raise ValueError(f"score {self.score} outside [0, 1]")

    def with_score(self, score: float) -> "Detection":
        return replace(self, score=score)

    def with_box(self, box: BBox) -> "Detection":
        return replace(self, box=box)

    def with_category(self, category_id: int) -> "Detection":
        return replace(self, category_id=category_id)


@dataclass(frozen=True)
class Annotation:
    """A labeled box; ``is_ground_truth`` is False for promoted pseudo-labels."""

    image_id: int
    box: BBox
    category_id: int
    annotation_id: int
    is_ground_truth: bool = True


@dataclass(frozen=True)
class ImageInfo:
    image_id: int
    width: int
    height: int
    file_name: str = ""


@dataclass(frozen=True)
class Category:
    category_id: int
    name: str


@dataclass(frozen=True)
class DatasetSplit:
    """COCO-style images/annotations/categories for one dataset-shot task.

    ``shot`` is the per-category annotation count K when that count is
    uniform over the annotated categories (the support-set case), else None.
    """

    images: tuple[ImageInfo, ...]
    annotations: tuple[Annotation, ...]
    categories: tuple[Category, ...]
    shot: int | None = None
    extra: dict = field(default_factory=dict, compare=False)

    def image_sizes(self) -> dict[int, tuple[int, int]]:
        return {im.image_id: (im.width, im.height) for im in self.images}

    def category_ids(self) -> set[int]:
        return {c.category_id for c in self.categories}

    def annotations_for_category(self, category_id: int) -> list[Annotation]:
        return [a for a in self.annotations if a.category_id == category_id]


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union of two valid boxes; symmetric, in [0, 1]."""
    ax1, ay1, ax2, ay2 = a.corners
    bx1, by1, bx2, by2 = b.corners
    iw = min(ax2, bx2) - max(ax1, bx1)
    ih = min(ay2, by2) - max(ay1, by1)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


def iou_matrix(boxes_a: list[BBox], boxes_b: list[BBox]) -> np.ndarray:
    """Pairwise IoU, shape (len(a), len(b))."""
    if not boxes_a or not boxes_b:
        return np.zeros((len(boxes_a), len(boxes_b)))
    a = np.array([b.corners for b in boxes_a])
    b = np.array([b.corners for b in boxes_b])
    iw = np.minimum(a[:, None, 2], b[None, :, 2]) - np.maximum(a[:, None, 0], b[None, :, 0])
    ih = np.minimum(a[:, None, 3], b[None, :, 3]) - np.maximum(a[:, None, 1], b[None, :, 1])
    inter = np.clip(iw, 0, None) * np.clip(ih, 0, None)
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    return inter / (area_a[:, None] + area_b[None, :] - inter)


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise MalformedJsonError(msg)


def _bbox_from_coco(raw, where: str) -> BBox:
    _require(isinstance(raw, (list, tuple)) and len(raw) == 4, f"{where}: bbox must be [x,y,w,h]")
    try:
        return BBox(float(raw[0]), float(raw[1]), float(raw[2]), float(raw[3]))
    except (TypeError, ValueError) as exc:
        raise MalformedJsonError(f"{where}: bad bbox values {raw}") from exc


def _infer_shot(annotations: tuple[Annotation, ...]) -> int | None:
    counts: dict[int, int] = {}
    for a in annotations:
        counts[a.category_id] = counts.get(a.category_id, 0) + 1
    uniq = set(counts.values())
    return uniq.pop() if len(uniq) == 1 else None


def load_coco(data: bytes | str) -> DatasetSplit:
    """Parse COCO JSON (images/annotations/categories) into a linked split.

    Raises MalformedJsonError on syntax/shape problems, DanglingReferenceError
    when an annotation points to a missing image or category, and
    NonPositiveBoxError for degenerate boxes.
    """
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise MalformedJsonError(f"invalid JSON: {exc}") from exc
    _require(isinstance(doc, dict), "top level must be an object")
    for key in ("images", "annotations", "categories"):
        _require(isinstance(doc.get(key), list), f"missing or non-array '{key}'")

    images = []
    for im in doc["images"]:
        _require(isinstance(im, dict) and "id" in im, "image entries need an 'id'")
        images.append(
            ImageInfo(
                image_id=int(im["id"]),
                width=int(im.get("width", 0)),
                height=int(im.get("height", 0)),
                file_name=str(im.get("file_name", "")),
            )
        )
    categories = []
    for cat in doc["categories"]:
        _require(isinstance(cat, dict) and "id" in cat, "category entries need an 'id'")
        categories.append(Category(category_id=int(cat["id"]), name=str(cat.get("name", ""))))

    image_ids = {im.image_id for im in images}
    category_ids = {c.category_id for c in categories}
    annotations = []
    for ann in doc["annotations"]:
        _require(
            isinstance(ann, dict) and {"id", "image_id", "category_id", "bbox"} <= ann.keys(),
            "annotation entries need id/image_id/category_id/bbox",
        )
        ann_id = int(ann["id"])
        img_id = int(ann["image_id"])
        cat_id = int(ann["category_id"])
        if img_id not in image_ids:
            raise DanglingReferenceError(f"annotation {ann_id} references missing image {img_id}")
        if cat_id not in category_ids:
            raise DanglingReferenceError(f"annotation {ann_id} references missing category {cat_id}")
        annotations.append(
            Annotation(
                image_id=img_id,
                box=_bbox_from_coco(ann["bbox"], f"annotation {ann_id}"),
                category_id=cat_id,
                annotation_id=ann_id,
                is_ground_truth=bool(ann.get("is_ground_truth", True)),
            )
        )
    ann_ids = [a.annotation_id for a in annotations]
    _require(len(ann_ids) == len(set(ann_ids)), "annotation ids must be unique within a split")

    anns = tuple(annotations)
    return DatasetSplit(
        images=tuple(images),
        annotations=anns,
        categories=tuple(categories),
        shot=_infer_shot(anns),
    )


def _dump_json(obj) -> bytes:
    # Canonical encoding: sorted keys, no whitespace drift. repr() of Python
    # floats is deterministic, so identical inputs give identical bytes.
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def emit_results(dets: list[Detection], split: DatasetSplit | None = None) -> bytes:
    """Serialize detections as a COCO results array.

    Ordering is (image_id, descending score, category_id, box) so identical
    inputs produce identical bytes. When ``split`` is given, every detection
    must reference one of its images (UnknownImageIdError otherwise).
    """
    if split is not None:
        known = {im.image_id for im in split.images}
        for d in dets:
            if d.image_id not in known:
                raise UnknownImageIdError(f"detection references unknown image {d.image_id}")
    ordered = sorted(
        dets,
        key=lambda d: (d.image_id, -d.score, d.category_id, d.box.x, d.box.y, d.box.w, d.box.h),
    )
    payload = [
        {
            "image_id": d.image_id,
            "category_id": d.category_id,
            "bbox": d.box.as_list(),
            "score": d.score,
        }
        for d in ordered
    ]
    return _dump_json(payload)


def load_results(data: bytes | str, split: DatasetSplit | None = None) -> list[Detection]:
    """Parse a COCO results array back into detections."""
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise MalformedJsonError(f"invalid JSON: {exc}") from exc
    _require(isinstance(doc, list), "results must be a JSON array")
    known = {im.image_id for im in split.images} if split is not None else None
    out = []
    for i, entry in enumerate(doc):
        _require(
            isinstance(entry, dict) and {"image_id", "category_id", "bbox", "score"} <= entry.keys(),
            f"result {i} needs image_id/category_id/bbox/score",
        )
        img_id = int(entry["image_id"])
        if known is not None and img_id not in known:
            raise UnknownImageIdError(f"result {i} references unknown image {img_id}")
        out.append(
            Detection(
                image_id=img_id,
                box=_bbox_from_coco(entry["bbox"], f"result {i}"),
                category_id=int(entry["category_id"]),
                score=float(entry["score"]),
            )
        )
    return out


def emit_split(split: DatasetSplit) -> bytes:
    """Serialize a split as COCO JSON; round-trips through load_coco."""
    doc = {
        "images": [
            {"id": im.image_id, "width": im.width, "height": im.height, "file_name": im.file_name}
            for im in sorted(split.images, key=lambda im: im.image_id)
        ],
        "annotations": [
            {
                "id": a.annotation_id,
                "image_id": a.image_id,
                "category_id": a.category_id,
                "bbox": a.box.as_list(),
                "area": a.box.area,
                "iscrowd": 0,
                "is_ground_truth": a.is_ground_truth,
            }
            for a in sorted(split.annotations, key=lambda a: a.annotation_id)
        ],
        "categories": [
            {"id": c.category_id, "name": c.name}
            for c in sorted(split.categories, key=lambda c: c.category_id)
        ],
    }
    return _dump_json(doc)


def group_by_image(dets: list[Detection]) -> dict[int, list[Detection]]:
    """Group detections by image, preserving input order within each image."""
    grouped: dict[int, list[Detection]] = {}
    for d in dets:
        grouped.setdefault(d.image_id, []).append(d)
    return grouped
