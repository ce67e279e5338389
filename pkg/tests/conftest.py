import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from protodet import Annotation, BBox, Category, DatasetSplit, Detection, ImageInfo


def make_box(x, y, w, h):
    return BBox(float(x), float(y), float(w), float(h))


def make_det(image_id, x, y, w, h, cat=1, score=0.5):
    return Detection(image_id=image_id, box=make_box(x, y, w, h), category_id=cat, score=score)


def make_ann(image_id, x, y, w, h, cat=1, ann_id=1):
    return Annotation(
        image_id=image_id, box=make_box(x, y, w, h), category_id=cat, annotation_id=ann_id
    )


def random_box(rng, span=100.0, min_size=2.0, max_size=40.0):
    x = rng.uniform(0, span)
    y = rng.uniform(0, span)
    w = rng.uniform(min_size, max_size)
    h = rng.uniform(min_size, max_size)
    return make_box(x, y, w, h)


def random_detections(rng, n, n_images=3, n_classes=3, span=100.0):
    return [
        Detection(
            image_id=int(rng.integers(1, n_images + 1)),
            box=random_box(rng, span),
            category_id=int(rng.integers(1, n_classes + 1)),
            score=float(rng.uniform(0, 1)),
        )
        for _ in range(n)
    ]


def build_split(images, annotations, categories=None):
    if categories is None:
        cats = sorted({a.category_id for a in annotations})
        categories = [Category(category_id=c, name=f"c{c}") for c in cats]
    return DatasetSplit(
        images=tuple(images), annotations=tuple(annotations), categories=tuple(categories)
    )


def random_micro_dataset(rng, max_images=10, max_classes=5, max_dets=30):
    """A small random GT split plus random detections for mAP comparisons.

    Detections are a mix of GT-aligned boxes (jittered true positives) and
    uniform noise, so PR curves exercise both match and miss paths.
    """
    n_images = int(rng.integers(1, max_images + 1))
    n_classes = int(rng.integers(1, max_classes + 1))
    images = [ImageInfo(image_id=i, width=120, height=120) for i in range(1, n_images + 1)]
    annotations = []
    ann_id = 1
    for img in images:
        for _ in range(int(rng.integers(0, 4))):
            annotations.append(
                Annotation(
                    image_id=img.image_id,
                    box=random_box(rng),
                    category_id=int(rng.integers(1, n_classes + 1)),
                    annotation_id=ann_id,
                )
            )
            ann_id += 1
    if not annotations:
        annotations.append(
            Annotation(image_id=1, box=random_box(rng), category_id=1, annotation_id=ann_id)
        )
    dets = []
    n_dets = int(rng.integers(0, max_dets + 1))
    for _ in range(n_dets):
        if annotations and rng.uniform() < 0.6:
            a = annotations[int(rng.integers(0, len(annotations)))]
            jitter = rng.uniform(-6, 6, size=4)
            box = BBox(
                a.box.x + jitter[0],
                a.box.y + jitter[1],
                max(1.0, a.box.w + jitter[2]),
                max(1.0, a.box.h + jitter[3]),
            )
            cat = a.category_id if rng.uniform() < 0.8 else int(rng.integers(1, n_classes + 1))
            dets.append(
                Detection(
                    image_id=a.image_id, box=box, category_id=cat, score=float(rng.uniform())
                )
            )
        else:
            dets.append(
                Detection(
                    image_id=int(rng.integers(1, n_images + 1)),
                    box=random_box(rng),
                    category_id=int(rng.integers(1, n_classes + 1)),
                    score=float(rng.uniform()),
                )
            )
    return build_split(images, annotations), dets


def clustered_vectors(rng, n, dim, dispersion=0.35, scale_range=(0.5, 2.0)):
    """Vectors spread moderately around a random direction.

    Keeps pairwise cosines well away from +/-1 saturation so softmax-based
    losses have gradients large enough for finite differences to resolve at
    1e-5 relative error.
    """
    center = rng.normal(size=dim)
    center /= np.linalg.norm(center)
    out = []
    for _ in range(n):
        v = center + dispersion * rng.normal(size=dim)
        v /= np.linalg.norm(v)
        out.append(v * rng.uniform(*scale_range))
    return np.stack(out)


@pytest.fixture
def rng():
    return np.random.default_rng(20260809)
