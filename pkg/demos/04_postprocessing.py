"""The post-processing zoo: NMS, soft-NMS, WBF, filters, relabeling.

Run: python3 demos/04_postprocessing.py
"""
from protodet import BBox, Detection, nms, phrase_map, size_filter, soft_nms, threshold_filter, wbf


def det(x, y, w, h, cat=1, score=0.5, image=1):
    return Detection(image_id=image, box=BBox(x, y, w, h), category_id=cat, score=score)


scene = [
    det(10, 10, 40, 40, score=0.95),
    det(12, 12, 40, 40, score=0.80),   # near-duplicate of the first
    det(60, 60, 30, 30, score=0.70),
    det(61, 61, 30, 30, cat=2, score=0.60),  # different class, survives per-class NMS
]

print("hard NMS keeps:", [round(d.score, 2) for d in nms(scene, iou_thresh=0.5)])
print("soft NMS rescales instead:",
      [round(d.score, 3) for d in soft_nms(scene, sigma=0.5, score_floor=0.0)])

model_a = [det(10, 10, 40, 40, score=0.8)]
model_b = [det(12, 11, 40, 40, score=0.6), det(200, 200, 20, 20, score=0.9)]
fused = wbf([model_a, model_b], iou_thresh=0.55)
print("\nWBF across two models:")
for f in fused:
    print(f"   box at ({f.box.x:.1f}, {f.box.y:.1f}), score {f.score:.3f}"
          + ("  <- single-model box, score halved" if f.score < 0.5 else ""))

print("\nscore floor 0.75 keeps:", len(threshold_filter(scene, 0.75)), "of", len(scene))
print("size filter (<= 10% of a 100x100 image) keeps:",
      len(size_filter(scene, 0.1, {1: (100, 100)})), "of", len(scene))

grounded = [(det(5, 5, 20, 20, cat=0, score=0.9), "sea cucumber")]
mapped = phrase_map(grounded, {"sea cucumber": 3})
print("\nphrase 'sea cucumber' mapped to category", mapped[0].category_id)
