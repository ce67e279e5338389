"""COCO mAP and the nine-cell weighted challenge score.

Run: python3 demos/07_scoring.py
"""
from protodet import Annotation, BBox, Detection, ScoreCard, challenge_score, coco_map, fbeta
from protodet.boxes import Category, DatasetSplit, ImageInfo

split = DatasetSplit(
    images=(ImageInfo(image_id=1, width=100, height=100),),
    annotations=(
        Annotation(image_id=1, box=BBox(10, 10, 30, 30), category_id=1, annotation_id=1),
        Annotation(image_id=1, box=BBox(60, 60, 20, 20), category_id=1, annotation_id=2),
    ),
    categories=(Category(1, "urchin"),),
)
dets = [
    Detection(image_id=1, box=BBox(11, 11, 30, 30), category_id=1, score=0.9),
    Detection(image_id=1, box=BBox(40, 10, 15, 15), category_id=1, score=0.6),  # FP
]
report = coco_map(dets, split)
print("per-class AP over IoU 0.50:0.05:0.95:", {k: round(v, 4) for k, v in report.per_class_ap.items()})
print("mAP:", round(report.map, 4))

# The leaderboard aggregate: one-shot cells count double.
winner = ScoreCard(cells={
    ("D1", 1): 57.04, ("D1", 5): 57.15, ("D1", 10): 58.08,
    ("D2", 1): 59.23, ("D2", 5): 59.23, ("D2", 10): 59.23,
    ("D3", 1): 45.23, ("D3", 5): 46.17, ("D3", 10): 48.77,
})
print("\nwinning entry's nine cells give score:", round(winner.score, 2))

uniform = {(d, k): 50.0 for d in ("D1", "D2", "D3") for k in (1, 5, 10)}
print("flat 50.0 everywhere scores:", challenge_score(uniform), "(= 4 x 50)")

print("\nF-beta used for threshold tuning: F_0.5(tp=2, fp=1, fn=1) =",
      round(fbeta(2, 1, 1, 0.5), 4))
