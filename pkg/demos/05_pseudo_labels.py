"""Pseudo-label curation: strict selection, F-beta thresholds, GT merging.

Run: python3 demos/05_pseudo_labels.py
"""
from protodet import (
    Annotation,
    BBox,
    Detection,
    PseudoLabelPolicy,
    fsod_map,
    merge_with_gt,
    optimize_thresholds,
    select_pseudo,
)
from protodet.boxes import Category, DatasetSplit, ImageInfo


def det(x, y, score, cat=1):
    return Detection(image_id=1, box=BBox(x, y, 20, 20), category_id=cat, score=score)


gt = [
    Annotation(image_id=1, box=BBox(10, 10, 20, 20), category_id=1, annotation_id=1),
    Annotation(image_id=1, box=BBox(50, 50, 20, 20), category_id=1, annotation_id=2),
    Annotation(image_id=1, box=BBox(90, 10, 20, 20), category_id=1, annotation_id=3),
]
split = DatasetSplit(
    images=(ImageInfo(image_id=1, width=200, height=200),),
    annotations=tuple(gt),
    categories=(Category(1, "car"),),
)

dets = [det(10, 10, 0.9), det(150, 150, 0.85), det(50, 50, 0.8)]  # TP, FP, TP
print("strict selection at tau 0.82 keeps:",
      [d.score for d in select_pseudo(dets, 0.82)])

taus = optimize_thresholds(dets, split, beta=0.5)
print("F_0.5-optimal threshold for class 1:", round(taus[1], 6),
      "-> selects", [d.score for d in select_pseudo(dets, taus[1])])
print("(beta < 1 weights precision: the mid-score false positive is cut)")

policy = PseudoLabelPolicy(tau=0.5, dedup_iou_gt=0.8, dedup_iou_support=None,
                           merge_mode="class_agnostic_nms")
merged = merge_with_gt(select_pseudo(dets, 0.5), gt, policy)
added = [a for a in merged if not a.is_ground_truth]
print(f"\nmerged set: {len(merged)} annotations ({len(added)} promoted pseudo-labels)")
print("duplicates of existing GT are removed by the strict IoU > 0.8 rule")

print("\npseudo-label quality (few-shot anchored mAP):",
      round(fsod_map(dets, split), 4))
