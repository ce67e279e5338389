"""Box geometry and COCO JSON round trips.

Run: python3 demos/01_boxes_and_coco.py
"""
from protodet import BBox, Detection, emit_results, emit_split, iou, load_coco
from protodet.boxes import Annotation, Category, DatasetSplit, ImageInfo

a = BBox(0, 0, 10, 10)
b = BBox(5, 0, 10, 10)
print("IoU of two 10x10 boxes offset by half a width:", iou(a, b))  # 1/3
print("IoU of a box with itself:", iou(a, a))
print("Touching boxes share no area:", iou(a, BBox(10, 0, 10, 10)))

split = DatasetSplit(
    images=(ImageInfo(image_id=1, width=640, height=480, file_name="reef.png"),),
    annotations=(
        Annotation(image_id=1, box=BBox(40, 60, 120, 90), category_id=1, annotation_id=1),
        Annotation(image_id=1, box=BBox(300, 200, 80, 60), category_id=2, annotation_id=2),
    ),
    categories=(Category(1, "holothurian"), Category(2, "scallop")),
)
blob = emit_split(split)
print(f"\nCOCO split serialized to {len(blob)} bytes; shot inferred on reload:",
      load_coco(blob).shot)

dets = [
    Detection(image_id=1, box=BBox(42, 58, 118, 92), category_id=1, score=0.91),
    Detection(image_id=1, box=BBox(10, 10, 30, 30), category_id=2, score=0.12),
]
print("\nResults array (sorted by image, then descending score):")
print(emit_results(dets, split).decode())
