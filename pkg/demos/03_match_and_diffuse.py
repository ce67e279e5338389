"""Cosine matching of proposals plus graph-diffusion confidence smoothing.

Run: python3 demos/03_match_and_diffuse.py
"""
import numpy as np

from protodet import (
    BBox,
    Detection,
    DiffusionConfig,
    Proposal,
    build_prototypes,
    classify,
    diffuse,
    synth_clusters,
)

# Synthetic support/query embeddings with known labels.
support, queries, labels = synth_clusters(n_classes=3, per_class=5, dim=16, spread=0.3, seed=1)
protos = build_prototypes(support)

proposals = [
    Proposal(image_id=1, box=BBox(10 + 12 * i, 10, 20, 20), objectness=0.9, embedding_id=i)
    for i in sorted(queries.entries)
]
dets = classify(proposals, protos, queries)
correct = sum(d.category_id == labels[p.embedding_id] for p, d in zip(proposals, dets))
print(f"classified {len(dets)} proposals, {correct} match their generating class")
print("scores are (cosine+1)/2:", [round(d.score, 3) for d in dets[:5]], "...")

# Diffusion: a confident box drags an overlapping, uncertain one upward.
strong = Detection(image_id=9, box=BBox(0, 0, 20, 20), category_id=1, score=0.95)
weak = Detection(image_id=9, box=BBox(4, 0, 20, 20), category_id=1, score=0.10)
lonely = Detection(image_id=9, box=BBox(100, 100, 20, 20), category_id=1, score=0.10)
out = diffuse([strong, weak, lonely], DiffusionConfig(steps=30, alpha=0.3))
print("\nbefore diffusion:", [0.95, 0.10, 0.10])
print("after  diffusion:", [round(d.score, 4) for d in out])
print("the overlapping weak box gains confidence; the isolated one keeps its own")
