"""Building class prototypes from a handful of support embeddings.

Run: python3 demos/02_prototypes.py
"""
import numpy as np

from protodet import (
    BBox,
    jitter_negatives,
    mean_prototype,
    multiscale_fuse,
    reweighted_prototype,
)

rng = np.random.default_rng(0)

# Five noisy instances of the same class.
center = np.array([1.0, 0.2, -0.3, 0.5])
instances = [center + 0.15 * rng.normal(size=4) for _ in range(5)]

plain = mean_prototype(instances)
print("mean prototype:", np.round(plain, 3))

# Quality-weighted variant: pretend instance 2 is a clean, unoccluded crop.
weights = [0.1, 0.1, 3.0, 0.1, 0.1]
weighted = reweighted_prototype(instances, weights, alpha=0.7)
print("reweighted (alpha=0.7, instance 2 trusted):", np.round(weighted, 3))
print("cosine(mean, reweighted):", round(float(plain @ weighted), 4))

# Multi-scale fusion over the usual image pyramid.
per_scale = [(s, center + 0.05 * rng.normal(size=4)) for s in (0.9, 1.0, 1.1, 1.2)]
fused = multiscale_fuse(per_scale, quality=[0.2, 1.0, 0.7, 0.1], temperature=0.1)
print("\nscale-fused prototype:", np.round(fused, 3))
print("softmax at temperature 0.1 concentrates on the best scale")

# Background boxes by shifting/scaling a positive around the image.
positive = BBox(45, 45, 20, 20)
negatives = jitter_negatives([(positive, (128, 128))], n_per_box=4, seed=7)
print("\njittered negatives around", positive)
for n in negatives:
    print("   ", n)
