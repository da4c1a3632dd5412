"""
Morph-based data augmentation
=============================

Build a tiny dataset of synthetic faces in a shared mean frame, then create
random morphs between nearby faces and composite them onto the seed face.
"""

import numpy as np

from facewarp.morph import (FaceDataset, FaceSample, average_identity, generate_augmented,
                            nearest_neighbors)
from facewarp.warp import render_from_texture

rng = np.random.default_rng(0)
size = 40
base = np.array([[12, 14], [28, 14], [20, 22], [14, 30], [26, 30]], dtype=float)

samples = []
for i in range(6):
    lm = base + rng.normal(scale=1.0, size=base.shape)
    tex = np.clip(rng.uniform(0.3, 0.7) + 0.05 * rng.normal(size=(size, size, 3)), 0, 1)
    samples.append(FaceSample(f"face{i}", lm, tex))
dataset = FaceDataset(samples)
print("mean landmarks:\n", np.round(dataset.mean.landmarks, 2))

# Face distance weights landmarks by lambda = 10 against the texture term.
print("neighbors of face0:", nearest_neighbors(dataset, 0, k=3))

morphs = generate_augmented(dataset, 4, rng_seed=7, k=3, blur_sigma=2.0)
for spec, face in morphs:
    print(face.id, "seed", spec.seed_index, "neighbor", spec.neighbor_index,
          "weights", round(spec.landmark_weight, 3), round(spec.texture_weight, 3))

# Rendering puts a morph's texture onto its own landmarks.
photo = render_from_texture(morphs[0][1].texture, morphs[0][1].landmarks, dataset.mean)
print("rendered morph:", photo.shape)

# Averaging several photos of one identity.
avg = average_identity([s.texture for s in samples[:3]], [s.landmarks for s in samples[:3]])
print("average identity landmarks equal the mean of the inputs:",
      np.allclose(avg.landmarks, np.mean([s.landmarks for s in samples[:3]], axis=0)))
