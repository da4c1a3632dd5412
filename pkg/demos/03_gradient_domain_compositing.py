"""
Gradient-domain compositing
===========================

Paste a face texture onto a background by matching gradients inside a soft
mask and colors where the mask is confident.
"""

import numpy as np

from facewarp.composite import BlendProblem, blend, build_mask

h = w = 48
ys, xs = np.mgrid[0:h, 0:w]
background = np.stack([0.2 + 0.5 * xs / w, 0.3 + 0.0 * xs, 0.6 - 0.3 * ys / h], axis=-1)
foreground = np.stack([0.8 + 0.1 * np.sin(xs / 3), 0.6 + 0.0 * xs, 0.5 + 0.1 * np.cos(ys / 4)],
                      axis=-1)

# Mask from the convex hull of a few "landmarks", softened by a Gaussian.
landmarks = np.array([[14, 12], [34, 12], [38, 28], [24, 38], [10, 28]], dtype=float)
mask = build_mask(landmarks, w, h, blur_sigma=3.0)
print("mask inside / on edge / outside:", mask[24, 24], round(mask[12, 24], 3), mask[2, 2])

out = blend(BlendProblem(foreground, background, mask))
print("center matches foreground:", np.max(np.abs(out[24, 24] - foreground[24, 24])))
# Outside the mask only gradients are matched, so the background keeps its
# structure but may shift in level to meet the pasted face without a seam.
print("corner gradient error:", np.max(np.abs((out[0, 1] - out[0, 0])
                                              - (background[0, 1] - background[0, 0]))))

# The sparse direct solver gives the same answer.
direct = blend(BlendProblem(foreground, background, mask), method="direct")
print("CG vs direct:", np.max(np.abs(out - direct)))
