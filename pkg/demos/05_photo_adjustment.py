"""
Face-referenced exposure and white balance
==========================================

Shift each YCrCb channel of a photo with a piecewise-linear curve so the
central face crop matches the normalized face's mean color.
"""

import numpy as np

from facewarp.color import adjust, color_shift, crop_box, mean_face_color, rgb_to_ycrcb

rng = np.random.default_rng(0)
print("default crop for 224x224:", crop_box(224, 224))

# The curve fixes 0 and 1 and sends m_P to m_N.
print("curve at 0, m_P, 1:", color_shift(np.array([0.0, 0.3, 1.0]), 0.3, 0.5))

# A dim, blue-tinted photo and a well-exposed reference.
reference = np.clip(np.array([0.70, 0.52, 0.45]) + 0.02 * rng.normal(size=(224, 224, 3)), 0, 1)
photo = np.clip(reference * np.array([0.6, 0.65, 0.8]) + 0.01 * rng.normal(size=reference.shape),
                0, 1)
out = adjust(photo, reference)

for name, img in (("photo", photo), ("reference", reference), ("adjusted", out)):
    print(f"{name:9s} crop mean YCrCb:", np.round(mean_face_color(rgb_to_ycrcb(img)), 4))
