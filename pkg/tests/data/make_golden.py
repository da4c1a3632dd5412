"""Regenerate the CLI golden fixtures from the test oracles.

Run from the repository root: ``python tests/data/make_golden.py``. Only the
oracles and pypng are used, never the package under test.
"""

import json
import struct
import sys
from pathlib import Path

import numpy as np
import png

HERE = Path(__file__).parent
sys.path.insert(0, str(HERE.parent))
from oracles import (adjust_reference, blend_reference, flow_reference,  # noqa: E402
                     warp_reference)

SIZE = 32


def anchors(w, h):
    xm, ym = w - 1.0, h - 1.0
    t = np.array([0.25, 0.5, 0.75])
    return np.vstack([[[0, 0], [xm, 0], [0, ym], [xm, ym]],
                      np.column_stack([t * xm, 0 * t]), np.column_stack([t * xm, 0 * t + ym]),
                      np.column_stack([0 * t, t * ym]), np.column_stack([0 * t + xm, t * ym])])


def save_png(path, img):
    # snap oracle round-off so exact ties still round half to even
    q = np.rint(np.round(np.clip(img, 0, 1) * 255, 6)).astype(np.uint8)
    h, w, c = q.shape
    with open(path, "wb") as fh:
        png.Writer(w, h, greyscale=c == 1, bitdepth=8).write(fh, q.reshape(h, w * c))
    return q / 255.0


def save_landmarks(path, pts, w, h):
    obj = {"width": w, "height": h, "points": [[float(x), float(y)] for x, y in pts]}
    path.write_text(json.dumps(obj) + "\n")


def pattern(seed, w=SIZE, h=SIZE):
    rng = np.random.default_rng(seed)
    ys, xs = np.mgrid[0:h, 0:w] / (w - 1)
    chans = [0.5 + 0.4 * np.sin(2 * np.pi * (a * xs + b * ys) + ph)
             for a, b, ph in rng.uniform(0.3, 1.5, size=(3, 3))]
    return np.stack(chans, axis=-1)


def warp_to_mean(img, lm, mean, w, h):
    flow = flow_reference(mean, lm - mean, w, h, anchors(w, h))
    return warp_reference(img, flow), flow


def main():
    mean = np.array([[10, 11], [21, 11], [16, 16], [11, 22], [21, 22], [16, 8]], dtype=float)
    lm_a = mean + np.array([[0.7, -0.4], [-0.5, 0.6], [0.3, 0.25], [-0.8, 0.1], [0.4, -0.9],
                            [0.2, 0.55]])
    lm_b = 2 * mean - lm_a
    img_a = save_png(HERE / "face_a.png", pattern(1))
    img_b = save_png(HERE / "face_b.png", pattern(2))
    save_landmarks(HERE / "face_a.json", lm_a, SIZE, SIZE)
    save_landmarks(HERE / "face_b.json", lm_b, SIZE, SIZE)
    save_landmarks(HERE / "mean.json", mean, SIZE, SIZE)

    tex_a, flow_a = warp_to_mean(img_a, lm_a, mean, SIZE, SIZE)
    save_png(HERE / "golden_warp_to_mean.png", tex_a)
    with open(HERE / "golden_flow.flw", "wb") as fh:
        fh.write(b"FLW1" + struct.pack("<2I", SIZE, SIZE) + flow_a.astype("<f4").tobytes())
    back = flow_reference(lm_a, mean - lm_a, SIZE, SIZE, anchors(SIZE, SIZE))
    save_png(HERE / "golden_warp_from_mean.png", warp_reference(img_a, back))

    tex_b, _ = warp_to_mean(img_b, lm_b, mean, SIZE, SIZE)
    save_png(HERE / "golden_average.png", (tex_a + tex_b) / 2)

    # composite on a small frame with an explicit mask
    n = 12
    fg = save_png(HERE / "comp_fg.png", pattern(3, n, n))
    bg = save_png(HERE / "comp_bg.png", pattern(4, n, n))
    ys, xs = np.mgrid[0:n, 0:n]
    mask = save_png(HERE / "comp_mask.png",
                    np.clip(1.2 - np.hypot(xs - 5.5, ys - 5.5) / 4, 0, 1)[..., None])[..., 0]
    out = np.stack([blend_reference(fg[..., c], bg[..., c], mask) for c in range(3)], axis=-1)
    save_png(HERE / "golden_composite.png", out)

    # photo adjustment: a dim, blue-tinted photo against a neutral reference
    photo = save_png(HERE / "adjust_photo.png", 0.6 * pattern(5) * np.array([0.8, 0.9, 1.0]))
    normalized = save_png(HERE / "adjust_normalized.png", pattern(6))
    box = (9, 9, 23, 23)  # round(100/224 * 32) = 14 pixels, centered
    save_png(HERE / "golden_adjust.png", adjust_reference(photo, normalized, box))


if __name__ == "__main__":
    main()
