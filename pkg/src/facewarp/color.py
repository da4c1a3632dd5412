"""Exposure and white-balance correction referenced to a normalized face.

Both the photo and its normalized face are converted to YCrCb, the central
face crops are averaged to mean colors ``m_P`` and ``m_N``, and every channel
of the photo goes through a piecewise-linear curve that fixes 0 and 1 and
sends ``m_P`` to ``m_N``.

YCrCb here is ITU-R BT.601 full range with chroma offset by 0.5, channel
order (Y, Cr, Cb)::

    Y  =  0.299 R + 0.587 G + 0.114 B
    Cr =  0.5 R - 0.418688 G - 0.081312 B + 0.5
    Cb = -0.168736 R - 0.331264 G + 0.5 B + 0.5
"""

import warnings

import numpy as np

from .config import DEFAULTS
from .errors import ShapeError

RGB_TO_YCRCB = np.array([
    [0.299, 0.587, 0.114],
    [0.5, -0.418688, -0.081312],
    [-0.168736, -0.331264, 0.5],
])
YCRCB_TO_RGB = np.linalg.inv(RGB_TO_YCRCB)
CHROMA_OFFSET = np.array([0.0, 0.5, 0.5])

DEGENERATE_TOL = 1e-6


class DegenerateChannelWarning(UserWarning):
    """A crop mean sits at 0 or 1, so that channel is left unchanged."""


def _three_channel(img):
    arr = np.asarray(img, dtype=float)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ShapeError(f"expected a 3-channel (H, W, 3) image, got {arr.shape}")
    return arr


def rgb_to_ycrcb(img):
    return _three_channel(img) @ RGB_TO_YCRCB.T + CHROMA_OFFSET


def ycrcb_to_rgb(img):
    return (_three_channel(img) - CHROMA_OFFSET) @ YCRCB_TO_RGB.T


def crop_box(width, height, fraction=DEFAULTS.crop_fraction):
    """Centered crop ``(x0, y0, x1, y1)`` with sides ``round(fraction * side)``.

    For a 224x224 image and the default fraction this is the central
    100x100 block, ``(62, 62, 162, 162)``.
    """
    cw = int(round(fraction * width))
    ch = int(round(fraction * height))
    if cw < 1 or ch < 1:
        raise ShapeError(f"crop of {fraction} leaves no pixels in a {width}x{height} image")
    x0 = (width - cw) // 2
    y0 = (height - ch) // 2
    return x0, y0, x0 + cw, y0 + ch


def mean_face_color(img, box=None, fraction=DEFAULTS.crop_fraction):
    """Per-channel mean over a crop box (default: the centered face crop)."""
    arr = np.asarray(img, dtype=float)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    h, w = arr.shape[:2]
    x0, y0, x1, y1 = crop_box(w, h, fraction) if box is None else box
    if not (0 <= x0 < x1 <= w and 0 <= y0 < y1 <= h):
        raise ShapeError(f"crop box {(x0, y0, x1, y1)} is empty or outside a {w}x{h} image")
    return arr[y0:y1, x0:x1].reshape(-1, arr.shape[2]).mean(axis=0)


def color_shift(p, m_p, m_n):
    """Piecewise-linear curve through (0, 0), (m_p, m_n) and (1, 1).

    The ratios are formed first so the three anchor points map exactly.
    """
    p = np.asarray(p, dtype=float)
    low = m_n * (p / m_p)
    high = 1.0 - (1.0 - m_n) * ((1.0 - p) / (1.0 - m_p))
    return np.where(p <= m_p, low, high)


def adjust(photo, normalized, fraction=DEFAULTS.crop_fraction):
    """Recolor ``photo`` so its face crop matches the normalized face's.

    A channel whose photo crop mean is within 1e-6 of 0 or 1 cannot be
    remapped; it passes through unchanged and a
    :class:`DegenerateChannelWarning` is emitted.
    """
    p_ycc = rgb_to_ycrcb(photo)
    n_ycc = rgb_to_ycrcb(normalized)
    m_p = mean_face_color(p_ycc, fraction=fraction)
    m_n = mean_face_color(n_ycc, fraction=fraction)
    out = p_ycc.copy()
    for c, name in enumerate("Y Cr Cb".split()):
        if m_p[c] <= DEGENERATE_TOL or m_p[c] >= 1 - DEGENERATE_TOL:
            warnings.warn(f"{name} crop mean {m_p[c]:.3g} is degenerate; channel left unchanged",
                          DegenerateChannelWarning, stacklevel=2)
            continue
        out[..., c] = color_shift(p_ycc[..., c], m_p[c], m_n[c])
    return np.clip(ycrcb_to_rgb(out), 0.0, 1.0)
