"""Dense flow from sparse landmark displacements, bilinear resampling, and
the texture/shape decomposition built on top of them.

Conventions
-----------
* Images are ``(H, W, C)`` float arrays (``(H, W)`` is accepted and kept).
* Pixel centers sit at integer coordinates; ``x`` indexes columns.
* Flow is backward: output pixel ``(x, y)`` samples the source at
  ``(x + dx, y + dy)``.
* Samples outside ``[0, W-1] x [0, H-1]`` clamp to the edge.
"""

from dataclasses import dataclass

import numpy as np

from .config import DEFAULTS
from .errors import ShapeError, SingularSystemError
from .spline import SplineSystem, as_points


def as_image(img):
    arr = np.asarray(img, dtype=float)
    if arr.ndim == 2:
        return arr[:, :, None], True
    if arr.ndim != 3 or not 1 <= arr.shape[2] <= 4:
        raise ShapeError(f"image must be (H, W) or (H, W, C) with C in 1..4, got {arr.shape}")
    return arr, False


def _restore(arr, squeeze):
    return arr[:, :, 0] if squeeze else arr


def pixel_grid(width, height):
    """All pixel centers in row-major order, shape ``(H*W, 2)``."""
    ys, xs = np.mgrid[0:height, 0:width]
    return np.column_stack([xs.ravel(), ys.ravel()]).astype(float)


def boundary_anchors(width, height, per_edge=DEFAULTS.anchors_per_edge):
    """Zero-displacement points pinning the image border.

    Returns the four corners followed by ``per_edge`` evenly spaced interior
    points on the top, bottom, left and right edges, and an all-zero
    displacement array of the same shape.
    """
    if width <= 0 or height <= 0:
        raise ShapeError(f"image size must be positive, got {width}x{height}")
    if width < 2 or height < 2:
        raise ShapeError(f"boundary anchors need an image at least 2x2, got {width}x{height}")
    if per_edge < 1:
        raise ValueError("per_edge must be >= 1")
    xm, ym = width - 1.0, height - 1.0
    t = np.arange(1, per_edge + 1) / (per_edge + 1)
    pts = [np.array([[0, 0], [xm, 0], [0, ym], [xm, ym]])]
    pts.append(np.column_stack([t * xm, np.zeros(per_edge)]))
    pts.append(np.column_stack([t * xm, np.full(per_edge, ym)]))
    pts.append(np.column_stack([np.zeros(per_edge), t * ym]))
    pts.append(np.column_stack([np.full(per_edge, xm), t * ym]))
    anchors = np.vstack(pts).astype(float)
    return anchors, np.zeros_like(anchors)


class LandmarkFlow:
    """Spline flow for fixed control points on a fixed raster.

    The interpolation system and the per-pixel evaluation matrix are built
    once; :meth:`flow` and :meth:`vjp` are then a solve plus a matrix
    product each.
    """

    def __init__(self, control, width, height, per_edge=DEFAULTS.anchors_per_edge):
        control = as_points(control, "landmarks")
        anchors, _ = boundary_anchors(width, height, per_edge)
        _check_coincident(control, anchors)
        self.control = control
        self.width, self.height = int(width), int(height)
        self.n = len(control)
        self.system = SplineSystem(np.vstack([control, anchors]), k=1)
        self._basis = self.system.basis(pixel_grid(self.width, self.height))

    def flow(self, disp):
        d = np.asarray(disp, dtype=float)
        if d.shape != (self.n, 2):
            raise ShapeError(f"displacements must have shape ({self.n}, 2), got {d.shape}")
        values = np.zeros((self.system.n, 2))
        values[:self.n] = d
        raw = self.system.solve(values)
        return (self._basis @ raw).reshape(self.height, self.width, 2)

    def vjp(self, grad_flow):
        """Gradient w.r.t. the landmark displacements (anchors stay fixed)."""
        g = np.asarray(grad_flow, dtype=float)
        if g.shape != (self.height, self.width, 2):
            raise ShapeError(f"flow cotangent must be {(self.height, self.width, 2)}, got {g.shape}")
        return self.system.solve_transpose(self._basis.T @ g.reshape(-1, 2))[:self.n]


def _check_coincident(control, anchors):
    for i, p in enumerate(control):
        same = np.flatnonzero(np.all(control[i + 1:] == p, axis=1))
        if len(same):
            raise SingularSystemError(
                f"landmarks {i} and {i + 1 + same[0]} coincide at {tuple(p)}")
        hit = np.flatnonzero(np.all(anchors == p, axis=1))
        if len(hit):
            raise SingularSystemError(
                f"landmark {i} coincides with boundary anchor {hit[0]} at {tuple(p)}")


def build_flow(control, disp, width, height, per_edge=DEFAULTS.anchors_per_edge):
    """Interpolate sparse displacements into an ``(H, W, 2)`` flow field."""
    return LandmarkFlow(control, width, height, per_edge).flow(disp)


def _bilinear_terms(sx, sy, width, height):
    """Corner indices, weights and in-range masks for clamped bilinear sampling."""
    inx = (sx >= 0) & (sx <= width - 1)
    iny = (sy >= 0) & (sy <= height - 1)
    cx = np.clip(sx, 0, width - 1)
    cy = np.clip(sy, 0, height - 1)
    x0 = np.minimum(np.floor(cx).astype(np.intp), max(width - 2, 0))
    y0 = np.minimum(np.floor(cy).astype(np.intp), max(height - 2, 0))
    x1 = np.minimum(x0 + 1, width - 1)
    y1 = np.minimum(y0 + 1, height - 1)
    return x0, x1, y0, y1, cx - x0, cy - y0, inx, iny


def sample_bilinear(img, x, y):
    """Sample ``img`` at continuous coordinates.

    ``x`` and ``y`` may be scalars or equally shaped arrays; the result has
    their shape plus a trailing channel axis (dropped for 2-D images).
    """
    arr, squeeze = as_image(img)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("sample coordinates must be finite")
    h, w = arr.shape[:2]
    x0, x1, y0, y1, fx, fy, _, _ = _bilinear_terms(x, y, w, h)
    fx = fx[..., None]
    fy = fy[..., None]
    out = ((1 - fx) * (1 - fy) * arr[y0, x0] + fx * (1 - fy) * arr[y0, x1]
           + (1 - fx) * fy * arr[y1, x0] + fx * fy * arr[y1, x1])
    return out[..., 0] if squeeze else out


def _check_flow(arr, flow):
    f = np.asarray(flow, dtype=float)
    if f.shape != arr.shape[:2] + (2,):
        raise ShapeError(f"flow shape {f.shape} does not match image {arr.shape[:2]}")
    if not np.all(np.isfinite(f)):
        raise ValueError("flow contains non-finite values")
    return f


def warp_image(img, flow):
    """Backward-warp ``img`` by ``flow``: ``out[y, x] = img(x + dx, y + dy)``."""
    arr, squeeze = as_image(img)
    f = _check_flow(arr, flow)
    h, w = arr.shape[:2]
    ys, xs = np.mgrid[0:h, 0:w]
    out = sample_bilinear(arr, xs + f[..., 0], ys + f[..., 1])
    return _restore(out, squeeze)


def warp_vjp(img, flow, cotangent):
    """Adjoints of :func:`warp_image`.

    Returns ``(grad_img, grad_flow)`` for the scalar ``sum(cotangent * warp)``.
    The flow gradient is the one-sided bilinear derivative; it is zero along
    an axis where the sample was clamped.
    """
    arr, squeeze = as_image(img)
    f = _check_flow(arr, flow)
    ct = np.asarray(cotangent, dtype=float)
    if squeeze and ct.ndim == 2:
        ct = ct[:, :, None]
    if ct.shape != arr.shape:
        raise ShapeError(f"cotangent shape {ct.shape} does not match image {arr.shape}")
    h, w, c = arr.shape
    ys, xs = np.mgrid[0:h, 0:w]
    x0, x1, y0, y1, fx, fy, inx, iny = _bilinear_terms(xs + f[..., 0], ys + f[..., 1], w, h)

    grad_img = np.zeros((h * w, c))
    corners = [(y0, x0, (1 - fx) * (1 - fy)), (y0, x1, fx * (1 - fy)),
               (y1, x0, (1 - fx) * fy), (y1, x1, fx * fy)]
    for yy, xx, wt in corners:
        idx = (yy * w + xx).ravel()
        for ch in range(c):
            grad_img[:, ch] += np.bincount(idx, weights=(wt * ct[..., ch]).ravel(),
                                           minlength=h * w)

    fx3, fy3 = fx[..., None], fy[..., None]
    dsx = (1 - fy3) * (arr[y0, x1] - arr[y0, x0]) + fy3 * (arr[y1, x1] - arr[y1, x0])
    dsy = (1 - fx3) * (arr[y1, x0] - arr[y0, x0]) + fx3 * (arr[y1, x1] - arr[y0, x1])
    grad_flow = np.stack([(ct * dsx).sum(-1) * inx, (ct * dsy).sum(-1) * iny], axis=-1)
    return _restore(grad_img.reshape(h, w, c), squeeze), grad_flow


def warp_by_displacements(img, control, disp, per_edge=DEFAULTS.anchors_per_edge):
    """Warp so that the output at ``control[i]`` samples ``control[i] + disp[i]``."""
    arr, _ = as_image(img)
    h, w = arr.shape[:2]
    return warp_image(img, build_flow(control, disp, w, h, per_edge))


def warp_by_displacements_vjp(img, control, disp, cotangent,
                              per_edge=DEFAULTS.anchors_per_edge):
    """Gradients of :func:`warp_by_displacements` w.r.t. the image and ``disp``."""
    arr, _ = as_image(img)
    h, w = arr.shape[:2]
    lf = LandmarkFlow(control, w, h, per_edge)
    grad_img, grad_flow = warp_vjp(img, lf.flow(disp), cotangent)
    return grad_img, lf.vjp(grad_flow)


@dataclass(frozen=True)
class MeanGeometry:
    """Mean landmark positions and the canonical texture frame size."""
    landmarks: np.ndarray
    width: int
    height: int

    def __post_init__(self):
        pts = as_points(self.landmarks, "mean landmarks")
        if np.any(pts < 0) or np.any(pts[:, 0] > self.width - 1) or np.any(pts[:, 1] > self.height - 1):
            raise ShapeError("mean landmarks must lie inside the texture frame")
        pts.setflags(write=False)
        object.__setattr__(self, "landmarks", pts)

    @classmethod
    def from_landmark_sets(cls, landmark_sets, width, height):
        return cls(np.mean(np.asarray(landmark_sets, dtype=float), axis=0), width, height)


def _check_frame(arr, landmarks, mean):
    lm = as_points(landmarks, "landmarks")
    if lm.shape != mean.landmarks.shape:
        raise ShapeError(f"got {len(lm)} landmarks, mean geometry has {len(mean.landmarks)}")
    if arr.shape[:2] != (mean.height, mean.width):
        raise ShapeError(f"image is {arr.shape[1]}x{arr.shape[0]}, "
                         f"texture frame is {mean.width}x{mean.height}")
    return lm


def decompose_to_texture(img, landmarks, mean, per_edge=DEFAULTS.anchors_per_edge):
    """Warp a face image into the mean geometry, giving its shape-free texture."""
    arr, _ = as_image(img)
    lm = _check_frame(arr, landmarks, mean)
    return warp_by_displacements(img, mean.landmarks, lm - mean.landmarks, per_edge)


def render_from_texture(tex, landmarks, mean, per_edge=DEFAULTS.anchors_per_edge):
    """Warp a texture from the mean geometry onto ``landmarks``."""
    arr, _ = as_image(tex)
    lm = _check_frame(arr, landmarks, mean)
    return warp_by_displacements(tex, lm, mean.landmarks - lm, per_edge)
