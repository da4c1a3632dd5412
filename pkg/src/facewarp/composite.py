"""Gradient-domain compositing of a face texture onto a background.

The output ``T_o`` solves, per channel and in the least-squares sense,

    g * Dx T_o         = g * (Dx T_f * M + Dx T_b * (1 - M))
    g * Dy T_o         = g * (Dy T_f * M + Dy T_b * (1 - M))
    c * M * T_o        = c * M * T_f
    a * mean(T_o)      = a * mean(T_b)

with forward differences ``Dx``, ``Dy`` (replicated edge, so the last
column/row differences vanish and are dropped), the mask sampled at the
first pixel of each difference pair, ``g = gradient_weight``,
``c = color_weight`` and ``a = anchor_weight``. Weights multiply rows, so
they enter the normal equations squared. The mean row only matters where
the mask vanishes; there it fixes the constant the gradient rows leave free.
"""

from dataclasses import dataclass

import numpy as np
from scipy import ndimage, sparse
from scipy.sparse.linalg import spsolve
from scipy.spatial import ConvexHull, QhullError

from .config import DEFAULTS
from .errors import ConvergenceError, ShapeError
from .spline import as_points
from .warp import as_image

SUPERSAMPLE = 4


def hull_coverage(points, width, height, supersample=SUPERSAMPLE):
    """Fraction of each pixel's unit square covered by the convex hull of ``points``.

    Coverage is estimated on a ``supersample x supersample`` grid of
    sub-pixel samples, so a pixel whose center lies on a straight hull edge
    gets exactly one half.
    """
    pts = as_points(points, "landmarks")
    try:
        hull = ConvexHull(pts)
    except (QhullError, ValueError) as exc:
        raise ShapeError(f"landmarks do not span a 2-D convex hull: {exc}") from None
    off = (np.arange(supersample) + 0.5) / supersample - 0.5
    xs = (np.arange(width)[:, None] + off[None, :]).ravel()
    ys = (np.arange(height)[:, None] + off[None, :]).ravel()
    inside = np.ones((len(ys), len(xs)), dtype=bool)
    scale = np.abs(pts).max() + 1.0
    for nx, ny, c in hull.equations:
        inside &= ny * ys[:, None] + nx * xs[None, :] + c <= 1e-12 * scale
    cov = inside.reshape(height, supersample, width, supersample)
    return cov.mean(axis=(1, 3))


def build_mask(mean_landmarks, width, height, blur_sigma=DEFAULTS.blur_sigma):
    """Blending mask: convex hull of the landmarks softened by a Gaussian blur.

    The blur is a normalized Gaussian truncated at 4 sigma with replicated
    edges, so points at least 4 sigma inside (outside) the hull are exactly
    1 (0).
    """
    if blur_sigma < 0:
        raise ValueError("blur_sigma must be nonnegative")
    cov = hull_coverage(mean_landmarks, width, height)
    if blur_sigma > 0:
        cov = ndimage.gaussian_filter(cov, blur_sigma, mode="nearest", truncate=4.0)
    return np.clip(cov, 0.0, 1.0)


@dataclass
class BlendProblem:
    foreground: np.ndarray
    background: np.ndarray
    mask: np.ndarray
    gradient_weight: float = DEFAULTS.gradient_weight
    color_weight: float = DEFAULTS.color_weight
    anchor_weight: float = DEFAULTS.anchor_weight

    def __post_init__(self):
        fg, _ = as_image(self.foreground)
        bg, _ = as_image(self.background)
        m = np.asarray(self.mask, dtype=float)
        if m.ndim == 3 and m.shape[2] == 1:
            m = m[:, :, 0]
        if fg.shape != bg.shape:
            raise ShapeError(f"foreground {fg.shape} and background {bg.shape} differ")
        if m.shape != fg.shape[:2]:
            raise ShapeError(f"mask {m.shape} does not match textures {fg.shape[:2]}")
        if min(self.gradient_weight, self.color_weight, self.anchor_weight) <= 0:
            raise ValueError("blend weights must be positive")
        self.mask = np.clip(m, 0.0, 1.0)


def difference_operators(width, height):
    """Sparse forward-difference matrices ``(Dx, Dy)`` on a row-major raster."""
    def d1(n):
        return sparse.diags([-np.ones(n - 1), np.ones(n - 1)], [0, 1], shape=(n - 1, n))
    dx = sparse.kron(sparse.identity(height), d1(width), format="csr")
    dy = sparse.kron(d1(height), sparse.identity(width), format="csr")
    return dx, dy


class _NormalEquations:
    def __init__(self, problem):
        fg, self._squeeze = as_image(problem.foreground)
        bg, _ = as_image(problem.background)
        self.fg, self.bg = fg, bg
        h, w, _ = fg.shape
        self.shape = (h, w)
        self.n = h * w
        m = problem.mask
        g2 = problem.gradient_weight ** 2
        c2 = problem.color_weight ** 2
        self.a2 = problem.anchor_weight ** 2
        dx, dy = difference_operators(w, h)
        self.mx = m[:, :-1].ravel()
        self.my = m[:-1, :].ravel()
        self.dx, self.dy, self.g2 = dx, dy, g2
        self.color = c2 * m.ravel() ** 2
        self.sparse_part = (g2 * (dx.T @ dx + dy.T @ dy) + sparse.diags(self.color)).tocsr()
        self.diag = self.sparse_part.diagonal() + self.a2 / self.n ** 2

    def matvec(self, x):
        return self.sparse_part @ x + (self.a2 / self.n ** 2) * x.sum()

    def rhs(self, ch):
        f = self.fg[..., ch].ravel()
        b = self.bg[..., ch].ravel()
        tx = (self.dx @ f) * self.mx + (self.dx @ b) * (1 - self.mx)
        ty = (self.dy @ f) * self.my + (self.dy @ b) * (1 - self.my)
        return (self.g2 * (self.dx.T @ tx + self.dy.T @ ty) + self.color * f
                + (self.a2 / self.n ** 2) * b.sum())


def conjugate_gradient(matvec, b, x0, precond, rtol, maxiter):
    """Preconditioned CG; stops once ``|b - A x| <= rtol * |b|``."""
    x = x0.copy()
    r = b - matvec(x)
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return np.zeros_like(b), 0
    if np.linalg.norm(r) <= rtol * bnorm:
        return x, 0
    z = precond * r
    p = z.copy()
    rz = r @ z
    for it in range(1, maxiter + 1):
        ap = matvec(p)
        alpha = rz / (p @ ap)
        x += alpha * p
        r -= alpha * ap
        if np.linalg.norm(r) <= rtol * bnorm:
            return x, it
        z = precond * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise ConvergenceError(f"CG did not reach rtol={rtol:g} in {maxiter} iterations "
                           f"(residual {np.linalg.norm(r) / bnorm:.3g})")


def blend(problem, method="cg", rtol=DEFAULTS.cg_rtol, maxiter=None):
    """Solve the compositing least-squares problem.

    Parameters
    ----------
    problem : BlendProblem
    method : {"cg", "direct"}
        ``"cg"`` runs Jacobi-preconditioned conjugate gradient on the normal
        equations, warm-started from the mask-blended textures. ``"direct"``
        factors a sparse bordered form of the same equations.
    rtol : float
        Relative normal-equation residual at which CG stops.
    maxiter : int, optional
        Iteration cap, default ten times the pixel count.

    Returns
    -------
    ndarray
        The composited texture, same shape as the foreground.
    """
    ne = _NormalEquations(problem)
    h, w = ne.shape
    channels = ne.fg.shape[2]
    out = np.empty_like(ne.fg)
    m = problem.mask.ravel()
    if method == "direct":
        # bordered system [S r^T; r -1][x; mu] = [b_S; beta] keeps the mean row sparse
        r = np.full(ne.n, problem.anchor_weight / ne.n)
        K = sparse.bmat([[ne.sparse_part, sparse.csr_matrix(r[:, None])],
                         [sparse.csr_matrix(r[None, :]), -sparse.identity(1)]], format="csc")
    elif method != "cg":
        raise ValueError(f"unknown method {method!r}")
    maxiter = 10 * ne.n if maxiter is None else maxiter
    for ch in range(channels):
        b = ne.rhs(ch)
        if method == "cg":
            x0 = m * ne.fg[..., ch].ravel() + (1 - m) * ne.bg[..., ch].ravel()
            x, _ = conjugate_gradient(ne.matvec, b, x0, 1.0 / ne.diag, rtol, maxiter)
        else:
            beta = problem.anchor_weight * ne.bg[..., ch].mean()
            b_s = b - (ne.a2 / ne.n ** 2) * ne.bg[..., ch].ravel().sum()
            x = spsolve(K, np.concatenate([b_s, [beta]]))[:ne.n]
        out[..., ch] = x.reshape(h, w)
    return out[..., 0] if ne._squeeze else out
