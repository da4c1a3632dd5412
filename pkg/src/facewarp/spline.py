"""Polyharmonic spline interpolation in 2-D.

The interpolant is

    s(x, y) = sum_i w_i * phi_k(|(x, y) - p_i|) + v1 * x + v2 * y + v3

with ``phi_1(r) = r`` and ``phi_2(r) = r**2 log r`` (thin-plate). The weights
and affine part come from the bordered system

    [ A  B^T ] [w]   [g]
    [ B  0   ] [c] = [0]

where ``A_ij = phi_k(|p_i - p_j|)`` and ``B`` has rows ``(1, x, y)``. The raw
solution therefore orders the affine part as (constant, x, y);
:class:`SplineParams` re-exposes it as ``(v1, v2, v3) = (x, y, constant)``.
The coefficients are sometimes called ``a, b, c``; they are the same numbers
as ``v1, v2, v3``.

Fit-then-evaluate is linear in the control values, so the gradient with
respect to those values is a single transposed solve (:func:`spline_vjp`).
Control-point positions are treated as constants.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import lu_factor, lu_solve
from scipy.spatial.distance import cdist

from .config import DEFAULTS
from .errors import ShapeError, SingularSystemError

PIVOT_RATIO_TOL = 1e-12


def rbf_kernel(r, k=1):
    """Evaluate the polyharmonic kernel ``phi_k`` on scalars or arrays.

    ``phi_2(0)`` is taken as 0, the continuous limit of ``r**2 log r``.
    """
    arr = np.asarray(r, dtype=float)
    if np.any(arr < 0) or not np.all(np.isfinite(arr)):
        raise ValueError("rbf_kernel needs finite, nonnegative distances")
    if k == 1:
        out = arr.copy()
    elif k == 2:
        out = np.zeros_like(arr)
        pos = arr > 0
        out[pos] = arr[pos] ** 2 * np.log(arr[pos])
    else:
        raise ValueError(f"unsupported kernel order k={k!r}; expected 1 or 2")
    return out if out.ndim else float(out)


def as_points(points, name="points"):
    pts = np.array(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ShapeError(f"{name} must have shape (n, 2), got {pts.shape}")
    if not np.all(np.isfinite(pts)):
        raise ValueError(f"{name} contains non-finite coordinates")
    return pts


def check_control_points(points):
    """Validate control points and return them as an ``(n, 2)`` float array.

    Raises :class:`SingularSystemError` naming the offending indices when
    points coincide or when all of them lie on one line.
    """
    pts = as_points(points)
    n = len(pts)
    if n < 3:
        raise SingularSystemError(f"need at least 3 control points, got {n}")
    d = cdist(pts, pts)
    np.fill_diagonal(d, np.inf)
    dup = np.argwhere(d == 0)
    if len(dup):
        i, j = sorted(dup[0])
        raise SingularSystemError(
            f"control points {i} and {j} coincide at {tuple(pts[i])}")
    centered = pts - pts.mean(axis=0)
    sv = np.linalg.svd(centered, compute_uv=False)
    if sv[1] <= 1e-12 * max(sv[0], 1.0):
        raise SingularSystemError(
            f"all {n} control points are collinear; the affine part is undetermined")
    return pts


class SplineSystem:
    """LU-factored interpolation system for a fixed set of control points.

    Factoring once lets several channels (e.g. horizontal and vertical
    displacement) and the adjoint share the same work.
    """

    def __init__(self, points, k=DEFAULTS.spline_order):
        if k not in (1, 2):
            raise ValueError(f"unsupported kernel order k={k!r}; expected 1 or 2")
        self.points = check_control_points(points)
        self.k = k
        n = len(self.points)
        self.n = n
        K = np.zeros((n + 3, n + 3))
        K[:n, :n] = rbf_kernel(cdist(self.points, self.points), k)
        B = np.vstack([np.ones(n), self.points[:, 0], self.points[:, 1]])
        K[:n, n:] = B.T
        K[n:, :n] = B
        self.matrix = K
        self._lu = lu_factor(K, check_finite=False)
        diag = np.abs(np.diag(self._lu[0]))
        if diag.min() <= PIVOT_RATIO_TOL * diag.max():
            raise SingularSystemError(
                f"interpolation system is singular (pivot ratio "
                f"{diag.min() / diag.max():.3g}) for {n} control points")

    def solve(self, values):
        """Return raw coefficients ``[w; c_const; c_x; c_y]`` for ``values``.

        ``values`` may be ``(n,)`` or ``(n, channels)``.
        """
        g = np.asarray(values, dtype=float)
        if g.shape[0] != self.n:
            raise ShapeError(f"expected {self.n} values, got {g.shape[0]}")
        if not np.all(np.isfinite(g)):
            raise ValueError("control values must be finite")
        rhs = np.zeros((self.n + 3,) + g.shape[1:])
        rhs[:self.n] = g
        return lu_solve(self._lu, rhs, check_finite=False)

    def solve_transpose(self, rhs):
        return lu_solve(self._lu, rhs, trans=1, check_finite=False)

    def basis(self, queries):
        """Evaluation matrix ``E`` with ``s(queries) = E @ raw_coefficients``."""
        q = as_points(queries, "queries")
        E = np.empty((len(q), self.n + 3))
        E[:, :self.n] = rbf_kernel(cdist(q, self.points), self.k)
        E[:, self.n] = 1.0
        E[:, self.n + 1:] = q
        return E

    def evaluate(self, raw, queries):
        return self.basis(queries) @ raw

    def values_vjp(self, queries, cotangent):
        """Gradient of ``sum(cotangent * s(queries))`` w.r.t. the control values."""
        ct = np.asarray(cotangent, dtype=float)
        E = self.basis(queries)
        if ct.shape[0] != len(E):
            raise ShapeError(f"cotangent has {ct.shape[0]} rows for {len(E)} queries")
        return self.solve_transpose(E.T @ ct)[:self.n]


@dataclass(frozen=True)
class SplineParams:
    """Fitted spline for one scalar channel.

    ``affine`` is ``(v1, v2, v3)``: x-coefficient, y-coefficient, constant.
    """
    points: np.ndarray
    order: int
    weights: np.ndarray
    affine: tuple

    def __call__(self, queries):
        return eval_spline(self, queries)

    @property
    def raw(self):
        v1, v2, v3 = self.affine
        return np.concatenate([self.weights, [v3, v1, v2]])


def fit_spline(points, values, k=DEFAULTS.spline_order):
    """Fit the interpolating spline through ``values`` at ``points``."""
    system = SplineSystem(points, k)
    g = np.asarray(values, dtype=float)
    if g.shape != (system.n,):
        raise ShapeError(f"expected {system.n} scalar values, got shape {g.shape}")
    raw = system.solve(g)
    n = system.n
    for arr in (system.points, raw):
        arr.setflags(write=False)
    return SplineParams(points=system.points, order=k, weights=raw[:n],
                        affine=(float(raw[n + 1]), float(raw[n + 2]), float(raw[n])))


def eval_spline(params, queries):
    q = as_points(queries, "queries")
    r = cdist(q, params.points)
    v1, v2, v3 = params.affine
    return rbf_kernel(r, params.order) @ params.weights + v1 * q[:, 0] + v2 * q[:, 1] + v3


def spline_vjp(points, values, k, queries, cotangent):
    """Vector-Jacobian product of fit-then-evaluate with respect to ``values``.

    Parameters
    ----------
    points : (n, 2) array
        Control points.
    values : (n,) array
        Control values. The map is linear in them, so they only enter through
        validation; the gradient does not depend on their magnitude.
    k : int
        Kernel order.
    queries : (m, 2) array
        Evaluation points.
    cotangent : (m,) array
        Weights on the evaluated outputs.

    Returns
    -------
    (n,) array
        Gradient of ``sum_j cotangent[j] * s(queries[j])``.
    """
    system = SplineSystem(points, k)
    g = np.asarray(values, dtype=float)
    if g.shape != (system.n,):
        raise ShapeError(f"expected {system.n} scalar values, got shape {g.shape}")
    if not np.all(np.isfinite(g)):
        raise ValueError("control values must be finite")
    return system.values_vjp(queries, cotangent)
