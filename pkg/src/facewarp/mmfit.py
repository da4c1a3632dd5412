"""Fitting a linear 3-D morphable model to 2-D face landmarks.

Geometry follows the usual OpenGL pipeline. For shape coefficients ``s`` the
landmark vertices are

    V_w = [B^x s | B^y s | B^z s] + mu            (object space, n x 3)
    V_p = [V_w 1] M^T P^T                          (clip space, n x 4)
    V   = [x_p / w_p | y_p / w_p]                  (normalized device coords)

with ``M`` the modelview (uniform scale ``sigma``, optional rotation ``R``,
translation ``t``) and ``P`` a symmetric perspective frustum. The camera
looks down ``-z``; a face in front of it has negative eye-space ``z``.
Landmark targets are in normalized device coordinates; use
:func:`pixels_to_ndc` for pixel landmarks.

Colors are flattened vertex-major: ``(r0, g0, b0, r1, g1, b1, ...)``.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .config import DEFAULTS
from .errors import DivergenceError, NumericalError, ShapeError, SingularSystemError
from .warp import sample_bilinear

W_EPS = 1e-9


@dataclass(frozen=True)
class MorphableModel:
    mean_positions: np.ndarray   # (V, 3)
    basis_x: np.ndarray          # (V, p)
    basis_y: np.ndarray
    basis_z: np.ndarray
    mean_colors: np.ndarray      # (3V,)
    color_basis: np.ndarray      # (3V, p)
    landmark_indices: np.ndarray  # (n,)
    triangles: np.ndarray = field(default_factory=lambda: np.zeros((0, 3), dtype=np.int64))

    def __post_init__(self):
        conv = {
            "mean_positions": np.asarray(self.mean_positions, dtype=float),
            "basis_x": np.asarray(self.basis_x, dtype=float),
            "basis_y": np.asarray(self.basis_y, dtype=float),
            "basis_z": np.asarray(self.basis_z, dtype=float),
            "mean_colors": np.asarray(self.mean_colors, dtype=float).ravel(),
            "color_basis": np.asarray(self.color_basis, dtype=float),
            "landmark_indices": np.asarray(self.landmark_indices, dtype=np.int64).ravel(),
            "triangles": np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3),
        }
        for k, v in conv.items():
            object.__setattr__(self, k, v)
        V = conv["mean_positions"].shape[0]
        if conv["mean_positions"].shape != (V, 3):
            raise ShapeError("mean_positions must be (V, 3)")
        p = conv["basis_x"].shape[1] if conv["basis_x"].ndim == 2 else -1
        for name in ("basis_x", "basis_y", "basis_z"):
            if conv[name].shape != (V, p):
                raise ShapeError(f"{name} must be ({V}, p) with a common p")
        if conv["mean_colors"].shape != (3 * V,):
            raise ShapeError(f"mean_colors must have {3 * V} entries")
        if conv["color_basis"].ndim != 2 or conv["color_basis"].shape[0] != 3 * V:
            raise ShapeError(f"color_basis must be ({3 * V}, q)")
        for name in ("landmark_indices", "triangles"):
            idx = conv[name]
            if idx.size and (idx.min() < 0 or idx.max() >= V):
                raise ShapeError(f"{name} reference vertices outside 0..{V - 1}")

    @property
    def vertex_count(self):
        return self.mean_positions.shape[0]

    @property
    def n_coefficients(self):
        return self.basis_x.shape[1]

    @property
    def n_landmarks(self):
        return len(self.landmark_indices)

    def shape(self, s):
        """All vertex positions ``(V, 3)`` for shape coefficients ``s``."""
        s = np.asarray(s, dtype=float)
        return self.mean_positions + np.column_stack(
            [self.basis_x @ s, self.basis_y @ s, self.basis_z @ s])

    def landmark_rows(self):
        """Mean positions and stacked bases ``(n, 3, p)`` of the landmark vertices."""
        li = self.landmark_indices
        basis = np.stack([self.basis_x[li], self.basis_y[li], self.basis_z[li]], axis=1)
        return self.mean_positions[li], basis


def perspective_matrix(fov_degrees=DEFAULTS.fov_degrees, aspect=1.0,
                       near=DEFAULTS.near, far=DEFAULTS.far):
    """Symmetric OpenGL-style frustum; ``fov_degrees`` is the vertical field of view."""
    f = 1.0 / np.tan(np.radians(fov_degrees) / 2)
    return np.array([
        [f / aspect, 0, 0, 0],
        [0, f, 0, 0],
        [0, 0, (far + near) / (near - far), 2 * far * near / (near - far)],
        [0, 0, -1, 0],
    ])


@dataclass(frozen=True)
class CameraParams:
    translation: tuple = (0.0, 0.0, -10.0)
    scale: float = 1.0
    fov_degrees: float = DEFAULTS.fov_degrees
    near: float = DEFAULTS.near
    far: float = DEFAULTS.far
    aspect: float = 1.0
    rotation: np.ndarray = None

    def __post_init__(self):
        if not 0 < self.near < self.far:
            raise ValueError("need 0 < near < far")
        if not self.scale > 0:
            raise ValueError("scale must be positive")
        object.__setattr__(self, "translation", tuple(float(v) for v in self.translation))
        rot = np.eye(3) if self.rotation is None else np.asarray(self.rotation, dtype=float)
        if rot.shape != (3, 3):
            raise ShapeError("rotation must be 3x3")
        object.__setattr__(self, "rotation", rot)

    @property
    def t(self):
        return np.array(self.translation)

    def projection(self):
        return perspective_matrix(self.fov_degrees, self.aspect, self.near, self.far)

    def modelview(self):
        m = np.eye(4)
        m[:3, :3] = self.scale * self.rotation
        m[:3, 3] = self.translation
        return m


def pixels_to_ndc(points, width, height):
    """Pixel coordinates (centers at integers, y down) to NDC (y up)."""
    pts = np.asarray(points, dtype=float)
    return np.column_stack([(2 * pts[:, 0] + 1) / width - 1, 1 - (2 * pts[:, 1] + 1) / height])


def ndc_to_pixels(points, width, height):
    pts = np.asarray(points, dtype=float)
    return np.column_stack([((pts[:, 0] + 1) * width - 1) / 2, ((1 - pts[:, 1]) * height - 1) / 2])


def project_points(points, cam):
    """Project object-space points ``(N, 3)`` to NDC ``(N, 2)``."""
    pts = np.asarray(points, dtype=float)
    homo = np.column_stack([pts, np.ones(len(pts))])
    clip = homo @ cam.modelview().T @ cam.projection().T
    w = clip[:, 3]
    if np.any(np.abs(w) < W_EPS):
        raise NumericalError("a point projects onto the camera plane (w_p ~ 0)")
    return clip[:, :2] / w[:, None]


def project_landmark_vertices(model, s, cam):
    s = np.asarray(s, dtype=float)
    if s.shape != (model.n_coefficients,):
        raise ShapeError(f"expected {model.n_coefficients} shape coefficients, got {s.shape}")
    mu, basis = model.landmark_rows()
    return project_points(mu + basis @ s, cam)


def _residual_and_jacobian(model, s, cam, targets):
    """Residual ``V - L`` (flattened, 2n) and its Jacobian w.r.t. ``(s, t, sigma)``."""
    mu, basis = model.landmark_rows()
    vw = mu + basis @ s
    R = cam.rotation
    sigma = cam.scale
    eye = sigma * vw @ R.T + cam.t
    P = cam.projection()
    clip = eye @ P[:, :3].T + P[:, 3]
    w = clip[:, 3]
    if np.any(np.abs(w) < W_EPS):
        raise NumericalError("a landmark vertex projects onto the camera plane (w_p ~ 0)")
    u = clip[:, 0] / w
    v = clip[:, 1] / w
    res = np.column_stack([u - targets[:, 0], v - targets[:, 1]]).ravel()

    # d(u, v)/d(eye): (n, 2, 3)
    du = (P[0, :3][None, :] - u[:, None] * P[3, :3][None, :]) / w[:, None]
    dv = (P[1, :3][None, :] - v[:, None] * P[3, :3][None, :]) / w[:, None]
    de = np.stack([du, dv], axis=1)
    n, p = len(vw), model.n_coefficients
    J = np.empty((2 * n, p + 4))
    J[:, :p] = (de @ (sigma * R) @ basis).reshape(2 * n, p)
    J[:, p:p + 3] = de.reshape(2 * n, 3)
    J[:, p + 3] = np.einsum("nij,nj->ni", de, vw @ R.T).ravel()
    return res, J


def _as_targets(model, targets):
    tg = np.asarray(targets, dtype=float)
    if tg.shape != (model.n_landmarks, 2):
        raise ShapeError(f"targets must be ({model.n_landmarks}, 2), got {tg.shape}")
    return tg


def shape_loss_and_gradient(model, s, cam, targets, lam=DEFAULTS.shape_lambda):
    """Loss ``|L - V|^2 + lam |s|^2`` and its gradients.

    Returns ``(loss, grad_s, grad_t, grad_sigma)``.
    """
    s = np.asarray(s, dtype=float)
    tg = _as_targets(model, targets)
    res, J = _residual_and_jacobian(model, s, cam, tg)
    loss = float(res @ res + lam * s @ s)
    g = 2 * J.T @ res
    p = model.n_coefficients
    return loss, g[:p] + 2 * lam * s, g[p:p + 3], float(g[p + 3])


@dataclass
class ShapeFitResult:
    s: np.ndarray
    translation: np.ndarray
    scale: float
    loss: float
    iterations: int
    converged: bool
    history: list = field(default_factory=list, repr=False)

    def camera(self, like):
        return replace(like, translation=tuple(self.translation), scale=self.scale)

    def to_dict(self):
        return {"s": [float(v) for v in self.s], "t": [float(v) for v in self.translation],
                "sigma": float(self.scale), "loss": float(self.loss),
                "iterations": int(self.iterations), "converged": bool(self.converged)}


def initial_camera(model, targets, fov_degrees=DEFAULTS.fov_degrees,
                   near=DEFAULTS.near, far=DEFAULTS.far, aspect=1.0):
    """Pose guess for :func:`fit_shape`.

    The mean face is centered on the view axis at the depth where it fills
    the frame, then scaled so its projected bounding box matches the
    targets' and shifted onto the targets' center.
    """
    tg = _as_targets(model, targets)
    mu, _ = model.landmark_rows()
    c = mu.mean(axis=0)
    extent = np.max(np.abs(mu[:, :2] - c[:2]))
    if extent <= 0:
        raise ShapeError("landmark vertices of the mean face have no extent")
    P = perspective_matrix(fov_degrees, aspect, near, far)
    focal = np.array([P[0, 0], P[1, 1]])
    depth = focal.max() * extent
    base = CameraParams(translation=(-c[0], -c[1], -c[2] - depth), fov_degrees=fov_degrees,
                        near=near, far=far, aspect=aspect)
    proj = project_points(mu, base)
    size_mean = np.ptp(proj, axis=0).max()
    size_tgt = np.ptp(tg, axis=0).max()
    sigma = size_tgt / size_mean if size_mean > 0 and size_tgt > 0 else 1.0
    shift = (tg.mean(axis=0) - proj.mean(axis=0) * sigma) * depth / focal
    t = (-sigma * c[0] + shift[0], -sigma * c[1] + shift[1], -sigma * c[2] - depth)
    return CameraParams(translation=t, scale=sigma, fov_degrees=fov_degrees, near=near, far=far,
                        aspect=aspect)


def fit_shape(model, targets, cam_init=None, lam=DEFAULTS.shape_lambda,
              max_iterations=DEFAULTS.max_iterations, tol=DEFAULTS.gradient_tolerance,
              method="gauss-newton"):
    """Fit shape coefficients, translation and scale to landmark targets.

    Descent with a backtracking (Armijo) line search on the joint parameters
    ``(s, t, sigma)``, starting from ``s = 0`` and ``cam_init`` (or
    :func:`initial_camera`). ``method="gradient"`` steps along the raw
    negative gradient; ``method="gauss-newton"`` (default) preconditions the
    gradient with the damped Gauss-Newton matrix, which copes with the
    near-degeneracy between scale and depth under a narrow field of view.
    Every accepted step lowers the loss. Stops once the gradient norm falls
    below ``tol`` or after ``max_iterations`` steps.
    """
    tg = _as_targets(model, targets)
    if model.n_landmarks < 3:
        raise ShapeError("need at least 3 landmarks")
    if method not in ("gauss-newton", "gradient"):
        raise ValueError(f"unknown method {method!r}")
    cam = initial_camera(model, tg) if cam_init is None else cam_init
    p = model.n_coefficients
    theta = np.concatenate([np.zeros(p), cam.t, [cam.scale]])
    reg = np.concatenate([np.full(p, lam), np.zeros(4)])

    def unpack(th):
        return th[:p], replace(cam, translation=tuple(th[p:p + 3]), scale=th[p + 3])

    def evaluate(th):
        if th[p + 3] <= 0:
            return np.inf, None, None
        s, c = unpack(th)
        try:
            res, J = _residual_and_jacobian(model, s, c, tg)
        except NumericalError:
            return np.inf, None, None
        if np.any(clip_w(c, model, s) >= 0):  # behind the camera
            return np.inf, None, None
        return float(res @ res + lam * s @ s), res, J

    loss, res, J = evaluate(theta)
    if not np.isfinite(loss):
        raise DivergenceError("initial pose gives a non-finite loss")
    history = [loss]
    step = 1.0
    converged = False
    it = 0
    for it in range(1, max_iterations + 1):
        grad = 2 * J.T @ res + 2 * reg * theta
        if np.linalg.norm(grad) < tol:
            converged = True
            it -= 1
            break
        if method == "gauss-newton":
            H = 2 * (J.T @ J + np.diag(reg))
            H += 1e-12 * np.trace(H) / len(H) * np.eye(len(H))
            direction = np.linalg.solve(H, grad)
            alpha = 1.0
        else:
            direction = grad
            alpha = min(2 * step, 1e6)
        slope = grad @ direction
        while True:
            trial = theta - alpha * direction
            new_loss, new_res, new_J = evaluate(trial)
            if new_loss <= loss - DEFAULTS.armijo_c * alpha * slope:
                break
            alpha *= 0.5
            if alpha < 1e-20:
                break
        if alpha < 1e-20 or new_loss > loss:
            # no further decrease representable; stop at the current point
            converged = np.linalg.norm(grad) < tol
            break
        if not np.isfinite(new_loss):
            raise DivergenceError("loss became non-finite")
        theta, loss, res, J, step = trial, new_loss, new_res, new_J, alpha
        history.append(loss)
    s, c = unpack(theta)
    return ShapeFitResult(s=s, translation=c.t, scale=float(c.scale), loss=loss,
                          iterations=it, converged=converged, history=history)


def clip_w(cam, model, s):
    """Eye-space z of the landmark vertices (negative in front of the camera)."""
    mu, basis = model.landmark_rows()
    return (cam.scale * (mu + basis @ s) @ cam.rotation.T + cam.t)[:, 2]


def vertex_normals(positions, triangles):
    """Area-weighted unit vertex normals; winding is counter-clockwise outward."""
    pos = np.asarray(positions, dtype=float)
    tri = np.asarray(triangles, dtype=np.int64)
    a, b, c = pos[tri[:, 0]], pos[tri[:, 1]], pos[tri[:, 2]]
    fn = np.cross(b - a, c - a)
    normals = np.zeros_like(pos)
    for k in range(3):
        np.add.at(normals, tri[:, k], fn)
    norm = np.linalg.norm(normals, axis=1, keepdims=True)
    return np.divide(normals, norm, out=np.zeros_like(normals), where=norm > 0)


def rotation_matrix(pitch, yaw, roll):
    """Rotation ``Rz(roll) @ Ry(yaw) @ Rx(pitch)``; angles in radians."""
    cx, sx = np.cos(pitch), np.sin(pitch)
    cy, sy = np.cos(yaw), np.sin(yaw)
    cz, sz = np.cos(roll), np.sin(roll)
    rx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
    ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    rz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
    return rz @ ry @ rx


def jittered_cameras(model, cam, count, degrees, rng):
    """Cameras rotated by uniform random angles about the mean face's centroid."""
    center = model.mean_positions.mean(axis=0)
    cams = []
    for _ in range(count):
        R = rotation_matrix(*np.radians(rng.uniform(-degrees, degrees, size=3))) @ cam.rotation
        t = cam.t + cam.scale * (cam.rotation @ center - R @ center)
        cams.append(replace(cam, rotation=R, translation=tuple(t)))
    return cams


def correspond_by_voting(model, cam, detector, jitter_count=DEFAULTS.jitter_count,
                         jitter_degrees=DEFAULTS.jitter_degrees, *, rng_seed):
    """Pick the landmark vertex for each detected landmark by majority vote.

    ``detector(camera)`` receives each jittered camera and must return the
    ``(n, 2)`` NDC landmarks it finds in a render of the mean face from
    that camera. Each landmark votes for the nearest projected front-facing
    vertex; the most frequent vertex wins, ties going to the lower index.
    """
    if jitter_count < 1:
        raise ValueError("jitter_count must be >= 1")
    rng = np.random.default_rng(rng_seed)
    normals = vertex_normals(model.mean_positions, model.triangles)
    votes = []
    for jcam in jittered_cameras(model, cam, jitter_count, jitter_degrees, rng):
        lm = np.asarray(detector(jcam), dtype=float)
        if lm.ndim != 2 or lm.shape[1] != 2:
            raise ShapeError(f"detector returned shape {lm.shape}, expected (n, 2)")
        front = np.flatnonzero((normals @ jcam.rotation.T)[:, 2] > 0)
        if len(front) == 0:
            raise NumericalError("no front-facing vertices for a jittered camera")
        proj = project_points(model.mean_positions[front], jcam)
        d2 = ((lm[:, None, :] - proj[None, :, :]) ** 2).sum(-1)
        votes.append(front[np.argmin(d2, axis=1)])
    votes = np.array(votes)
    result = []
    for col in votes.T:
        vals, counts = np.unique(col, return_counts=True)
        result.append(int(vals[np.argmax(counts)]))
    return np.array(result, dtype=np.int64)


def vertex_confidence(mask, projected, normals_z, mode="as-written"):
    """Per-vertex color confidence from the hull mask and the normal.

    ``mode="as-written"`` uses ``m * (1 - n_z)``; ``mode="intent"`` uses
    ``m * n_z`` so that camera-facing vertices are trusted most. ``projected``
    holds pixel coordinates into ``mask``. Results are clamped to [0, 1].
    """
    pts = np.asarray(projected, dtype=float)
    nz = np.asarray(normals_z, dtype=float).ravel()
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) != len(nz):
        raise ShapeError("projected must be (V, 2) and normals_z (V,)")
    m = np.asarray(mask, dtype=float)
    if m.ndim == 3:
        m = m[..., 0]
    mv = sample_bilinear(m, pts[:, 0], pts[:, 1])
    if mode == "as-written":
        alpha = mv * (1.0 - nz)
    elif mode == "intent":
        alpha = mv * nz
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return np.clip(alpha, 0.0, 1.0)


def _tiled(alpha, size):
    a = np.asarray(alpha, dtype=float).ravel()
    if a.size * 3 == size:
        return np.repeat(a, 3)
    if a.size == size:
        return a
    raise ShapeError(f"{a.size} confidences do not match {size} color entries")


def fit_texture_coeffs(model, c_p, alpha, lambda_ridge):
    """Ridge projection of vertex colors onto the color basis.

    Solves ``[(B o A); lambda I] z = [(c_p - mu) o a; 0]`` in the least-squares
    sense through its normal equations and returns ``(z, c_b)`` with
    ``c_b = B z + mu``.

    Compatibility note: the reconstruction is sometimes written ``B^T z + mu``.
    With ``B`` stored as ``(3V, p)``, as the system rows require, only
    ``B z`` has the right shape, so that is what is computed.
    """
    B = model.color_basis
    mu = model.mean_colors
    cp = np.asarray(c_p, dtype=float).ravel()
    if cp.shape != mu.shape:
        raise ShapeError(f"c_p has {cp.size} entries, model has {mu.size}")
    if lambda_ridge < 0:
        raise ValueError("lambda_ridge must be nonnegative")
    a = _tiled(alpha, cp.size)
    Ba = B * a[:, None]
    N = Ba.T @ Ba + lambda_ridge ** 2 * np.eye(B.shape[1])
    rhs = Ba.T @ ((cp - mu) * a)
    try:
        L = np.linalg.cholesky(N)
    except np.linalg.LinAlgError:
        raise SingularSystemError("texture normal matrix is singular; use lambda_ridge > 0") from None
    z = np.linalg.solve(L.T, np.linalg.solve(L, rhs))
    return z, B @ z + mu


def blend_vertex_colors(c_p, c_b, alpha):
    """``c_p * a + c_b * (1 - a)`` with per-vertex confidences tiled over channels."""
    cp = np.asarray(c_p, dtype=float).ravel()
    cb = np.asarray(c_b, dtype=float).ravel()
    if cp.shape != cb.shape:
        raise ShapeError("c_p and c_b differ in length")
    a = _tiled(alpha, cp.size)
    return cp * a + cb * (1 - a)


def make_synthetic_model(n_vertices=500, n_coefficients=20, n_landmarks=65, seed=0,
                         basis_scale=0.05):
    """A small random morphable model on a face-like height-field mesh.

    Vertices form a grid over ``[-1, 1] x [-1.2, 1.2]`` bulged towards
    ``+z`` (the camera side). Each shape basis vector is a smooth random
    field plus independent per-vertex variation; purely smooth bases leave
    the landmark fit badly conditioned. Landmarks are distinct random
    vertices away from the border.
    """
    rng = np.random.default_rng(seed)
    rows = int(np.floor(np.sqrt(n_vertices)))
    while n_vertices % rows:
        rows -= 1
    cols = n_vertices // rows
    ys, xs = np.meshgrid(np.linspace(-1.2, 1.2, rows), np.linspace(-1, 1, cols), indexing="ij")
    zs = 0.6 * (1 - 0.35 * xs ** 2 - 0.25 * ys ** 2)
    pos = np.column_stack([xs.ravel(), ys.ravel(), zs.ravel()])
    tris = []
    for r in range(rows - 1):
        for c in range(cols - 1):
            i = r * cols + c
            tris.append((i, i + 1, i + cols + 1))
            tris.append((i, i + cols + 1, i + cols))
    V = len(pos)
    feats = np.column_stack([np.cos(np.pi * (a * pos[:, 0] + b * pos[:, 1]) / 2)
                             for a in range(3) for b in range(3)])

    def one_axis():
        smooth = feats @ rng.normal(size=(feats.shape[1], n_coefficients)) / 3.0
        return basis_scale * (0.5 * smooth + rng.normal(size=(V, n_coefficients)))

    bases = [one_axis() for _ in range(3)]
    interior = np.flatnonzero((np.abs(pos[:, 0]) < 0.85) & (np.abs(pos[:, 1]) < 1.0))
    lm_idx = np.sort(rng.choice(interior, size=n_landmarks, replace=False))
    mean_col = np.clip(0.5 + 0.1 * rng.normal(size=3 * V), 0, 1)
    color_basis = 0.05 * rng.normal(size=(3 * V, n_coefficients))
    return MorphableModel(pos, bases[0], bases[1], bases[2], mean_col, color_basis,
                          lm_idx, np.array(tris))
