"""Independent reference implementations used as test oracles.

Deliberately naive: explicit loops and textbook formulas, sharing no code
with the package under test.
"""

import math

import numpy as np


def central_difference(f, x, h):
    """Central finite-difference gradient of scalar ``f`` at array ``x``."""
    x = np.array(x, dtype=float)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    g = grad.reshape(-1)
    for j in range(flat.size):
        old = flat[j]
        flat[j] = old + h
        fp = f(x)
        flat[j] = old - h
        fm = f(x)
        flat[j] = old
        g[j] = (fp - fm) / (2 * h)
    return grad


def rel_err(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-12)


def spline_reference(points, values, queries, k=1):
    """Fit with numpy.linalg.solve and evaluate by direct summation."""
    pts = [tuple(map(float, p)) for p in points]
    n = len(pts)

    def phi(r):
        if k == 1:
            return r
        return 0.0 if r == 0 else r * r * math.log(r)

    K = np.zeros((n + 3, n + 3))
    for i, (xi, yi) in enumerate(pts):
        for j, (xj, yj) in enumerate(pts):
            K[i, j] = phi(math.hypot(xi - xj, yi - yj))
        K[i, n:] = (1.0, xi, yi)
        K[n:, i] = (1.0, xi, yi)
    rhs = np.zeros(n + 3)
    rhs[:n] = values
    sol = np.linalg.solve(K, rhs)
    out = []
    for qx, qy in queries:
        s = sol[n] + sol[n + 1] * qx + sol[n + 2] * qy
        for i, (xi, yi) in enumerate(pts):
            s += sol[i] * phi(math.hypot(qx - xi, qy - yi))
        out.append(s)
    return np.array(out)


def bilinear_reference(img, x, y):
    """Clamped bilinear sample of an (H, W, C) image at one point."""
    h, w = img.shape[:2]
    x = min(max(x, 0.0), w - 1.0)
    y = min(max(y, 0.0), h - 1.0)
    x0 = min(int(math.floor(x)), max(w - 2, 0))
    y0 = min(int(math.floor(y)), max(h - 2, 0))
    x1 = min(x0 + 1, w - 1)
    y1 = min(y0 + 1, h - 1)
    fx = x - x0
    fy = y - y0
    return ((1 - fx) * (1 - fy) * img[y0, x0] + fx * (1 - fy) * img[y0, x1]
            + (1 - fx) * fy * img[y1, x0] + fx * fy * img[y1, x1])


def warp_reference(img, flow):
    h, w = img.shape[:2]
    out = np.zeros_like(img)
    for y in range(h):
        for x in range(w):
            out[y, x] = bilinear_reference(img, x + flow[y, x, 0], y + flow[y, x, 1])
    return out


def flow_reference(control, disp, width, height, anchors):
    pts = np.vstack([control, anchors])
    vals = np.vstack([disp, np.zeros_like(anchors)])
    q = [(x, y) for y in range(height) for x in range(width)]
    fx = spline_reference(pts, vals[:, 0], q)
    fy = spline_reference(pts, vals[:, 1], q)
    return np.stack([fx, fy], axis=-1).reshape(height, width, 2)


def blend_reference(fg, bg, mask, g=1.0, c=1.0, a=1e-3):
    """Dense stacked-constraint least squares for one channel, row by row."""
    h, w = fg.shape
    n = h * w
    idx = lambda y, x: y * w + x  # noqa: E731
    rows, rhs = [], []
    for y in range(h):
        for x in range(w - 1):
            r = np.zeros(n)
            r[idx(y, x + 1)] = g
            r[idx(y, x)] = -g
            m = mask[y, x]
            t = m * (fg[y, x + 1] - fg[y, x]) + (1 - m) * (bg[y, x + 1] - bg[y, x])
            rows.append(r)
            rhs.append(g * t)
    for y in range(h - 1):
        for x in range(w):
            r = np.zeros(n)
            r[idx(y + 1, x)] = g
            r[idx(y, x)] = -g
            m = mask[y, x]
            t = m * (fg[y + 1, x] - fg[y, x]) + (1 - m) * (bg[y + 1, x] - bg[y, x])
            rows.append(r)
            rhs.append(g * t)
    for y in range(h):
        for x in range(w):
            r = np.zeros(n)
            r[idx(y, x)] = c * mask[y, x]
            rows.append(r)
            rhs.append(c * mask[y, x] * fg[y, x])
    rows.append(np.full(n, a / n))
    rhs.append(a * bg.mean())
    C = np.array(rows)
    d = np.array(rhs)
    return np.linalg.solve(C.T @ C, C.T @ d).reshape(h, w)


def adjust_reference(photo, normalized, box):
    """Per-pixel YCrCb color shift written out channel by channel."""
    def to_ycc(rgb):
        r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
        return np.stack([0.299 * r + 0.587 * g + 0.114 * b,
                         0.5 * r - 0.418688 * g - 0.081312 * b + 0.5,
                         -0.168736 * r - 0.331264 * g + 0.5 * b + 0.5], axis=-1)
    fwd = np.array([[0.299, 0.587, 0.114], [0.5, -0.418688, -0.081312],
                    [-0.168736, -0.331264, 0.5]])
    x0, y0, x1, y1 = box
    p, q = to_ycc(photo), to_ycc(normalized)
    out = p.copy()
    for c in range(3):
        mp = p[y0:y1, x0:x1, c].mean()
        mn = q[y0:y1, x0:x1, c].mean()
        for idx in np.ndindex(p.shape[:2]):
            v = p[idx][c]
            if v <= mp:
                out[idx][c] = v * mn / mp
            else:
                out[idx][c] = 1 - (1 - v) * (1 - mn) / (1 - mp)
    rgb = np.empty_like(out)
    for idx in np.ndindex(out.shape[:2]):
        rgb[idx] = np.linalg.solve(fwd, out[idx] - np.array([0, 0.5, 0.5]))
    return np.clip(rgb, 0, 1)
