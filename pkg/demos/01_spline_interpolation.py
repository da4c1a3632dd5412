"""
Polyharmonic spline interpolation
=================================

Fit a spline through scattered values, check that it passes through them,
and differentiate the fit with respect to the data.
"""

import numpy as np

from facewarp.spline import fit_spline, spline_vjp

rng = np.random.default_rng(0)

# Twelve scattered control points with arbitrary values.
points = rng.uniform(0, 100, size=(12, 2))
values = np.sin(points[:, 0] / 20) + np.cos(points[:, 1] / 30)

sp = fit_spline(points, values)          # r kernel (order 1) by default
print("max error at control points:", np.max(np.abs(sp(points) - values)))
print("affine part (x, y, const):", np.round(sp.affine, 4))

# Affine data is reproduced by the affine part alone; the RBF weights vanish.
plane = 0.3 * points[:, 0] - 0.1 * points[:, 1] + 2
print("weights on affine data:", np.max(np.abs(fit_spline(points, plane).weights)))

# The thin-plate kernel r^2 log r is order 2.
tps = fit_spline(points, values, k=2)
query = np.array([[50.0, 50.0]])
print("value at the center, k=1 vs k=2:", sp(query)[0], tps(query)[0])

# Gradient of sum(cotangent * s(queries)) with respect to the control values.
queries = rng.uniform(0, 100, size=(5, 2))
grad = spline_vjp(points, values, 1, queries, np.ones(5))
print("d(sum of 5 evaluations)/d(values):", np.round(grad, 3))
