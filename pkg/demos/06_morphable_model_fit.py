"""
Fitting a morphable model to landmarks
======================================

Generate landmarks from a known shape and pose on a synthetic morphable
model, recover them, then fit vertex colors with confidence weights.
"""

import numpy as np

from facewarp.mmfit import (CameraParams, blend_vertex_colors, correspond_by_voting,
                            fit_shape, fit_texture_coeffs, make_synthetic_model,
                            ndc_to_pixels, project_landmark_vertices, project_points,
                            vertex_confidence, vertex_normals)

model = make_synthetic_model()   # V=500, p=20, 65 landmarks
rng = np.random.default_rng(1)

s_true = rng.normal(size=model.n_coefficients)
cam_true = CameraParams(translation=(0.02, -0.03, -11.0), scale=0.85)
targets = project_landmark_vertices(model, s_true, cam_true)

res = fit_shape(model, targets, lam=1e-8)
print(f"converged in {res.iterations} iterations, loss {res.loss:.2e}")
print("max coefficient error:", np.max(np.abs(res.s - s_true)))
# Scaling the scene about the camera center leaves the projection unchanged,
# so scale and translation are only determined up to a common factor.
print("translation / scale, fitted vs true:", np.round(res.translation / res.scale, 4),
      np.round(cam_true.t / cam_true.scale, 4))

# With the default lambda = 0.001 the fit is pulled towards the mean face.
for lam in (1e-3, 1e-1, 10.0):
    print(f"lambda {lam:g}: |s| = {np.linalg.norm(fit_shape(model, targets, lam=lam).s):.3f}")

# Landmark-vertex correspondence by voting over jittered cameras. The
# "detector" here reports the true vertices with half-pixel noise.
cam = res.camera(cam_true)
noise = np.random.default_rng(2)


def detector(jittered):
    pts = project_points(model.mean_positions[model.landmark_indices], jittered)
    return pts + noise.uniform(-0.5, 0.5, size=pts.shape) * 2 / 224


votes = correspond_by_voting(model, cam, detector, rng_seed=0)
print("voting recovers the landmark vertices:", np.array_equal(votes, model.landmark_indices))

# Texture: confidences from a mask and the normals, then a ridge projection.
verts = model.shape(res.s)
px = ndc_to_pixels(project_points(verts, cam), 224, 224)
nz = vertex_normals(verts, model.triangles)[:, 2]
mask = np.ones((224, 224))
for mode in ("as-written", "intent"):
    alpha = vertex_confidence(mask, px, nz, mode=mode)
    print(f"{mode:10s} mean confidence {alpha.mean():.3f}")
alpha = vertex_confidence(mask, px, nz, mode="intent")
c_p = np.clip(model.mean_colors + 0.05 * rng.normal(size=model.mean_colors.shape), 0, 1)
z, c_b = fit_texture_coeffs(model, c_p, alpha, lambda_ridge=0.1)
colors = blend_vertex_colors(c_p, c_b, alpha)
print("texture coefficients:", np.round(z[:5], 3), "...")
print("blended colors in range:", colors.min() >= 0 and colors.max() <= 1)
