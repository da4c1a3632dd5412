"""Default parameters used throughout the package.

Every default lives here so it can be inspected (``facewarp defaults`` on the
command line prints this table) and overridden from a TOML file.
"""

from dataclasses import asdict, dataclass


@dataclass(frozen=True)
class Defaults:
    # spline / warp
    spline_order: int = 1
    anchors_per_edge: int = 3
    # morph augmentation
    morph_lambda: float = 10.0
    morph_neighbors: int = 200
    independent_weights: bool = True
    # compositing
    blur_sigma: float = 5.0
    gradient_weight: float = 1.0
    color_weight: float = 1.0
    anchor_weight: float = 1e-3
    cg_rtol: float = 1e-8
    # photo adjustment: central 100x100 out of 224x224
    crop_fraction: float = 100.0 / 224.0
    # morphable model fitting
    fov_degrees: float = 10.0
    near: float = 0.1
    far: float = 1000.0
    shape_lambda: float = 0.001
    max_iterations: int = 1000
    gradient_tolerance: float = 1e-6
    armijo_c: float = 1e-4
    jitter_count: int = 16
    jitter_degrees: float = 3.0


DEFAULTS = Defaults()


def defaults() -> dict:
    """Return the default parameter table as a plain dict."""
    return asdict(DEFAULTS)
