"""Landmark-driven image warping, face morphing and morphable-model fitting."""

from .color import DegenerateChannelWarning, adjust, color_shift, crop_box, mean_face_color
from .composite import BlendProblem, blend, build_mask
from .config import DEFAULTS, defaults
from .errors import (ConvergenceError, DivergenceError, FacewarpError, FormatError,
                     NumericalError, ShapeError, SingularSystemError)
from .mmfit import (CameraParams, MorphableModel, ShapeFitResult, blend_vertex_colors,
                    correspond_by_voting, fit_shape, fit_texture_coeffs,
                    project_landmark_vertices, shape_loss_and_gradient, vertex_confidence)
from .morph import (FaceDataset, FaceSample, MorphSpec, average_identity, face_distance,
                    generate_augmented, morph_pair, nearest_neighbors)
from .spline import SplineParams, eval_spline, fit_spline, spline_vjp
from .warp import (LandmarkFlow, MeanGeometry, build_flow, decompose_to_texture,
                   render_from_texture, sample_bilinear, warp_by_displacements,
                   warp_by_displacements_vjp, warp_image, warp_vjp)

__version__ = "0.1.0"
