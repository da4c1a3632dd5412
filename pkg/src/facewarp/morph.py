"""Random face morphs for data augmentation, and identity averaging.

A face is a landmark set plus a texture aligned to the dataset's mean
geometry. New faces are made by picking a seed face, a random one of its
``k`` nearest neighbors, and interpolating landmarks and textures with
separate uniform weights. The morphed texture is then composited onto the
seed's texture in the gradient domain so hair and background stay intact.

Randomness: morph ``i`` draws from its own child stream
``SeedSequence(rng_seed).spawn(count)[i]``, so results do not depend on
evaluation order or on how many workers run.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .composite import BlendProblem, blend, build_mask
from .config import DEFAULTS
from .errors import ShapeError
from .spline import as_points
from .warp import MeanGeometry, as_image, warp_by_displacements


@dataclass(frozen=True)
class FaceSample:
    id: str
    landmarks: np.ndarray
    texture: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "landmarks", as_points(self.landmarks, "landmarks"))
        tex, _ = as_image(self.texture)
        object.__setattr__(self, "texture", tex)


@dataclass(frozen=True)
class FaceDataset:
    samples: tuple
    mean: MeanGeometry = field(default=None)

    def __post_init__(self):
        samples = tuple(self.samples)
        if not samples:
            raise ShapeError("dataset is empty")
        lm_shape = samples[0].landmarks.shape
        tex_shape = samples[0].texture.shape
        for s in samples:
            if s.landmarks.shape != lm_shape or s.texture.shape != tex_shape:
                raise ShapeError(f"sample {s.id!r} does not match the dataset's shapes")
        object.__setattr__(self, "samples", samples)
        mean_lm = self.landmark_stack.mean(axis=0)
        if self.mean is None:
            object.__setattr__(self, "mean", MeanGeometry(mean_lm, tex_shape[1], tex_shape[0]))
        else:
            if (self.mean.height, self.mean.width) != tex_shape[:2]:
                raise ShapeError("textures are not in the mean geometry's frame")
            if np.max(np.abs(self.mean.landmarks - mean_lm)) > 1e-6:
                raise ShapeError("mean landmarks are not the average of the samples")

    def __len__(self):
        return len(self.samples)

    @cached_property
    def landmark_stack(self):
        return np.stack([s.landmarks for s in self.samples])

    @cached_property
    def texture_stack(self):
        return np.stack([s.texture for s in self.samples])


@dataclass(frozen=True)
class MorphSpec:
    seed_index: int
    neighbor_index: int
    landmark_weight: float
    texture_weight: float

    def __post_init__(self):
        if self.seed_index == self.neighbor_index:
            raise ValueError("seed and neighbor must differ")
        for wgt in (self.landmark_weight, self.texture_weight):
            if not 0.0 <= wgt <= 1.0:
                raise ValueError(f"morph weight {wgt} outside [0, 1]")


def face_distance(a, b, lam=DEFAULTS.morph_lambda):
    """``lam * |L_A - L_B|_F + |T_A - T_B|_F``."""
    if a.landmarks.shape != b.landmarks.shape or a.texture.shape != b.texture.shape:
        raise ShapeError("faces have different landmark counts or texture sizes")
    return float(lam * np.linalg.norm(a.landmarks - b.landmarks)
                 + np.linalg.norm(a.texture - b.texture))


def distances_from(dataset, index, lam=DEFAULTS.morph_lambda):
    """Face distance from sample ``index`` to every sample in the dataset."""
    dl = dataset.landmark_stack - dataset.landmark_stack[index]
    dt = dataset.texture_stack - dataset.texture_stack[index]
    n = len(dataset)
    return (lam * np.linalg.norm(dl.reshape(n, -1), axis=1)
            + np.linalg.norm(dt.reshape(n, -1), axis=1))


def nearest_neighbors(dataset, seed_index, k=DEFAULTS.morph_neighbors,
                      lam=DEFAULTS.morph_lambda):
    """Indices of the ``k`` closest other samples, nearest first.

    Ties are broken by ascending index.
    """
    n = len(dataset)
    if not 0 <= seed_index < n:
        raise IndexError(f"seed index {seed_index} out of range for {n} samples")
    if k < 1:
        raise ValueError("k must be >= 1")
    order = np.argsort(distances_from(dataset, seed_index, lam), kind="stable")
    order = order[order != seed_index]
    return [int(i) for i in order[:k]]


def morph_pair(a, b, wl, wt, mean=None):
    """Interpolate two faces: weight 0 gives ``a``, weight 1 gives ``b``."""
    for wgt in (wl, wt):
        if not 0.0 <= wgt <= 1.0:
            raise ValueError(f"morph weight {wgt} outside [0, 1]")
    if a.landmarks.shape != b.landmarks.shape or a.texture.shape != b.texture.shape:
        raise ShapeError("faces have different landmark counts or texture sizes")
    if mean is not None and a.texture.shape[:2] != (mean.height, mean.width):
        raise ShapeError("textures are not in the mean geometry's frame")
    return FaceSample(id=f"{a.id}+{b.id}",
                      landmarks=(1 - wl) * a.landmarks + wl * b.landmarks,
                      texture=(1 - wt) * a.texture + wt * b.texture)


def average_identity(images, landmark_sets, per_edge=DEFAULTS.anchors_per_edge,
                     sample_id="average"):
    """Average several photos of one person.

    Every image is warped onto the mean of the landmark sets and the warped
    pixels are averaged. Returns a :class:`FaceSample` whose landmarks are
    the mean landmarks and whose texture is the averaged image.
    """
    if len(images) == 0:
        raise ShapeError("need at least one image")
    if len(images) != len(landmark_sets):
        raise ShapeError(f"{len(images)} images but {len(landmark_sets)} landmark sets")
    arrs = [as_image(im)[0] for im in images]
    lms = [as_points(lm, "landmarks") for lm in landmark_sets]
    if any(a.shape != arrs[0].shape for a in arrs) or any(l.shape != lms[0].shape for l in lms):
        raise ShapeError("images and landmark sets must have uniform shapes")
    mean_lm = np.mean(np.stack(lms), axis=0)
    warped = [warp_by_displacements(a, mean_lm, lm - mean_lm, per_edge)
              for a, lm in zip(arrs, lms)]
    return FaceSample(id=sample_id, landmarks=mean_lm, texture=np.mean(np.stack(warped), axis=0))


def generate_augmented(dataset, count, *, rng_seed, k=DEFAULTS.morph_neighbors,
                       lam=DEFAULTS.morph_lambda,
                       independent_weights=DEFAULTS.independent_weights,
                       composite=True, blur_sigma=DEFAULTS.blur_sigma, workers=1):
    """Produce ``count`` random morphs of ``dataset``.

    Each morph picks a seed uniformly, a neighbor uniformly from the seed's
    ``k`` nearest neighbors, and weights uniformly from ``[0, 1)``; with
    ``independent_weights=False`` one weight serves landmarks and textures.
    With ``composite=True`` the morphed texture is blended onto the seed's
    texture using a mask built from the mean landmarks.

    Returns a list of ``(MorphSpec, FaceSample)`` in morph-index order. The
    sample's texture lives in the mean frame; render it with
    :func:`facewarp.warp.render_from_texture` and the sample's landmarks.
    """
    if len(dataset) < 2:
        raise ShapeError("augmentation needs at least two samples")
    if count < 0:
        raise ValueError("count must be nonnegative")
    if count == 0:
        return []
    mean = dataset.mean
    mask = build_mask(mean.landmarks, mean.width, mean.height, blur_sigma) if composite else None
    streams = np.random.SeedSequence(rng_seed).spawn(count)
    neighbor_cache = {}

    def neighbors(seed):
        if seed not in neighbor_cache:
            neighbor_cache[seed] = nearest_neighbors(dataset, seed, k, lam)
        return neighbor_cache[seed]

    def one(i):
        rng = np.random.default_rng(streams[i])
        seed = int(rng.integers(len(dataset)))
        nbrs = neighbors(seed)
        nb = nbrs[int(rng.integers(len(nbrs)))]
        wl = float(rng.random())
        wt = float(rng.random()) if independent_weights else wl
        spec = MorphSpec(seed, nb, wl, wt)
        a, b = dataset.samples[seed], dataset.samples[nb]
        m = morph_pair(a, b, wl, wt, mean)
        tex = m.texture
        if composite:
            tex = blend(BlendProblem(tex, a.texture, mask))
        return spec, FaceSample(id=f"morph{i:05d}", landmarks=m.landmarks, texture=tex)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(one, range(count)))
    return [one(i) for i in range(count)]
