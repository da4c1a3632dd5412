"""File formats: landmark JSON, PNG images, MMB1 model and FLW1 flow binaries.

Binary layouts are little-endian throughout.

MMB1::

    b"MMB1" | u32 V, p, n_landmarks, triangle_count
    | f32 mean_positions (3V) | f32 basis_x, basis_y, basis_z (V*p each)
    | f32 mean_colors (3V) | f32 color_basis (3V*p)
    | u32 landmark_indices (n) | u32 triangles (3*count)

Matrices are stored row-major. The color basis shares ``p`` with the shape
bases.

FLW1::

    b"FLW1" | u32 width, height | f32 (dx, dy) pairs, row-major
"""

import json
import struct

import numpy as np
import png

from .errors import FormatError, ShapeError
from .mmfit import MorphableModel, pixels_to_ndc

MMB_MAGIC = b"MMB1"
FLW_MAGIC = b"FLW1"


def _read_bytes(path):
    try:
        with open(path, "rb") as fh:
            return fh.read()
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc.strerror}") from None


def read_landmarks(path):
    """Return ``(points (n, 2), width, height)`` from a landmark JSON file."""
    try:
        obj = json.loads(_read_bytes(path).decode("utf-8"))
        w, h = obj["width"], obj["height"]
        pts = np.array(obj["points"], dtype=float)
    except (ValueError, KeyError, TypeError, UnicodeDecodeError) as exc:
        raise FormatError(f"{path}: not a landmark file ({exc})") from None
    if not (isinstance(w, int) and isinstance(h, int)) or w <= 0 or h <= 0:
        raise FormatError(f"{path}: width and height must be positive integers")
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) == 0:
        raise FormatError(f"{path}: points must be a nonempty list of [x, y] pairs")
    if not np.all(np.isfinite(pts)):
        raise FormatError(f"{path}: points must be finite")
    return pts, w, h


def write_landmarks(path, points, width, height):
    pts = np.asarray(points, dtype=float)
    if not np.all(np.isfinite(pts)):
        raise ValueError("points must be finite")
    obj = {"width": int(width), "height": int(height),
           "points": [[float(x), float(y)] for x, y in pts]}
    with open(path, "w") as fh:
        json.dump(obj, fh)
        fh.write("\n")


def read_png(path):
    """Read a PNG as floats in [0, 1], shape ``(H, W, C)``."""
    data = _read_bytes(path)
    try:
        w, h, rows, info = png.Reader(bytes=data).asDirect()
        arr = np.vstack([np.asarray(r, dtype=np.float64) for r in rows])
    except png.Error as exc:
        raise FormatError(f"{path}: not a PNG ({exc})") from None
    planes = info["planes"]
    maxval = 2 ** info["bitdepth"] - 1
    return arr.reshape(h, w, planes) / maxval


def write_png(path, img, bitdepth=8):
    """Write floats in [0, 1] as PNG, rounding half to even after clipping."""
    if bitdepth not in (8, 16):
        raise ValueError("bitdepth must be 8 or 16")
    arr = np.asarray(img, dtype=float)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3 or arr.shape[2] not in (1, 2, 3, 4):
        raise ShapeError(f"cannot write image of shape {arr.shape} as PNG")
    if not np.all(np.isfinite(arr)):
        raise ValueError("image contains non-finite values")
    maxval = 2 ** bitdepth - 1
    q = np.rint(np.clip(arr, 0.0, 1.0) * maxval).astype(np.uint16 if bitdepth == 16 else np.uint8)
    h, w, c = q.shape
    writer = png.Writer(w, h, greyscale=c <= 2, alpha=c in (2, 4), bitdepth=bitdepth)
    with open(path, "wb") as fh:
        writer.write(fh, q.reshape(h, w * c))


def _u32(values):
    return np.asarray(values, dtype="<u4").tobytes()


def _f32(values):
    return np.asarray(values, dtype="<f4").tobytes()


def write_mmb(path, model):
    m = model
    V, p = m.vertex_count, m.n_coefficients
    if m.color_basis.shape[1] != p:
        raise ShapeError("MMB1 requires the color basis to have p columns")
    parts = [MMB_MAGIC, struct.pack("<4I", V, p, m.n_landmarks, len(m.triangles)),
             _f32(m.mean_positions), _f32(m.basis_x), _f32(m.basis_y), _f32(m.basis_z),
             _f32(m.mean_colors), _f32(m.color_basis), _u32(m.landmark_indices),
             _u32(m.triangles)]
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def read_mmb(path):
    data = _read_bytes(path)
    if data[:4] != MMB_MAGIC:
        raise FormatError(f"{path}: bad magic {data[:4]!r}, expected {MMB_MAGIC!r}")
    if len(data) < 20:
        raise FormatError(f"{path}: truncated header")
    V, p, n, t = struct.unpack_from("<4I", data, 4)
    sizes = [3 * V, V * p, V * p, V * p, 3 * V, 3 * V * p, n, 3 * t]
    expected = 20 + 4 * sum(sizes)
    if len(data) != expected:
        raise FormatError(f"{path}: length {len(data)} does not match header ({expected} bytes)")
    arrays = []
    off = 20
    for i, size in enumerate(sizes):
        dtype = "<f4" if i < 6 else "<u4"
        arrays.append(np.frombuffer(data, dtype=dtype, count=size, offset=off))
        off += 4 * size
    pos, bx, by, bz, mc, cb, li, tri = arrays
    try:
        return MorphableModel(pos.reshape(V, 3), bx.reshape(V, p), by.reshape(V, p),
                              bz.reshape(V, p), mc, cb.reshape(3 * V, p), li, tri.reshape(t, 3))
    except ShapeError as exc:
        raise FormatError(f"{path}: inconsistent model ({exc})") from None


def write_flow(path, flow):
    f = np.asarray(flow, dtype=float)
    if f.ndim != 3 or f.shape[2] != 2:
        raise ShapeError(f"flow must be (H, W, 2), got {f.shape}")
    h, w, _ = f.shape
    with open(path, "wb") as fh:
        fh.write(FLW_MAGIC + struct.pack("<2I", w, h) + _f32(f))


def read_flow(path):
    data = _read_bytes(path)
    if data[:4] != FLW_MAGIC:
        raise FormatError(f"{path}: bad magic {data[:4]!r}, expected {FLW_MAGIC!r}")
    if len(data) < 12:
        raise FormatError(f"{path}: truncated header")
    w, h = struct.unpack_from("<2I", data, 4)
    if len(data) != 12 + 8 * w * h:
        raise FormatError(f"{path}: length {len(data)} does not match a {w}x{h} flow")
    return np.frombuffer(data, dtype="<f4", offset=12).reshape(h, w, 2).astype(float)


class FileDetector:
    """Landmark detector stub that replays precomputed landmark files.

    The ``j``-th call returns the landmarks in ``paths[j]`` converted from
    pixels to normalized device coordinates; the camera argument is ignored.
    """

    def __init__(self, paths):
        self.paths = list(paths)
        self.calls = 0

    def __call__(self, cam):
        if self.calls >= len(self.paths):
            raise FormatError(f"detector asked for render {self.calls + 1} "
                              f"but only {len(self.paths)} landmark files exist")
        pts, w, h = read_landmarks(self.paths[self.calls])
        self.calls += 1
        return pixels_to_ndc(pts, w, h)
