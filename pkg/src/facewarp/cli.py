"""Command-line front-end.

Every subcommand reads its inputs from files and writes its results to
files; diagnostics go to stderr. Exit codes: 0 success, 1 I/O or parse
failure (including bad usage), 2 shape contract violation, 3 numerical
failure.

``--config FILE`` names a TOML file whose ``[command]`` tables supply
option defaults (keys are option names, dashes or underscores); flags given
on the command line win.
"""

import argparse
import json
import sys
import warnings
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import io
from .color import DegenerateChannelWarning, adjust
from .composite import BlendProblem, blend, build_mask
from .config import DEFAULTS, defaults
from .errors import FormatError, NumericalError, ShapeError
from .mmfit import fit_shape, initial_camera, pixels_to_ndc
from .morph import FaceDataset, FaceSample, average_identity, generate_augmented
from .warp import LandmarkFlow, MeanGeometry, decompose_to_texture, render_from_texture


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _image_frame(path, img, w, h):
    if img.shape[:2] != (h, w):
        raise ShapeError(f"{path}: image is {img.shape[1]}x{img.shape[0]}, "
                         f"landmark file says {w}x{h}")


def cmd_warp(args):
    img = io.read_png(args.image)
    lm, w, h = io.read_landmarks(args.landmarks)
    mean_lm, mw, mh = io.read_landmarks(args.mean)
    _image_frame(args.image, img, w, h)
    if (mw, mh) != (w, h):
        raise ShapeError("landmark and mean landmark files describe different frames")
    mean = MeanGeometry(mean_lm, w, h)
    if args.direction == "to-mean":
        out = decompose_to_texture(img, lm, mean, args.per_edge)
    else:
        out = render_from_texture(img, lm, mean, args.per_edge)
    io.write_png(args.output, out, args.bitdepth)


def _load_dataset(directory):
    d = Path(directory)
    if not d.is_dir():
        raise FormatError(f"{d}: not a directory")
    stems = sorted(p.stem for p in d.glob("*.png") if (d / f"{p.stem}.json").exists())
    if not stems:
        raise FormatError(f"{d}: no paired <name>.png / <name>.json files")
    images, lms = [], []
    for stem in stems:
        img = io.read_png(d / f"{stem}.png")
        pts, w, h = io.read_landmarks(d / f"{stem}.json")
        _image_frame(d / f"{stem}.png", img, w, h)
        images.append(img)
        lms.append(pts)
    if any(im.shape != images[0].shape for im in images):
        raise ShapeError("dataset images differ in size or channel count")
    if any(p.shape != lms[0].shape for p in lms):
        raise ShapeError("dataset landmark files differ in point count")
    h, w = images[0].shape[:2]
    mean = MeanGeometry.from_landmark_sets(lms, w, h)
    samples = [FaceSample(stem, lm, decompose_to_texture(img, lm, mean))
               for stem, img, lm in zip(stems, images, lms)]
    return FaceDataset(samples, mean)


def cmd_augment(args):
    if args.count < 0:
        raise ShapeError("--count must be nonnegative")
    dataset = _load_dataset(args.dataset)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    morphs = generate_augmented(dataset, args.count, rng_seed=args.seed, k=args.k,
                                lam=args.lam, independent_weights=not args.shared_weight,
                                composite=not args.no_composite, blur_sigma=args.blur_sigma,
                                workers=args.workers)
    mean = dataset.mean
    lines = []
    for spec, sample in morphs:
        io.write_png(out / f"{sample.id}.png",
                     render_from_texture(sample.texture, sample.landmarks, mean))
        io.write_landmarks(out / f"{sample.id}.json", sample.landmarks, mean.width, mean.height)
        lines.append(json.dumps({
            "id": sample.id,
            "seed": dataset.samples[spec.seed_index].id,
            "neighbor": dataset.samples[spec.neighbor_index].id,
            "seed_index": spec.seed_index,
            "neighbor_index": spec.neighbor_index,
            "landmark_weight": spec.landmark_weight,
            "texture_weight": spec.texture_weight,
        }, sort_keys=True))
    (out / "manifest.jsonl").write_text("".join(line + "\n" for line in lines))


def cmd_adjust(args):
    photo = io.read_png(args.photo)
    normalized = io.read_png(args.normalized)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", DegenerateChannelWarning)
        out = adjust(photo, normalized, args.crop_fraction)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    io.write_png(args.output, out, args.bitdepth)


def cmd_fit3d(args):
    pts, w, h = io.read_landmarks(args.landmarks)
    model = io.read_mmb(args.model)
    if len(pts) != model.n_landmarks:
        raise ShapeError(f"{len(pts)} landmarks but the model has {model.n_landmarks}")
    targets = pixels_to_ndc(pts, w, h)
    cam = initial_camera(model, targets, fov_degrees=args.fov, aspect=w / h)
    res = fit_shape(model, targets, cam, lam=args.lam, max_iterations=args.max_iterations,
                    method=args.method)
    Path(args.output).write_text(json.dumps(res.to_dict(), indent=2) + "\n")


def cmd_average(args):
    if len(args.images) != len(args.landmarks):
        raise ShapeError(f"{len(args.images)} images but {len(args.landmarks)} landmark files")
    images, lms = [], []
    for ip, lp in zip(args.images, args.landmarks):
        img = io.read_png(ip)
        pts, w, h = io.read_landmarks(lp)
        _image_frame(ip, img, w, h)
        images.append(img)
        lms.append(pts)
    avg = average_identity(images, lms, args.per_edge)
    io.write_png(args.output, avg.texture, args.bitdepth)
    if args.landmarks_out:
        h, w = avg.texture.shape[:2]
        io.write_landmarks(args.landmarks_out, avg.landmarks, w, h)


def cmd_composite(args):
    fg = io.read_png(args.foreground)
    bg = io.read_png(args.background)
    if fg.shape != bg.shape:
        raise ShapeError(f"foreground {fg.shape} and background {bg.shape} differ")
    h, w = fg.shape[:2]
    if (args.mask is None) == (args.mean_landmarks is None):
        raise UsageError("composite: give exactly one of --mask or --mean-landmarks")
    if args.mask is not None:
        mask = io.read_png(args.mask)[..., 0]
    else:
        pts, mw, mh = io.read_landmarks(args.mean_landmarks)
        if (mw, mh) != (w, h):
            raise ShapeError("mean landmark frame does not match the textures")
        mask = build_mask(pts, w, h, args.blur_sigma)
    out = blend(BlendProblem(fg, bg, mask, args.gradient_weight, args.color_weight,
                             args.anchor_weight), method=args.method, rtol=args.rtol)
    io.write_png(args.output, out, args.bitdepth)


def cmd_flow(args):
    lm, w, h = io.read_landmarks(args.landmarks)
    mean_lm, mw, mh = io.read_landmarks(args.mean)
    if (mw, mh) != (w, h) or lm.shape != mean_lm.shape:
        raise ShapeError("landmark and mean landmark files do not match")
    if args.direction == "to-mean":
        flow = LandmarkFlow(mean_lm, w, h, args.per_edge).flow(lm - mean_lm)
    else:
        flow = LandmarkFlow(lm, w, h, args.per_edge).flow(mean_lm - lm)
    io.write_flow(args.output, flow)


def cmd_defaults(args):
    text = json.dumps(defaults(), indent=2, sort_keys=True) + "\n"
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)


def build_parser():
    p = _Parser(prog="facewarp", description=__doc__.splitlines()[0])
    p.add_argument("--config", help="TOML file with per-command option defaults")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def image_out(sp):
        sp.add_argument("-o", "--output", required=True)
        sp.add_argument("--bitdepth", type=int, choices=(8, 16), default=8)

    sp = sub.add_parser("warp", help="warp a face to or from the mean geometry")
    sp.add_argument("image")
    sp.add_argument("landmarks")
    sp.add_argument("mean")
    sp.add_argument("--direction", choices=("to-mean", "from-mean"), default="to-mean")
    sp.add_argument("--per-edge", type=int, default=DEFAULTS.anchors_per_edge)
    image_out(sp)
    sp.set_defaults(func=cmd_warp)

    sp = sub.add_parser("augment", help="generate composited random morphs of a dataset")
    sp.add_argument("dataset", help="directory of <name>.png + <name>.json pairs")
    sp.add_argument("--count", type=int, required=True)
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--k", type=int, default=DEFAULTS.morph_neighbors)
    sp.add_argument("--lambda", dest="lam", type=float, default=DEFAULTS.morph_lambda)
    sp.add_argument("--shared-weight", action="store_true",
                    help="use one morph weight for landmarks and textures")
    sp.add_argument("--no-composite", action="store_true")
    sp.add_argument("--blur-sigma", type=float, default=DEFAULTS.blur_sigma)
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("-o", "--output", required=True, help="output directory")
    sp.set_defaults(func=cmd_augment)

    sp = sub.add_parser("adjust", help="match a photo's face colors to its normalized face")
    sp.add_argument("photo")
    sp.add_argument("normalized")
    sp.add_argument("--crop-fraction", type=float, default=DEFAULTS.crop_fraction)
    image_out(sp)
    sp.set_defaults(func=cmd_adjust)

    sp = sub.add_parser("fit3d", help="fit morphable-model shape to 2-D landmarks")
    sp.add_argument("landmarks")
    sp.add_argument("model", help="MMB1 model file")
    sp.add_argument("--lambda", dest="lam", type=float, default=DEFAULTS.shape_lambda)
    sp.add_argument("--max-iterations", type=int, default=DEFAULTS.max_iterations)
    sp.add_argument("--method", choices=("gauss-newton", "gradient"), default="gauss-newton")
    sp.add_argument("--fov", type=float, default=DEFAULTS.fov_degrees)
    sp.add_argument("-o", "--output", required=True)
    sp.set_defaults(func=cmd_fit3d)

    sp = sub.add_parser("average", help="average several photos of one identity")
    sp.add_argument("--images", nargs="+", required=True)
    sp.add_argument("--landmarks", nargs="+", required=True)
    sp.add_argument("--landmarks-out")
    sp.add_argument("--per-edge", type=int, default=DEFAULTS.anchors_per_edge)
    image_out(sp)
    sp.set_defaults(func=cmd_average)

    sp = sub.add_parser("composite", help="gradient-domain composite onto a background")
    sp.add_argument("foreground")
    sp.add_argument("background")
    sp.add_argument("--mask")
    sp.add_argument("--mean-landmarks")
    sp.add_argument("--blur-sigma", type=float, default=DEFAULTS.blur_sigma)
    sp.add_argument("--gradient-weight", type=float, default=DEFAULTS.gradient_weight)
    sp.add_argument("--color-weight", type=float, default=DEFAULTS.color_weight)
    sp.add_argument("--anchor-weight", type=float, default=DEFAULTS.anchor_weight)
    sp.add_argument("--method", choices=("cg", "direct"), default="cg")
    sp.add_argument("--rtol", type=float, default=DEFAULTS.cg_rtol)
    image_out(sp)
    sp.set_defaults(func=cmd_composite)

    sp = sub.add_parser("flow", help="write the dense flow field as FLW1")
    sp.add_argument("landmarks")
    sp.add_argument("mean")
    sp.add_argument("--direction", choices=("to-mean", "from-mean"), default="to-mean")
    sp.add_argument("--per-edge", type=int, default=DEFAULTS.anchors_per_edge)
    sp.add_argument("-o", "--output", required=True)
    sp.set_defaults(func=cmd_flow)

    sp = sub.add_parser("defaults", help="print the default parameter table as JSON")
    sp.add_argument("-o", "--output")
    sp.set_defaults(func=cmd_defaults)
    return p


def _apply_config(parser, argv):
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    try:
        with open(known.config, "rb") as fh:
            table = tomllib.load(fh)
    except OSError as exc:
        raise FormatError(f"cannot read {known.config}: {exc.strerror}") from None
    except tomllib.TOMLDecodeError as exc:
        raise FormatError(f"{known.config}: {exc}") from None
    subparsers = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    for command, options in table.items():
        if command not in subparsers.choices or not isinstance(options, dict):
            raise FormatError(f"{known.config}: unknown command table [{command}]")
        sp = subparsers.choices[command]
        dests = {a.dest: a for a in sp._actions}
        for key, value in options.items():
            dest = key.replace("-", "_")
            dest = "lam" if dest == "lambda" else dest
            if dest not in dests or dest in ("func", "help"):
                raise FormatError(f"{known.config}: [{command}] has unknown option {key!r}")
            action = dests[dest]
            action.default = value
            action.required = False


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
        args = parser.parse_args(argv)
        args.func(args)
    except (UsageError, FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ShapeError, ValueError, IndexError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
