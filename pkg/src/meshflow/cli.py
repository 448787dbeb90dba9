"""Command-line driver.

Exit codes: 0 success, 2 usage, 3 unreadable or malformed input,
4 inputs that parse but do not fit together.
"""

from __future__ import annotations

import argparse
import glob
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import imgio, neuralmath, sampler, synth, temporal
from .flow import CorrespondenceError, FramePair, dense_flow, thread_count
from .model3d import CameraPose, DimensionError, project, recombine
from .raster import appearance_hint, facial_mask, rasterize

EXIT_USAGE = 2
EXIT_PARSE = 3
EXIT_MISMATCH = 4


class UsageError(Exception):
    pass


class MismatchError(Exception):
    pass


def _size(text: str) -> tuple[int, int]:
    try:
        w, h = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"size must look like WxH, got {text!r}") from None
    if w <= 0 or h <= 0:
        raise argparse.ArgumentTypeError(f"size must be positive, got {text!r}")
    return w, h


def _pose(path: str | None) -> CameraPose:
    return imgio.read_pose(path) if path else CameraPose.identity()


def _load_mesh(args):
    if args.mesh:
        return imgio.read_obj(args.mesh)
    model = imgio.read_model(args.model)
    c_id = imgio.read_coefficients(args.coef_id)
    c_exp = imgio.read_coefficients(args.coef_exp) if args.coef_exp else c_id
    return recombine(model, c_id, c_exp)


def cmd_render(args) -> int:
    if bool(args.mesh) == bool(args.model):
        raise UsageError("give exactly one of --mesh or --model")
    if args.model and not args.coef_id:
        raise UsageError("--model needs --coef-id")
    if args.out_hint and not args.hint_source:
        raise UsageError("--out-hint needs --hint-source")
    mesh = _load_mesh(args)
    pose = _pose(args.pose)
    colors = imgio.read_texture(args.texture) if args.texture else None
    if colors is not None and len(colors) != mesh.n_vertices:
        raise MismatchError(f"texture has {len(colors)} colors for {mesh.n_vertices} vertices")
    w, h = args.size
    buffers = rasterize(project(mesh, pose), colors, w, h)
    mask = facial_mask(buffers)
    if args.out_color:
        imgio.write_ppm(args.out_color, buffers.color)
    if args.out_depth:
        imgio.write_pfm(args.out_depth, buffers.depth)
    if args.out_mask:
        imgio.write_pfm(args.out_mask, mask)
    if args.out_hint:
        source = imgio.read_ppm(args.hint_source)
        if source.shape[:2] != mask.shape:
            raise MismatchError(f"hint source is {source.shape[1]}x{source.shape[0]}, render is {w}x{h}")
        imgio.write_ppm(args.out_hint, appearance_hint(source, mask, args.hint_mode))
    print(f"covered={int(mask.sum())}")
    return 0


def cmd_flow(args) -> int:
    mesh_t = imgio.read_obj(args.mesh_t)
    mesh_tm1 = imgio.read_obj(args.mesh_tm1)
    w, h = args.size
    pair = FramePair.render(project(mesh_t, _pose(args.pose_t)), project(mesh_tm1, _pose(args.pose_tm1)), w, h)
    field = dense_flow(pair, args.eps)
    imgio.write_flow(args.out, field)
    print(f"valid={int(field.valid.sum())}")
    return 0


def _expand(items: list[str]) -> list[str]:
    out = []
    for item in items:
        if any(ch in item for ch in "*?["):
            out.extend(sorted(glob.glob(item)))
        else:
            out.append(item)
    return out


def cmd_tmploss(args) -> int:
    frames = _expand(args.frames)
    flows = _expand(args.flows)
    if len(frames) < 2 or len(flows) != len(frames) - 1:
        raise UsageError(f"{len(frames)} frames need {max(len(frames) - 1, 1)} flows, got {len(flows)}")
    images = [imgio.read_ppm(p) for p in frames]
    fields = [imgio.read_flow(p) for p in flows]
    for k, (img, fl) in enumerate(zip(images[1:], fields), start=1):
        if img.shape[:2] != (fl.height, fl.width):
            raise MismatchError(f"frame {k} is {img.shape[1]}x{img.shape[0]}, flow is {fl.width}x{fl.height}")
    report = temporal.format_report(temporal.sequence_losses(images, fields))
    if args.report:
        imgio.atomic_write(args.report, report.encode("utf-8"))
    sys.stdout.write(report)
    return 0


def cmd_bsn(args) -> int:
    x = imgio.read_fmap(args.x)
    q = imgio.read_fmap(args.q)
    mask = imgio.read_pfm(args.mask).astype(np.float64)
    h, w, c = x.shape
    if q.shape[2] != c:
        raise MismatchError(f"q has {q.shape[2]} channels, x has {c}")
    if q.shape[:2] != (h, w):
        q = neuralmath.upsample_embedding(q, h, w)
    if mask.shape[:2] != (h, w):
        mask = neuralmath.downsample_mask(mask, h, w)
    params = neuralmath.BsnParams(np.full(c, args.alpha), np.full(c, args.beta))
    imgio.write_fmap(args.out, neuralmath.bsn(x, q, mask, params, args.eps))
    return 0


def cmd_sample(args) -> int:
    if not 0.0 <= args.sigma <= 1.0 or args.count < 0:
        raise UsageError("--sigma must be in [0, 1] and --count nonnegative")
    catalog = sampler.read_catalog(args.catalog)
    tuples = sampler.draw_many(catalog, args.sigma, args.count, args.seed)
    text = "".join(t.to_record() + "\n" for t in tuples)
    if args.out:
        imgio.atomic_write(args.out, text.encode("utf-8"))
    else:
        sys.stdout.write(text)
    return 0


def cmd_synth(args) -> int:
    w, h = args.size
    seq = synth.make_sequence(
        args.kind, args.frames, args.seed, w, h, args.subdiv, (args.step, 0.0), args.degrees
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    imgio.write_texture(out / "texture.txt", seq.texture)

    def one(k: int) -> None:
        imgio.write_obj(out / f"mesh_{k:03d}.obj", seq.mesh)
        imgio.write_pose(out / f"pose_{k:03d}.json", seq.poses[k])
        buffers = rasterize(seq.projected(k), seq.texture, w, h)
        imgio.write_ppm(out / f"frame_{k:03d}.ppm", buffers.color)

    with ThreadPoolExecutor(thread_count()) as pool:
        list(pool.map(one, range(args.frames)))
    meta = {"kind": synth.Motion(args.kind).value, "frames": args.frames, "seed": args.seed, "size": [w, h]}
    imgio.atomic_write(out / "sequence.json", (json.dumps(meta, indent=2) + "\n").encode("utf-8"))
    print(f"frames={args.frames} dir={out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="meshflow", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("render", help="rasterize a mesh or recombined model")
    p.add_argument("--model", help="MM3D morphable model")
    p.add_argument("--mesh", help="OBJ mesh in model space")
    p.add_argument("--coef-id", help="COEF file supplying identity coefficients")
    p.add_argument("--coef-exp", help="COEF file supplying expression coefficients")
    p.add_argument("--pose", help="JSON camera pose (default identity)")
    p.add_argument("--texture", help="per-vertex colors, one 'r g b' line per vertex")
    p.add_argument("--size", type=_size, required=True, metavar="WxH")
    p.add_argument("--out-color")
    p.add_argument("--out-depth")
    p.add_argument("--out-mask")
    p.add_argument("--out-hint")
    p.add_argument("--hint-source", help="PPM frame the hint is cut from")
    p.add_argument("--hint-mode", choices=["swap", "reenact"], default="swap")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("flow", help="mesh-derived flow from frame t back to t-1")
    p.add_argument("--mesh-t", required=True)
    p.add_argument("--mesh-tm1", required=True)
    p.add_argument("--pose-t")
    p.add_argument("--pose-tm1")
    p.add_argument("--size", type=_size, required=True, metavar="WxH")
    p.add_argument("--eps", type=float, default=None, help="depth tolerance (default 1e-4 of depth range)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_flow)

    p = sub.add_parser("tmploss", help="warped temporal loss over a frame sequence")
    p.add_argument("--frames", nargs="+", required=True, help="PPM frames or glob patterns, in order")
    p.add_argument("--flows", nargs="+", required=True, help="FLW3 files; flow k maps frame k back to k-1")
    p.add_argument("--report")
    p.set_defaults(func=cmd_tmploss)

    p = sub.add_parser("bsn", help="bidirectional spatial-aware normalization on FMAP files")
    p.add_argument("--x", required=True)
    p.add_argument("--q", required=True)
    p.add_argument("--mask", required=True, help="PFM facial mask")
    p.add_argument("--alpha", type=float, default=0.8)
    p.add_argument("--beta", type=float, default=0.1)
    p.add_argument("--eps", type=float, default=neuralmath.ADAIN_EPS)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bsn)

    p = sub.add_parser("sample", help="draw training tuples from a catalog")
    p.add_argument("--catalog", required=True)
    p.add_argument("--sigma", type=float, default=0.5)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("synth", help="write a synthetic icosphere sequence")
    p.add_argument("--kind", choices=[m.value for m in synth.Motion], required=True)
    p.add_argument("--frames", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--size", type=_size, default=(64, 64), metavar="WxH")
    p.add_argument("--subdiv", type=int, default=2)
    p.add_argument("--step", type=float, default=1.0, help="pixels per frame for translate")
    p.add_argument("--degrees", type=float, default=10.0, help="degrees per frame for rotate")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as err:
        parser.print_usage(sys.stderr)
        print(f"meshflow: error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (imgio.FormatError, sampler.CatalogError, OSError, UnicodeDecodeError) as err:
        print(f"meshflow: cannot read input: {err}", file=sys.stderr)
        return EXIT_PARSE
    except (MismatchError, CorrespondenceError, DimensionError) as err:
        print(f"meshflow: inputs do not match: {err}", file=sys.stderr)
        return EXIT_MISMATCH
    except ValueError as err:
        print(f"meshflow: {err}", file=sys.stderr)
        return EXIT_MISMATCH


if __name__ == "__main__":
    sys.exit(main())
