"""Command-line entry point.

Subcommands: reconstruct (run the full pipeline), serve (job API), render
(novel view of a saved grid). Flags mirror the flat config file keys; flags
given on the command line override file values.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lift3d",
                                description="single-view object reconstruction")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("reconstruct", help="run the full pipeline")
    r.add_argument("--config", help="flat TOML config file; flags override it")
    r.add_argument("--image", help="input image path")
    r.add_argument("--point", help="object prompt as x,y pixel coordinates")
    r.add_argument("--box", help="object prompt as x0,y0,x1,y1 box")
    r.add_argument("--backend", choices=["analytic", "remote"])
    r.add_argument("--remote-url", dest="remote_url")
    r.add_argument("--remote-segment", action="store_true", default=None)
    r.add_argument("--oracle-grid", dest="oracle_grid",
                   help="VXRF ground-truth grid for the analytic backend")
    r.add_argument("--cloud-ply", dest="cloud_ply")
    r.add_argument("--iters", type=int)
    r.add_argument("--seed", type=int)
    r.add_argument("--out", dest="out_dir", help="export directory")

    s = sub.add_parser("serve", help="run the HTTP job service")
    s.add_argument("--addr", default="127.0.0.1:8000")
    s.add_argument("--workdir")

    v = sub.add_parser("render", help="render a novel view of a saved grid")
    v.add_argument("--grid", required=True, help="VXRF grid file")
    v.add_argument("--azimuth", type=float, default=0.0, help="degrees")
    v.add_argument("--elevation", type=float, default=0.0, help="degrees")
    v.add_argument("--radius", type=float, default=2.3)
    v.add_argument("--fov", type=float, default=60.0, help="vertical FOV, degrees")
    v.add_argument("--size", type=int, default=256)
    v.add_argument("--samples", type=int, default=192)
    v.add_argument("--out", required=True, help="output PNG path")
    return p


def _parse_ints(text: str, n: int, flag: str):
    parts = text.split(",")
    if len(parts) != n:
        raise SystemExit(f"error: {flag} expects {n} comma-separated integers")
    try:
        return tuple(int(v) for v in parts)
    except ValueError:
        raise SystemExit(f"error: {flag} expects integers, got {text!r}")


def _cmd_reconstruct(args) -> int:
    from .pipeline import (PipelineError, config_from_flat, read_flat_toml,
                           run_pipeline)

    flat = read_flat_toml(args.config) if args.config else {}
    for key in ("image", "backend", "remote_url", "oracle_grid", "cloud_ply",
                "out_dir", "seed", "remote_segment"):
        val = getattr(args, key, None)
        if val is not None:
            flat[key] = val
    if args.iters is not None:
        flat["iters"] = args.iters
    if args.point is not None and args.box is not None:
        raise SystemExit("error: give either --point or --box, not both")
    if args.point is not None:
        flat["prompt_kind"] = "point"
        flat["point_x"], flat["point_y"] = _parse_ints(args.point, 2, "--point")
        for k in ("box_x0", "box_y0", "box_x1", "box_y1"):
            flat.pop(k, None)
    elif args.box is not None:
        flat["prompt_kind"] = "box"
        (flat["box_x0"], flat["box_y0"],
         flat["box_x1"], flat["box_y1"]) = _parse_ints(args.box, 4, "--box")
        flat.pop("point_x", None)
        flat.pop("point_y", None)

    for required, flag in (("image", "--image"), ("out_dir", "--out")):
        if not flat.get(required):
            raise SystemExit(f"error: {flag} is required (flag or config file)")
    if "prompt_kind" not in flat:
        raise SystemExit("error: an object prompt is required (--point or --box)")

    try:
        cfg = config_from_flat(flat)
        result = run_pipeline(cfg)
    except PipelineError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    paths = result["paths"]
    if result["caption"]:
        print(f"caption: {result['caption']}")
    print(f"grid: {paths['grid']}")
    print(f"trace: {paths['trace']} ({len(result['trace'].records)} steps)")
    for pv in paths["views"]:
        print(f"view: {pv}")
    return 0


def _cmd_serve(args) -> int:
    from .service import serve
    try:
        serve(args.addr, args.workdir)
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


def _cmd_render(args) -> int:
    from . import field as vf
    from .geometry import make_pose
    from .imaging import save_image

    try:
        grid = vf.import_grid(args.grid)
    except (OSError, ValueError) as e:
        print(f"error: cannot load grid: {e}", file=sys.stderr)
        return 1
    pose = make_pose(np.deg2rad(args.azimuth), np.deg2rad(args.elevation),
                     args.radius, np.deg2rad(args.fov))
    img, _ = vf.render(grid, pose, args.size, args.size,
                       vf.RenderSettings(args.samples))
    save_image(img, args.out)
    print(f"wrote {args.out}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "reconstruct":
        return _cmd_reconstruct(args)
    if args.command == "serve":
        return _cmd_serve(args)
    return _cmd_render(args)


if __name__ == "__main__":
    sys.exit(main())
