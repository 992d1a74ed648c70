"""Render an orbit of views around a saved VXRF grid.

Usage: python scripts/render_orbit.py --grid out/field.vxrf --out orbit/ --n 12
"""

import argparse
import os

import numpy as np

from lift3d.field import RenderSettings, import_grid, render
from lift3d.geometry import make_pose
from lift3d.imaging import save_image


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--grid", required=True)
    ap.add_argument("--out", required=True)
    ap.add_argument("--n", type=int, default=12)
    ap.add_argument("--elevation", type=float, default=20.0, help="degrees")
    ap.add_argument("--size", type=int, default=256)
    ap.add_argument("--samples", type=int, default=192)
    args = ap.parse_args()

    grid = import_grid(args.grid)
    os.makedirs(args.out, exist_ok=True)
    for k in range(args.n):
        az = 2.0 * np.pi * k / args.n
        pose = make_pose(az, np.deg2rad(args.elevation), 2.3, np.deg2rad(60.0))
        img, _ = render(grid, pose, args.size, args.size, RenderSettings(args.samples))
        path = os.path.join(args.out, f"orbit_{k:03d}.png")
        save_image(img, path)
        print(f"wrote {path}")


if __name__ == "__main__":
    main()
