"""Write the bundled synthetic object as a VXRF grid plus an input photo of it
rendered from the front pose, ready for `lift3d reconstruct`.

Usage: python scripts/make_fixture.py OUT_DIR [--size 96]
"""

import argparse
import os

import numpy as np

from lift3d.field import RenderSettings, export_grid, render
from lift3d.fixtures import ground_truth_field
from lift3d.geometry import make_pose
from lift3d.imaging import save_image


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("out_dir")
    ap.add_argument("--size", type=int, default=96, help="input photo resolution")
    args = ap.parse_args()

    os.makedirs(args.out_dir, exist_ok=True)
    gt = ground_truth_field()
    grid_path = os.path.join(args.out_dir, "gt.vxrf")
    export_grid(gt, grid_path)

    pose = make_pose(0.0, 0.0, 2.3, np.deg2rad(60.0))
    img, _ = render(gt, pose, args.size, args.size, RenderSettings(128))
    img_path = os.path.join(args.out_dir, "input.png")
    save_image(img, img_path)
    print(f"wrote {grid_path}")
    print(f"wrote {img_path} (prompt the object center, e.g. --point "
          f"{args.size // 2},{args.size // 2})")


if __name__ == "__main__":
    main()
