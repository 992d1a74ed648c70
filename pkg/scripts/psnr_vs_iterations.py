"""Track held-out novel-view PSNR while score distillation runs against the
analytic oracle, printing a row every --every iterations.

Usage: python scripts/psnr_vs_iterations.py --iters 2000 --every 100
"""

import argparse
import time

import numpy as np

from lift3d.engine import (ReconstructionInputs, SDSConfig, ViewLayout, psnr,
                           reconstruct)
from lift3d.field import RenderSettings, init_field, render
from lift3d.fixtures import ground_truth_field
from lift3d.geometry import make_pose
from lift3d.pipeline import DepthProviderCache, cloud_from_field
from lift3d.prior import AnalyticOracle, PromptEmbedding, make_schedule


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--iters", type=int, default=2000)
    ap.add_argument("--every", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--size", type=int, default=64)
    ap.add_argument("--resolution", type=int, default=48)
    args = ap.parse_args()

    gt = ground_truth_field()
    layout = ViewLayout(n_azimuth=8)
    schedule = make_schedule()
    settings = RenderSettings(128)
    targets = {}
    for ia in range(8):
        img, _ = render(gt, layout.pose(ia), args.size, args.size, settings)
        targets[(ia, 0)] = img.pixels
    oracle = AnalyticOracle(schedule, targets=targets)
    depth = DepthProviderCache(cloud_from_field(gt), layout, args.size, 16)
    input_pose = make_pose(0.0, 0.0, 2.3, np.deg2rad(60.0))
    anchor_img, _ = render(gt, input_pose, args.size, args.size, settings)

    held_out = [make_pose(k * np.pi / 2 + np.pi / 8, np.deg2rad(20.0), 2.3,
                          np.deg2rad(60.0)) for k in range(4)]
    gt_views = [render(gt, p, args.size, args.size, settings)[0].pixels
                for p in held_out]

    cfg = SDSConfig(iterations=args.iters, render_size=args.size, seed=args.seed)
    inputs = ReconstructionInputs(anchor_img.pixels, oracle, schedule,
                                  PromptEmbedding(np.zeros(1)), depth,
                                  layout.sample, input_pose)
    f = init_field((args.resolution,) * 3, init_density=0.05)

    start = time.perf_counter()
    print(f"{'iter':>6} {'psnr_mean':>9} {'psnr_min':>9} {'proxy':>10} {'sec':>7}")

    def on_step(it, rec, field):
        if (it + 1) % args.every and (it + 1) != args.iters:
            return
        vals = [psnr(render(field, p, args.size, args.size, settings)[0].pixels, g)
                for p, g in zip(held_out, gt_views)]
        print(f"{it + 1:>6} {np.mean(vals):>9.2f} {np.min(vals):>9.2f} "
              f"{rec.proxy_loss:>10.4f} {time.perf_counter() - start:>7.1f}")

    reconstruct(f, inputs, cfg, on_step=on_step)


if __name__ == "__main__":
    main()
