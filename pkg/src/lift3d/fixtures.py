"""Bundled synthetic objects and test rasters.

The ground-truth voxel object is the reference the analytic score oracle pulls
toward: a smooth asymmetric density blob with position-dependent color, so
every view is distinct and reconstruction quality is measurable against
renders of the same field.
"""

from __future__ import annotations

import numpy as np

from .field import VoxelRadianceField, render, RenderSettings, sigmoid_inv, softplus_inv
from .geometry import PointCloud
from .imaging import Image


def ground_truth_field(resolution=(48, 48, 48)) -> VoxelRadianceField:
    nx, ny, nz = resolution
    xs = np.linspace(-1, 1, nx)
    ys = np.linspace(-1, 1, ny)
    zs = np.linspace(-1, 1, nz)
    X, Y, Z = np.meshgrid(xs, ys, zs, indexing="ij")
    # main lobe plus an off-axis bump: breaks rotational symmetry
    r1 = np.sqrt(X ** 2 + Y ** 2 + Z ** 2)
    r2 = np.sqrt((X - 0.35) ** 2 + Y ** 2 + (Z - 0.2) ** 2)
    sigma = 40.0 * np.exp(-((r1 / 0.42) ** 4)) + 40.0 * np.exp(-((r2 / 0.22) ** 4))
    density = softplus_inv(np.maximum(sigma, 1e-6)).astype(np.float32)
    color = np.stack([
        0.55 + 0.4 * np.sin(3.0 * X),
        0.5 + 0.4 * np.cos(2.0 * Y + 1.0),
        0.45 + 0.4 * np.sin(2.5 * Z + 0.5),
    ], axis=-1)
    color = sigmoid_inv(np.clip(color, 0.02, 0.98)).astype(np.float32)
    return VoxelRadianceField(density, color)


def ground_truth_cloud(n_points: int = 2048, seed: int = 7) -> PointCloud:
    """Points sampled on the ground-truth object's high-density region."""
    rng = np.random.default_rng(seed)
    pts = []
    while len(pts) < n_points:
        cand = rng.uniform(-1, 1, (4 * n_points, 3))
        r1 = np.linalg.norm(cand, axis=1)
        r2 = np.linalg.norm(cand - np.array([0.35, 0.0, 0.2]), axis=1)
        keep = cand[(r1 < 0.42) | (r2 < 0.22)]
        pts.extend(keep.tolist())
    pts = np.array(pts[:n_points])
    cols = np.clip(np.stack([
        0.55 + 0.4 * np.sin(3.0 * pts[:, 0]),
        0.5 + 0.4 * np.cos(2.0 * pts[:, 1] + 1.0),
        0.45 + 0.4 * np.sin(2.5 * pts[:, 2] + 0.5),
    ], axis=-1), 0.02, 0.98)
    return PointCloud(pts, cols)


def render_ground_truth(field: VoxelRadianceField, pose, size: int = 64,
                        samples: int = 128) -> np.ndarray:
    img, _ = render(field, pose, size, size, RenderSettings(samples))
    return img.pixels


def two_region_image(width: int = 32, height: int = 32) -> Image:
    """Left half red, right half blue."""
    px = np.zeros((height, width, 3))
    px[:, : width // 2, 0] = 1.0
    px[:, width // 2:, 2] = 1.0
    return Image(px)


def disk_mask(width: int, height: int, cx: float, cy: float, radius: float) -> np.ndarray:
    yy, xx = np.mgrid[0:height, 0:width]
    return (xx - cx) ** 2 + (yy - cy) ** 2 <= radius ** 2


def noisy_disk_image(width: int = 64, height: int = 64, radius: float = 20.0,
                     noise: float = 0.02, seed: int = 0):
    """Gray disk on a dark background with additive uniform noise; returns the
    image and the noiseless ground-truth mask."""
    rng = np.random.default_rng(seed)
    mask = disk_mask(width, height, width / 2, height / 2, radius)
    px = np.where(mask[:, :, None], 0.8, 0.2) + rng.uniform(-noise, noise, (height, width, 3))
    return Image(np.clip(px, 0.0, 1.0)), mask
