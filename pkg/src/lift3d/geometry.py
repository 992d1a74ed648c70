"""Camera poses, ray generation, and point-cloud depth projection.

Conventions: camera-to-world rotation, camera looks along its -Z axis at the
world origin, +Y up reference, pinhole intrinsics with pixel centers at
half-integer coordinates. The world volume of interest is the cube [-1, 1]^3.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class GeometryError(ValueError):
    pass


@dataclass
class CameraPose:
    position: np.ndarray      # (3,)
    orientation: np.ndarray   # (3, 3), camera-to-world, columns = right/up/back
    fov_y: float              # radians

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64)
        R = np.asarray(self.orientation, dtype=np.float64)
        if not (0.0 < self.fov_y < np.pi):
            raise GeometryError("fov_y must lie in (0, pi)")
        if np.max(np.abs(R @ R.T - np.eye(3))) > 1e-6 or np.linalg.det(R) < 0:
            raise GeometryError("orientation must be a proper rotation")
        self.orientation = R


@dataclass
class PointCloud:
    points: np.ndarray  # (N, 3)
    colors: np.ndarray  # (N, 3) in [0, 1]

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        self.colors = np.asarray(self.colors, dtype=np.float64).reshape(-1, 3)
        if len(self.points) != len(self.colors):
            raise GeometryError("points and colors must have equal length")
        if not np.all(np.isfinite(self.points)):
            raise GeometryError("point coordinates must be finite")


@dataclass
class SparseDepthMap:
    depth: np.ndarray  # (H, W) float
    valid: np.ndarray  # (H, W) bool

    def __post_init__(self):
        self.depth = np.asarray(self.depth, dtype=np.float64)
        self.valid = np.asarray(self.valid, dtype=bool)
        if self.depth.shape != self.valid.shape:
            raise GeometryError("depth/valid shape mismatch")
        if np.any(self.depth[self.valid] <= 0):
            raise GeometryError("valid depths must be positive")

    @property
    def height(self):
        return self.depth.shape[0]

    @property
    def width(self):
        return self.depth.shape[1]


@dataclass
class RayBundle:
    origins: np.ndarray     # (H, W, 3)
    directions: np.ndarray  # (H, W, 3), unit norm


@dataclass
class PoseDistribution:
    azimuth_range: tuple = (0.0, 2.0 * np.pi)
    elevation_range: tuple = (np.deg2rad(-15.0), np.deg2rad(45.0))
    radius: float = 2.3
    fov_y: float = np.deg2rad(60.0)

    def __post_init__(self):
        if self.azimuth_range[1] < self.azimuth_range[0]:
            raise GeometryError("empty azimuth range")
        if self.elevation_range[1] < self.elevation_range[0]:
            raise GeometryError("empty elevation range")
        if self.radius <= 0:
            raise GeometryError("radius must be positive")


def make_pose(azimuth: float, elevation: float, radius: float, fov_y: float) -> CameraPose:
    if radius <= 0:
        raise GeometryError("radius must be positive")
    if not abs(elevation) < np.pi / 2:
        raise GeometryError("|elevation| must be < pi/2")
    pos = radius * np.array([
        np.cos(elevation) * np.sin(azimuth),
        np.sin(elevation),
        np.cos(elevation) * np.cos(azimuth),
    ])
    back = pos / np.linalg.norm(pos)             # camera +Z, away from origin
    up_ref = np.array([0.0, 1.0, 0.0])
    right = np.cross(up_ref, back)
    right /= np.linalg.norm(right)
    up = np.cross(back, right)
    R = np.stack([right, up, back], axis=1)
    return CameraPose(pos, R, fov_y)


def sample_pose(rng: np.random.Generator, cfg: PoseDistribution) -> CameraPose:
    az = rng.uniform(cfg.azimuth_range[0], cfg.azimuth_range[1])
    el = rng.uniform(cfg.elevation_range[0], cfg.elevation_range[1])
    return make_pose(az, el, cfg.radius, cfg.fov_y)


def focal_length(fov_y: float, height: int) -> float:
    return (height / 2.0) / np.tan(fov_y / 2.0)


def generate_rays(pose: CameraPose, width: int, height: int) -> RayBundle:
    if width < 1 or height < 1:
        raise GeometryError("raster must be at least 1x1")
    f = focal_length(pose.fov_y, height)
    j = np.arange(width) + 0.5
    i = np.arange(height) + 0.5
    x = (j - width / 2.0) / f
    y = -(i - height / 2.0) / f
    xx, yy = np.meshgrid(x, y)
    dirs_cam = np.stack([xx, yy, -np.ones_like(xx)], axis=-1)
    dirs = dirs_cam @ pose.orientation.T
    dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
    origins = np.broadcast_to(pose.position, dirs.shape).copy()
    return RayBundle(origins, dirs)


def project_depth(cloud: PointCloud, pose: CameraPose, width: int, height: int) -> SparseDepthMap:
    """Pinhole projection with a z-buffer: each point lands in one pixel,
    closer points win; points behind the camera or outside the frustum are
    dropped."""
    if len(cloud.points) == 0:
        raise GeometryError("cannot project an empty cloud")
    f = focal_length(pose.fov_y, height)
    p_cam = (cloud.points - pose.position) @ pose.orientation
    z = -p_cam[:, 2]
    in_front = z > 0
    u = np.full(len(z), -1.0)
    v = np.full(len(z), -1.0)
    u[in_front] = f * p_cam[in_front, 0] / z[in_front] + width / 2.0
    v[in_front] = -f * p_cam[in_front, 1] / z[in_front] + height / 2.0
    px = np.floor(u).astype(int)
    py = np.floor(v).astype(int)
    ok = in_front & (px >= 0) & (px < width) & (py >= 0) & (py < height)

    depth = np.full((height, width), np.inf)
    flat = py[ok] * width + px[ok]
    np.minimum.at(depth.reshape(-1), flat, z[ok])
    valid = np.isfinite(depth)
    depth[~valid] = 0.0
    return SparseDepthMap(depth, valid)


def normalize_cloud(cloud: PointCloud, extent: float = 0.9) -> PointCloud:
    if len(cloud.points) == 0:
        raise GeometryError("cannot normalize an empty cloud")
    centered = cloud.points - cloud.points.mean(axis=0)
    m = np.abs(centered).max()
    if m == 0:
        raise GeometryError("cloud has zero extent")
    return PointCloud(centered * (extent / m), cloud.colors)


def save_ply(cloud: PointCloud, path):
    n = len(cloud.points)
    with open(path, "w") as fh:
        fh.write("ply\nformat ascii 1.0\n")
        fh.write(f"element vertex {n}\n")
        for name in ("x", "y", "z", "red", "green", "blue"):
            fh.write(f"property float {name}\n")
        fh.write("end_header\n")
        for p, c in zip(cloud.points, cloud.colors):
            fh.write(f"{p[0]:.9g} {p[1]:.9g} {p[2]:.9g} {c[0]:.9g} {c[1]:.9g} {c[2]:.9g}\n")


def load_ply(path) -> PointCloud:
    with open(path) as fh:
        line = fh.readline().strip()
        if line != "ply":
            raise GeometryError(f"{path}: not a PLY file")
        n = None
        props = []
        color_scale = 1.0
        while True:
            line = fh.readline()
            if not line:
                raise GeometryError(f"{path}: truncated header")
            parts = line.split()
            if parts[0] == "element" and parts[1] == "vertex":
                n = int(parts[2])
            elif parts[0] == "property":
                props.append(parts[2])
                if parts[2] in ("red", "green", "blue") and parts[1] in ("uchar", "uint8"):
                    color_scale = 255.0
            elif parts[0] == "end_header":
                break
        if n is None:
            raise GeometryError(f"{path}: missing vertex element")
        idx = {name: k for k, name in enumerate(props)}
        for name in ("x", "y", "z"):
            if name not in idx:
                raise GeometryError(f"{path}: missing property {name}")
        pts = np.zeros((n, 3))
        cols = np.full((n, 3), 0.5)
        for i in range(n):
            vals = [float(v) for v in fh.readline().split()]
            pts[i] = [vals[idx["x"]], vals[idx["y"]], vals[idx["z"]]]
            if "red" in idx:
                cols[i] = [vals[idx["red"]] / color_scale,
                           vals[idx["green"]] / color_scale,
                           vals[idx["blue"]] / color_scale]
    return PointCloud(pts, cols)
