"""End-to-end pipeline: segment -> caption/invert -> point cloud -> sparse
depth -> score distillation -> export bundle.

A run is fully determined by (config, seed): the export bundle contains the
resolved flat config, and re-running it reproduces the bundle (the VXRF grid
bitwise). With the analytic backend the caption stage is skipped, the
embedding starts at zero, and the oracle's per-view targets are rendered from
the configured ground-truth grid.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import field as vf
from .engine import (ReconstructionInputs, SDSConfig, TrainTrace, ViewLayout,
                     psnr, reconstruct)
from .geometry import (PointCloud, load_ply, make_pose, normalize_cloud,
                       project_depth)
from .imaging import (Image, Mask, PromptAnnotation, apply_mask_crop, load_image,
                      mask_to_bbox, save_image, save_mask, segment_region_grow)
from .prior import (AnalyticOracle, OracleConditioning, PromptEmbedding,
                    encode_depth, invert_embedding, make_schedule)


class PipelineError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"{stage}: {message}")
        self.stage = stage


@dataclass
class PipelineConfig:
    image: str
    prompt: PromptAnnotation
    out_dir: str
    backend: str = "analytic"          # "analytic" | "remote"
    remote_url: str = ""
    remote_segment: bool = False
    seed: int = 0
    tau: float = 0.25
    margin: int = 2
    oracle_grid: str = ""              # VXRF ground truth for analytic targets
    cloud_ply: str = ""                # optional point cloud override
    embedding_dim: int = 16
    inversion_steps: int = 0
    inversion_lr: float = 1e-3
    depth_cond_size: int = 16
    field_resolution: int = 48
    n_azimuth: int = 8
    elevation_deg: float = 20.0
    radius: float = 2.3
    fov_deg: float = 60.0
    export_views: int = 5
    sds: SDSConfig = dc_field(default_factory=SDSConfig)

    def __post_init__(self):
        if self.backend not in ("analytic", "remote"):
            raise PipelineError("config", f"unknown backend {self.backend!r}")
        if self.backend == "remote" and not self.remote_url:
            raise PipelineError("config", "remote backend needs --remote-url")


def config_to_flat(cfg: PipelineConfig) -> dict:
    flat = {
        "image": cfg.image,
        "out_dir": cfg.out_dir,
        "backend": cfg.backend,
        "remote_url": cfg.remote_url,
        "remote_segment": cfg.remote_segment,
        "seed": cfg.seed,
        "tau": cfg.tau,
        "margin": cfg.margin,
        "oracle_grid": cfg.oracle_grid,
        "cloud_ply": cfg.cloud_ply,
        "embedding_dim": cfg.embedding_dim,
        "inversion_steps": cfg.inversion_steps,
        "inversion_lr": cfg.inversion_lr,
        "depth_cond_size": cfg.depth_cond_size,
        "field_resolution": cfg.field_resolution,
        "n_azimuth": cfg.n_azimuth,
        "elevation_deg": cfg.elevation_deg,
        "radius": cfg.radius,
        "fov_deg": cfg.fov_deg,
        "export_views": cfg.export_views,
        "iters": cfg.sds.iterations,
        "lr_density": cfg.sds.lr_density,
        "lr_color": cfg.sds.lr_color,
        "weight_mode": cfg.sds.weight_mode,
        "t_lo": cfg.sds.t_range[0],
        "t_hi": cfg.sds.t_range[1],
        "render_size": cfg.sds.render_size,
        "samples_per_ray": cfg.sds.samples_per_ray,
        "jitter": cfg.sds.jitter,
        "anchor_weight": cfg.sds.anchor_weight,
        "prompt_kind": cfg.prompt.kind,
    }
    if cfg.prompt.kind == "point":
        flat["point_x"], flat["point_y"] = cfg.prompt.point
    else:
        flat["box_x0"], flat["box_y0"], flat["box_x1"], flat["box_y1"] = cfg.prompt.box
    return flat


def config_from_flat(flat: dict) -> PipelineConfig:
    flat = dict(flat)
    kind = flat.pop("prompt_kind", "point")
    if kind == "point":
        prompt = PromptAnnotation("point", point=(int(flat.pop("point_x")),
                                                  int(flat.pop("point_y"))))
    else:
        prompt = PromptAnnotation("box", box=(int(flat.pop("box_x0")), int(flat.pop("box_y0")),
                                              int(flat.pop("box_x1")), int(flat.pop("box_y1"))))
    sds = SDSConfig(
        iterations=int(flat.pop("iters", 2000)),
        lr_density=float(flat.pop("lr_density", 0.1)),
        lr_color=float(flat.pop("lr_color", 0.05)),
        weight_mode=str(flat.pop("weight_mode", "constant")),
        t_range=(float(flat.pop("t_lo", 0.02)), float(flat.pop("t_hi", 0.98))),
        render_size=int(flat.pop("render_size", 64)),
        samples_per_ray=int(flat.pop("samples_per_ray", 128)),
        jitter=bool(flat.pop("jitter", True)),
        anchor_weight=float(flat.pop("anchor_weight", 1.0)),
        seed=int(flat.get("seed", 0)),
    )
    known = {f.name for f in dataclasses.fields(PipelineConfig)} - {"prompt", "sds"}
    kwargs = {k: v for k, v in flat.items() if k in known}
    unknown = set(flat) - known - {"seed"}
    if unknown:
        raise PipelineError("config", f"unknown config keys: {sorted(unknown)}")
    return PipelineConfig(prompt=prompt, sds=sds, **kwargs)


def write_flat_toml(flat: dict, path):
    with open(path, "w") as fh:
        for k, v in flat.items():
            if isinstance(v, bool):
                fh.write(f"{k} = {'true' if v else 'false'}\n")
            elif isinstance(v, (int, float)):
                fh.write(f"{k} = {v}\n")
            else:
                fh.write(f'{k} = "{v}"\n')


def read_flat_toml(path) -> dict:
    try:
        import tomllib
    except ModuleNotFoundError:
        import tomli as tomllib
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def cloud_from_field(grid: vf.VoxelRadianceField, n_points: int = 2048,
                     seed: int = 0, density_threshold: float = 1.0) -> PointCloud:
    """Sample points at voxel centers whose activated density clears the
    threshold; the local point-cloud fallback for synthetic objects."""
    sigma = vf.softplus(grid.density.astype(np.float64))
    ix, iy, iz = np.nonzero(sigma > density_threshold)
    if len(ix) == 0:
        raise PipelineError("pointcloud", "ground-truth grid has no occupied voxels")
    nx, ny, nz = grid.resolution
    span = grid.bounds_max - grid.bounds_min
    pts = np.stack([
        grid.bounds_min[0] + ix / (nx - 1) * span[0],
        grid.bounds_min[1] + iy / (ny - 1) * span[1],
        grid.bounds_min[2] + iz / (nz - 1) * span[2],
    ], axis=1)
    cols = vf.sigmoid(grid.color[ix, iy, iz].astype(np.float64))
    rng = np.random.default_rng(seed)
    if len(pts) > n_points:
        sel = rng.choice(len(pts), n_points, replace=False)
        pts, cols = pts[sel], cols[sel]
    return PointCloud(pts, cols)


def sphere_shell_cloud(n_points: int = 2048, radius: float = 0.9,
                       seed: int = 0) -> PointCloud:
    rng = np.random.default_rng(seed)
    v = rng.standard_normal((n_points, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return PointCloud(v * radius, np.full((n_points, 3), 0.5))


class DepthProviderCache:
    """Per-pose-bucket sparse-depth conditioning, memoized; projection is
    cheap but memoization keeps every visit to a bucket identical."""

    def __init__(self, cloud: PointCloud, layout: ViewLayout, render_size: int,
                 cond_size: int):
        self.cloud = cloud
        self.layout = layout
        self.render_size = render_size
        self.cond_size = cond_size
        self._memo = {}

    def __call__(self, view) -> OracleConditioning:
        key = self.layout.bucket(view.azimuth, view.elevation)
        if key not in self._memo:
            pose = self.layout.pose(*key)
            dm = project_depth(self.cloud, pose, self.render_size, self.render_size)
            dc = encode_depth(dm, self.cond_size)
            self._memo[key] = OracleConditioning(key, dc.features, dc.validity)
        return self._memo[key]


def run_pipeline(cfg: PipelineConfig, on_step=None) -> dict:
    """Execute the full pipeline and write the export bundle. Returns a dict
    with the artifact paths plus the caption (if any) and the final trace."""
    # validate everything up front: a bad config must not leave partial exports
    if not os.path.isfile(cfg.image):
        raise PipelineError("config", f"input image {cfg.image!r} does not exist")
    if cfg.backend == "analytic" and not os.path.isfile(cfg.oracle_grid):
        raise PipelineError("config", "analytic backend needs an oracle_grid VXRF file")
    if cfg.cloud_ply and not os.path.isfile(cfg.cloud_ply):
        raise PipelineError("config", f"cloud_ply {cfg.cloud_ply!r} does not exist")

    client = None
    if cfg.backend == "remote" or cfg.remote_segment:
        from .remote import BridgeClient
        client = BridgeClient(cfg.remote_url)

    layout = ViewLayout(cfg.n_azimuth, (np.deg2rad(cfg.elevation_deg),),
                        cfg.radius, np.deg2rad(cfg.fov_deg))
    schedule = make_schedule()
    s = cfg.sds.render_size

    try:
        image = load_image(cfg.image)
    except Exception as e:
        raise PipelineError("load", str(e)) from e

    try:
        if cfg.remote_segment and client is not None:
            mask, bbox = client.segment(image, cfg.prompt)
        else:
            mask = segment_region_grow(image, cfg.prompt, cfg.tau)
            bbox = mask_to_bbox(mask, cfg.margin)
        crop = apply_mask_crop(image, mask, bbox, s)
    except PipelineError:
        raise
    except Exception as e:
        raise PipelineError("segment", str(e)) from e

    caption = None
    embedding = PromptEmbedding(np.zeros(cfg.embedding_dim))
    try:
        if cfg.backend == "analytic":
            gt = vf.import_grid(cfg.oracle_grid)
            targets = {}
            tgt_settings = vf.RenderSettings(cfg.sds.samples_per_ray, cfg.sds.background)
            for ia in range(cfg.n_azimuth):
                img, _ = vf.render(gt, layout.pose(ia), s, s, tgt_settings)
                targets[(ia, 0)] = img.pixels
            backend = AnalyticOracle(schedule, targets=targets)
        else:
            from .remote import RemoteScoreBackend
            backend = RemoteScoreBackend(client, cfg.embedding_dim)
            caption = client.caption(crop)
    except PipelineError:
        raise
    except Exception as e:
        raise PipelineError("backend", str(e)) from e

    try:
        if cfg.cloud_ply:
            cloud = load_ply(cfg.cloud_ply)
        elif cfg.backend == "remote":
            cloud = client.pointcloud(crop)
        elif cfg.oracle_grid:
            cloud = cloud_from_field(vf.import_grid(cfg.oracle_grid), seed=cfg.seed)
        else:
            cloud = sphere_shell_cloud(seed=cfg.seed)
        cloud = normalize_cloud(cloud)
    except PipelineError:
        raise
    except Exception as e:
        raise PipelineError("pointcloud", str(e)) from e

    depth_provider = DepthProviderCache(cloud, layout, s, cfg.depth_cond_size)
    input_pose = make_pose(0.0, 0.0, cfg.radius, np.deg2rad(cfg.fov_deg))

    if cfg.backend == "remote" and cfg.inversion_steps > 0:
        try:
            rng = np.random.default_rng(cfg.seed + 1)
            embedding = invert_embedding(crop.pixels, backend, schedule,
                                         cfg.inversion_steps, cfg.inversion_lr, rng,
                                         init=embedding)
        except Exception as e:
            raise PipelineError("inversion", str(e)) from e

    try:
        res = (cfg.field_resolution,) * 3
        voxels = vf.init_field(res, init_density=0.05, init_color=(0.5, 0.5, 0.5))
        sds_cfg = dataclasses.replace(cfg.sds, seed=cfg.seed)
        inputs = ReconstructionInputs(crop.pixels, backend, schedule, embedding,
                                      depth_provider, layout.sample, input_pose)
        voxels, trace = reconstruct(voxels, inputs, sds_cfg, on_step=on_step)
    except PipelineError:
        raise
    except Exception as e:
        raise PipelineError("sds", str(e)) from e

    try:
        os.makedirs(cfg.out_dir, exist_ok=True)
        paths = {
            "mask": os.path.join(cfg.out_dir, "mask.png"),
            "crop": os.path.join(cfg.out_dir, "crop.png"),
            "grid": os.path.join(cfg.out_dir, "field.vxrf"),
            "trace": os.path.join(cfg.out_dir, "trace.jsonl"),
            "config": os.path.join(cfg.out_dir, "config.toml"),
        }
        save_mask(mask, paths["mask"])
        save_image(crop, paths["crop"])
        vf.export_grid(voxels, paths["grid"])
        trace.save_jsonl(paths["trace"])
        write_flat_toml(config_to_flat(cfg), paths["config"])
        view_settings = vf.RenderSettings(cfg.sds.samples_per_ray, cfg.sds.background)
        paths["views"] = []
        for k in range(cfg.export_views):
            az = 2.0 * np.pi * k / cfg.export_views
            pose = make_pose(az, np.deg2rad(cfg.elevation_deg), cfg.radius,
                             np.deg2rad(cfg.fov_deg))
            img, _ = vf.render(voxels, pose, s, s, view_settings)
            p = os.path.join(cfg.out_dir, f"view_{k:02d}.png")
            save_image(img, p)
            paths["views"].append(p)
    except Exception as e:
        raise PipelineError("export", str(e)) from e
    finally:
        if client is not None:
            client.close()

    return {"paths": paths, "caption": caption, "trace": trace, "field": voxels,
            "mask": mask, "crop": crop}
