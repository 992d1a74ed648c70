"""lift3d: single-view object reconstruction by score distillation over an
explicit voxel radiance field, with prompt-driven segmentation, sparse-depth
conditioning from a point cloud, and an HTTP job service."""

__version__ = "0.1.0"

from .engine import SDSConfig, reconstruct, psnr
from .field import VoxelRadianceField, RenderSettings, init_field, render
from .geometry import CameraPose, PointCloud, make_pose
from .imaging import Image, Mask, PromptAnnotation, segment_region_grow
from .pipeline import PipelineConfig, run_pipeline
from .prior import AnalyticOracle, DiffusionSchedule, make_schedule

__all__ = [
    "SDSConfig", "reconstruct", "psnr",
    "VoxelRadianceField", "RenderSettings", "init_field", "render",
    "CameraPose", "PointCloud", "make_pose",
    "Image", "Mask", "PromptAnnotation", "segment_region_grow",
    "PipelineConfig", "run_pipeline",
    "AnalyticOracle", "DiffusionSchedule", "make_schedule",
]
