"""Model-bridge sidecar for lift3d: serves the segment / caption / pointcloud
/ score wire protocol with pluggable adapters."""

__version__ = "0.1.0"

from .adapters import (ADAPTERS, BridgeConfig, CaptionAdapter,
                       PointCloudAdapter, ScoreAdapter, SegmentAdapter)
from .app import create_app

__all__ = ["ADAPTERS", "BridgeConfig", "CaptionAdapter", "PointCloudAdapter",
           "ScoreAdapter", "SegmentAdapter", "create_app"]
