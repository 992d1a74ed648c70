"""Adapter interfaces for the four bridge endpoints plus deterministic
built-in stand-ins.

Each adapter is a small class with one method; a deployment wraps real models
by subclassing and registering the subclass under a name in ADAPTERS (see
README.md). The built-ins are fully deterministic so the protocol can be
fixture-tested; they are stand-ins, not reference numerics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from lift3d.imaging import Image, Mask, PromptAnnotation, mask_to_bbox, segment_region_grow


class SegmentAdapter:
    """prompt + image -> (mask, bbox). Override `segment` to wrap a real
    promptable segmentation model."""

    def segment(self, image: Image, prompt: PromptAnnotation):
        raise NotImplementedError


class CaptionAdapter:
    """image -> caption string. Override `caption` to wrap a captioning model."""

    def caption(self, image: Image) -> str:
        raise NotImplementedError


class PointCloudAdapter:
    """image -> (N, 6) rows of x, y, z, r, g, b. Override `pointcloud` to wrap
    an image-to-point-cloud model."""

    def pointcloud(self, image: Image) -> np.ndarray:
        raise NotImplementedError


class ScoreAdapter:
    """Noise prediction eps(x_t, t, depth, embedding); optionally the gradient
    of ||eps - eps_true||^2 with respect to the embedding when the request
    carries eps_true. Override `score` to wrap a depth-conditioned diffusion
    model, mapping the flat embedding into its conditioning space."""

    def score(self, x_t: np.ndarray, t: int, depth: np.ndarray,
              embedding: np.ndarray, eps_true: np.ndarray | None):
        raise NotImplementedError


class RegionGrowSegment(SegmentAdapter):
    """Color-similarity flood fill; the same stand-in the core pipeline uses."""

    def __init__(self, tau: float = 0.25):
        self.tau = tau

    def segment(self, image: Image, prompt: PromptAnnotation):
        mask = segment_region_grow(image, prompt, self.tau)
        return mask, mask_to_bbox(mask)


_COLOR_NAMES = {
    (1, 0, 0): "red", (0, 1, 0): "green", (0, 0, 1): "blue",
    (1, 1, 0): "yellow", (1, 0, 1): "magenta", (0, 1, 1): "cyan",
    (0, 0, 0): "dark", (1, 1, 1): "light",
}


class DominantColorCaption(CaptionAdapter):
    """Names the dominant hue of the non-background region; always returns a
    nonempty string."""

    def caption(self, image: Image) -> str:
        px = image.pixels
        # background heuristic: pixels close to the border median color
        border = np.concatenate([px[0], px[-1], px[:, 0], px[:, -1]])
        bg = np.median(border, axis=0)
        fg = px[np.linalg.norm(px - bg, axis=-1) > 0.2]
        if len(fg) == 0:
            fg = px.reshape(-1, 3)
        mean = fg.mean(axis=0)
        key = tuple(int(v) for v in np.rint(mean))
        name = _COLOR_NAMES.get(key, "colorful")
        return f"a {name} object on a plain background"


class SilhouetteLiftCloud(PointCloudAdapter):
    """Lifts non-background pixels onto a sphere-section depth guess: a crude
    but deterministic single-view shape proxy."""

    def __init__(self, n_points: int = 2048):
        self.n_points = n_points

    def pointcloud(self, image: Image) -> np.ndarray:
        px = image.pixels
        h, w = px.shape[:2]
        border = np.concatenate([px[0], px[-1], px[:, 0], px[:, -1]])
        bg = np.median(border, axis=0)
        fg = np.linalg.norm(px - bg, axis=-1) > 0.2
        ys, xs = np.nonzero(fg)
        if len(ys) == 0:
            ys, xs = np.mgrid[0:h, 0:w].reshape(2, -1)
        # normalized image-plane coordinates in [-1, 1]
        u = (xs + 0.5) / w * 2.0 - 1.0
        v = 1.0 - (ys + 0.5) / h * 2.0
        r2 = np.clip(u * u + v * v, 0.0, 1.0)
        front = np.sqrt(1.0 - r2) * 0.5
        cols = px[ys, xs]
        pts = np.stack([u, v, front], axis=1)
        mirror = np.stack([u, v, -front], axis=1)
        rows = np.concatenate([np.concatenate([pts, cols], axis=1),
                               np.concatenate([mirror, cols], axis=1)])
        if len(rows) > self.n_points:
            sel = np.random.default_rng(0).choice(len(rows), self.n_points,
                                                  replace=False)
            rows = rows[sel]
        return rows


class LinearScore(ScoreAdapter):
    """Deterministic stand-in predictor: a damped copy of x_t plus a fixed
    seeded per-channel linear read-out of the embedding. Embedding-sensitive,
    so the analytic embedding gradient is well defined and exactly
    computable."""

    def __init__(self, damping: float = 0.1, seed: int = 0):
        self.damping = damping
        self.seed = seed

    def _channel_map(self, dim: int) -> np.ndarray:
        return np.random.default_rng(self.seed).normal(0.0, 0.1, (3, dim))

    def score(self, x_t, t, depth, embedding, eps_true):
        x_t = np.asarray(x_t, dtype=np.float64)
        e = np.asarray(embedding, dtype=np.float64)
        W = self._channel_map(len(e)) if len(e) else np.zeros((3, 0))
        shift = W @ e if len(e) else np.zeros(3)
        eps = self.damping * x_t + shift.reshape((1,) * (x_t.ndim - 1) + (3,))
        grad = None
        if eps_true is not None and len(e):
            resid = eps - np.asarray(eps_true, dtype=np.float64)
            per_channel = resid.reshape(-1, 3).sum(axis=0)
            grad = 2.0 * (W.T @ per_channel)
        return eps, grad


ADAPTERS = {
    "segment": {"builtin": RegionGrowSegment},
    "caption": {"builtin": DominantColorCaption},
    "pointcloud": {"builtin": SilhouetteLiftCloud},
    "score": {"builtin": LinearScore},
}


@dataclass
class BridgeConfig:
    segment: str = "builtin"
    caption: str = "builtin"
    pointcloud: str = "builtin"
    score: str = "builtin"
    max_payload_bytes: int = 32 * 1024 * 1024

    def resolve(self):
        out = {}
        for endpoint in ("segment", "caption", "pointcloud", "score"):
            name = getattr(self, endpoint)
            registry = ADAPTERS[endpoint]
            if name not in registry:
                raise ValueError(f"no {endpoint} adapter named {name!r}; "
                                 f"known: {sorted(registry)}")
            out[endpoint] = registry[name]()
        return out
