"""Image loading, prompt-driven segmentation, and masked affine cropping.

Images are H x W x 3 float rasters in [0, 1]; masks are H x W booleans.
Segmentation is a deterministic local-similarity region grow: the mask is
the 4-connected component (edges join pixels whose colors differ by at most
tau) containing the seed, so any seed inside the region reproduces the same
mask.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np
from PIL import Image as PILImage

WHITE = (1.0, 1.0, 1.0)


class ImagingError(ValueError):
    pass


@dataclass
class Image:
    pixels: np.ndarray  # (H, W, 3) float64 in [0, 1]

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim != 3 or px.shape[2] != 3 or px.shape[0] < 1 or px.shape[1] < 1:
            raise ImagingError(f"expected (H, W, 3) raster, got {px.shape}")
        if not np.all(np.isfinite(px)) or px.min() < 0.0 or px.max() > 1.0:
            raise ImagingError("pixel values must be finite and within [0, 1]")
        self.pixels = px

    @property
    def height(self):
        return self.pixels.shape[0]

    @property
    def width(self):
        return self.pixels.shape[1]


@dataclass
class Mask:
    bits: np.ndarray  # (H, W) bool

    def __post_init__(self):
        b = np.asarray(self.bits)
        if b.ndim != 2:
            raise ImagingError(f"expected (H, W) mask, got {b.shape}")
        self.bits = b.astype(bool)

    @property
    def height(self):
        return self.bits.shape[0]

    @property
    def width(self):
        return self.bits.shape[1]


@dataclass
class PromptAnnotation:
    kind: str  # "point" | "box"
    point: tuple[int, int] | None = None  # (x, y)
    box: tuple[int, int, int, int] | None = None  # (x0, y0, x1, y1)

    def __post_init__(self):
        if self.kind == "point":
            if self.point is None:
                raise ImagingError("point prompt requires coordinates")
        elif self.kind == "box":
            if self.box is None:
                raise ImagingError("box prompt requires bounds")
            x0, y0, x1, y1 = self.box
            if x0 > x1 or y0 > y1:
                raise ImagingError("box must satisfy x0 <= x1, y0 <= y1")
        else:
            raise ImagingError(f"unknown prompt kind {self.kind!r}")


@dataclass
class BBox:
    x0: int
    y0: int
    x1: int
    y1: int

    def __post_init__(self):
        if self.x0 > self.x1 or self.y0 > self.y1:
            raise ImagingError("degenerate bbox")

    @property
    def width(self):
        return self.x1 - self.x0 + 1

    @property
    def height(self):
        return self.y1 - self.y0 + 1


def load_image(path) -> Image:
    try:
        with PILImage.open(path) as im:
            im = im.convert("RGB")
            arr = np.asarray(im, dtype=np.float64) / 255.0
    except FileNotFoundError:
        raise
    except Exception as e:  # noqa: BLE001 - PIL raises assorted decode errors
        raise ImagingError(f"cannot decode image {path}: {e}") from e
    return Image(arr)


def save_image(image: Image, path):
    arr = np.clip(np.rint(image.pixels * 255.0), 0, 255).astype(np.uint8)
    PILImage.fromarray(arr, mode="RGB").save(path, format="PNG")


def save_mask(mask: Mask, path):
    arr = np.where(mask.bits, 255, 0).astype(np.uint8)
    PILImage.fromarray(arr, mode="L").save(path, format="PNG")


def load_mask(path) -> Mask:
    with PILImage.open(path) as im:
        arr = np.asarray(im.convert("L"))
    return Mask(arr >= 128)


def _check_inside(image: Image, x, y):
    if not (0 <= x < image.width and 0 <= y < image.height):
        raise ImagingError(f"prompt ({x}, {y}) outside {image.width}x{image.height} image")


def segment_region_grow(image: Image, prompt: PromptAnnotation, tau: float) -> Mask:
    """Flood fill in RGB space: the 4-connected component containing the seed.

    Two adjacent pixels are connected when their Euclidean color distance is
    at most tau. Box prompts seed at the box center and stay inside the box.
    """
    if not tau > 0:
        raise ImagingError("tau must be positive")
    h, w = image.height, image.width
    if prompt.kind == "point":
        sx, sy = prompt.point
        _check_inside(image, sx, sy)
        bx0, by0, bx1, by1 = 0, 0, w - 1, h - 1
    else:
        bx0, by0, bx1, by1 = prompt.box
        _check_inside(image, bx0, by0)
        _check_inside(image, bx1, by1)
        sx, sy = (bx0 + bx1) // 2, (by0 + by1) // 2

    px = image.pixels
    bits = np.zeros((h, w), dtype=bool)
    bits[sy, sx] = True
    frontier = deque([(sy, sx)])
    tau2 = tau * tau
    while frontier:
        y, x = frontier.popleft()
        c = px[y, x]
        for ny, nx in ((y - 1, x), (y + 1, x), (y, x - 1), (y, x + 1)):
            if by0 <= ny <= by1 and bx0 <= nx <= bx1 and not bits[ny, nx]:
                d = px[ny, nx] - c
                if d[0] * d[0] + d[1] * d[1] + d[2] * d[2] <= tau2:
                    bits[ny, nx] = True
                    frontier.append((ny, nx))
    return Mask(bits)


def mask_to_bbox(mask: Mask, margin: int = 0) -> BBox:
    ys, xs = np.nonzero(mask.bits)
    if len(ys) == 0:
        raise ImagingError("empty mask has no bounding box")
    x0 = max(int(xs.min()) - margin, 0)
    y0 = max(int(ys.min()) - margin, 0)
    x1 = min(int(xs.max()) + margin, mask.width - 1)
    y1 = min(int(ys.max()) + margin, mask.height - 1)
    return BBox(x0, y0, x1, y1)


def square_box(box: BBox, width: int, height: int) -> BBox:
    """Expand the shorter side to make the box square, shifting to stay inside
    the image and clipping when the image itself is too small."""
    side = max(box.width, box.height)
    side = min(side, width, height)

    def _expand(lo, hi, limit):
        extra = side - (hi - lo + 1)
        lo -= extra // 2
        hi += extra - extra // 2
        if lo < 0:
            hi -= lo
            lo = 0
        if hi > limit - 1:
            lo -= hi - (limit - 1)
            hi = limit - 1
        return max(lo, 0), hi

    x0, x1 = _expand(box.x0, box.x1, width)
    y0, y1 = _expand(box.y0, box.y1, height)
    return BBox(x0, y0, x1, y1)


def apply_mask_crop(image: Image, mask: Mask, box: BBox, out_size: int,
                    background=WHITE, square: bool = True) -> Image:
    """Mask the image against a background color, then bilinearly resample the
    (square-expanded) box region to out_size x out_size."""
    if (mask.height, mask.width) != (image.height, image.width):
        raise ImagingError("mask and image dimensions differ")
    if box.x1 >= image.width or box.y1 >= image.height or box.x0 < 0 or box.y0 < 0:
        raise ImagingError("box outside image")
    if out_size < 1:
        raise ImagingError("out_size must be >= 1")
    if square:
        box = square_box(box, image.width, image.height)

    bg = np.asarray(background, dtype=np.float64)
    comp = np.where(mask.bits[:, :, None], image.pixels, bg)

    # Output pixel centers mapped into source coordinates over the box extent.
    h, w = image.height, image.width
    u = box.x0 + (np.arange(out_size) + 0.5) / out_size * box.width - 0.5
    v = box.y0 + (np.arange(out_size) + 0.5) / out_size * box.height - 0.5
    uu = np.clip(np.meshgrid(u, v)[0], 0.0, w - 1.0)
    vv = np.clip(np.meshgrid(u, v)[1], 0.0, h - 1.0)
    x0 = np.floor(uu).astype(int)
    y0 = np.floor(vv).astype(int)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (uu - x0)[..., None]
    fy = (vv - y0)[..., None]
    out = (comp[y0, x0] * (1 - fx) * (1 - fy)
           + comp[y0, x1] * fx * (1 - fy)
           + comp[y1, x0] * (1 - fx) * fy
           + comp[y1, x1] * fx * fy)
    return Image(np.clip(out, 0.0, 1.0))
