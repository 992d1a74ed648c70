"""Wire encodings shared by the HTTP service, the remote score client, and the
model bridge: tensors as base64 little-endian f32 (row-major, explicit shape),
images and masks as base64 PNG.
"""

from __future__ import annotations

import base64
import io

import numpy as np
from PIL import Image as PILImage

from .imaging import Image, Mask


class WireError(ValueError):
    pass


def encode_tensor(arr) -> dict:
    arr = np.ascontiguousarray(np.asarray(arr), dtype="<f4")
    return {"data": base64.b64encode(arr.tobytes()).decode("ascii"),
            "shape": list(arr.shape)}


def decode_tensor(obj) -> np.ndarray:
    try:
        raw = base64.b64decode(obj["data"], validate=True)
        shape = tuple(int(s) for s in obj["shape"])
    except (KeyError, TypeError, ValueError) as e:
        raise WireError(f"malformed tensor payload: {e}") from e
    n = int(np.prod(shape)) if shape else 1
    if len(raw) != 4 * n:
        raise WireError(f"tensor byte length {len(raw)} != 4 * product(shape) = {4 * n}")
    return np.frombuffer(raw, dtype="<f4").reshape(shape).astype(np.float64)


def encode_png(image: Image) -> str:
    arr = np.clip(np.rint(image.pixels * 255.0), 0, 255).astype(np.uint8)
    buf = io.BytesIO()
    PILImage.fromarray(arr, mode="RGB").save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def decode_png(b64: str) -> Image:
    try:
        raw = base64.b64decode(b64, validate=True)
        with PILImage.open(io.BytesIO(raw)) as im:
            arr = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    except Exception as e:  # noqa: BLE001
        raise WireError(f"malformed PNG payload: {e}") from e
    return Image(arr)


def encode_mask_png(mask: Mask) -> str:
    arr = np.where(mask.bits, 255, 0).astype(np.uint8)
    buf = io.BytesIO()
    PILImage.fromarray(arr, mode="L").save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def decode_mask_png(b64: str) -> Mask:
    try:
        raw = base64.b64decode(b64, validate=True)
        with PILImage.open(io.BytesIO(raw)) as im:
            arr = np.asarray(im.convert("L"))
    except Exception as e:  # noqa: BLE001
        raise WireError(f"malformed mask payload: {e}") from e
    return Mask(arr >= 128)
