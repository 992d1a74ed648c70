"""HTTP client for the model-bridge wire protocol.

Endpoints (all JSON): POST /v1/segment, /v1/caption, /v1/pointcloud,
/v1/score. Tensors travel as base64 little-endian f32 with explicit shapes;
images as base64 PNG. /v1/score optionally accepts the drawn noise as
eps_true, in which case the server may return embedding_grad, the gradient of
||eps_pred - eps_true||^2 with respect to the embedding.
"""

from __future__ import annotations

import numpy as np
import httpx

from .geometry import PointCloud
from .imaging import BBox, Image, Mask, PromptAnnotation
from .prior import ScoreBackend
from .wire import decode_mask_png, decode_tensor, encode_png, encode_tensor


class RemoteError(RuntimeError):
    pass


class BridgeClient:
    def __init__(self, base_url: str, timeout: float = 120.0, transport=None):
        self.base_url = base_url.rstrip("/")
        self._client = httpx.Client(base_url=self.base_url, timeout=timeout,
                                    transport=transport)

    def close(self):
        self._client.close()

    def _post(self, path: str, payload: dict) -> dict:
        try:
            resp = self._client.post(path, json=payload)
        except httpx.HTTPError as e:
            raise RemoteError(f"POST {path} failed: {e}") from e
        if resp.status_code != 200:
            raise RemoteError(f"POST {path} -> {resp.status_code}: {resp.text[:500]}")
        try:
            return resp.json()
        except ValueError as e:
            raise RemoteError(f"POST {path}: undecodable response body") from e

    def segment(self, image: Image, prompt: PromptAnnotation) -> tuple[Mask, BBox]:
        body = {"image_png_b64": encode_png(image), "prompt": prompt_to_json(prompt)}
        out = self._post("/v1/segment", body)
        try:
            mask = decode_mask_png(out["mask_png_b64"])
            bbox = BBox(*(int(v) for v in out["bbox"]))
        except (KeyError, TypeError, ValueError) as e:
            raise RemoteError(f"/v1/segment: malformed response: {e}") from e
        return mask, bbox

    def caption(self, image: Image) -> str:
        out = self._post("/v1/caption", {"image_png_b64": encode_png(image)})
        cap = out.get("caption")
        if not isinstance(cap, str):
            raise RemoteError("/v1/caption: missing caption string")
        return cap

    def pointcloud(self, image: Image) -> PointCloud:
        out = self._post("/v1/pointcloud", {"image_png_b64": encode_png(image)})
        try:
            pts = np.asarray(out["points"], dtype=np.float64).reshape(-1, 6)
        except (KeyError, TypeError, ValueError) as e:
            raise RemoteError(f"/v1/pointcloud: malformed response: {e}") from e
        return PointCloud(pts[:, :3], np.clip(pts[:, 3:], 0.0, 1.0))

    def score(self, x_t: np.ndarray, t: int, depth_features: np.ndarray,
              embedding: np.ndarray, eps_true: np.ndarray | None = None):
        body = {
            "x_t": encode_tensor(x_t),
            "t": int(t),
            "embedding": [float(v) for v in np.asarray(embedding).ravel()],
            "depth": encode_tensor(depth_features),
        }
        if eps_true is not None:
            body["eps_true"] = encode_tensor(eps_true)
        out = self._post("/v1/score", body)
        try:
            eps = decode_tensor(out["eps"])
        except (KeyError, TypeError, ValueError) as e:
            raise RemoteError(f"/v1/score: malformed response: {e}") from e
        if eps.shape != np.asarray(x_t).shape:
            raise RemoteError(f"/v1/score: eps shape {eps.shape} != x_t shape")
        grad = out.get("embedding_grad")
        if grad is not None:
            grad = np.asarray(grad, dtype=np.float64)
        return eps, grad


def prompt_to_json(prompt: PromptAnnotation) -> dict:
    if prompt.kind == "point":
        return {"kind": "point", "point": [int(prompt.point[0]), int(prompt.point[1])]}
    return {"kind": "box", "box": [int(v) for v in prompt.box]}


def prompt_from_json(obj: dict) -> PromptAnnotation:
    kind = obj.get("kind")
    if kind == "point":
        x, y = obj["point"]
        return PromptAnnotation("point", point=(int(x), int(y)))
    if kind == "box":
        return PromptAnnotation("box", box=tuple(int(v) for v in obj["box"]))
    raise ValueError(f"unknown prompt kind {kind!r}")


class RemoteScoreBackend(ScoreBackend):
    """Score backend speaking the wire protocol; deterministic given identical
    requests as long as the remote side is."""

    def __init__(self, client: BridgeClient, embedding_dim: int = 16):
        self.client = client
        self.embedding_dim = embedding_dim

    def _features(self, cond):
        feats = getattr(cond, "features", None)
        if feats is None:
            return np.zeros((1, 1))
        return np.asarray(feats, dtype=np.float64)

    def predict_eps(self, x_t, t, cond, embedding):
        eps, _ = self.client.score(np.asarray(x_t), t, self._features(cond),
                                   embedding.values)
        return eps

    def embedding_objective_grad(self, x_t, t, cond, embedding, eps_true):
        _, grad = self.client.score(np.asarray(x_t), t, self._features(cond),
                                    embedding.values, eps_true=np.asarray(eps_true))
        return grad
