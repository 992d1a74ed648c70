"""FastAPI application serving the four wire-protocol endpoints.

All bodies are JSON; tensors are base64 little-endian f32 with explicit
shapes, images base64 PNG. Malformed input gets a structured 400 with an
error code, never a dropped connection.
"""

from __future__ import annotations

import argparse

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from lift3d.imaging import ImagingError
from lift3d.remote import prompt_from_json
from lift3d.wire import (WireError, decode_png, decode_tensor, encode_mask_png,
                         encode_tensor)

from .adapters import BridgeConfig


def _error(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse({"error": {"code": code, "message": message}},
                        status_code=status)


def create_app(config: BridgeConfig | None = None) -> FastAPI:
    config = config or BridgeConfig()
    adapters = config.resolve()  # models load once, shared read-only
    app = FastAPI(title="lift3d-bridge")
    app.state.config = config
    app.state.adapters = adapters

    async def read_json(request: Request):
        body = await request.body()
        if len(body) > config.max_payload_bytes:
            return None, _error(413, "payload_too_large",
                                f"body exceeds {config.max_payload_bytes} bytes")
        try:
            import json
            obj = json.loads(body)
        except ValueError:
            return None, _error(400, "bad_json", "request body is not valid JSON")
        if not isinstance(obj, dict):
            return None, _error(400, "bad_json", "request body must be a JSON object")
        return obj, None

    @app.post("/v1/segment")
    async def segment(request: Request):
        body, err = await read_json(request)
        if err:
            return err
        try:
            image = decode_png(body["image_png_b64"])
            prompt = prompt_from_json(body["prompt"])
        except (WireError, ImagingError, KeyError, TypeError, ValueError) as e:
            return _error(400, "bad_request", str(e))
        try:
            mask, bbox = adapters["segment"].segment(image, prompt)
        except ImagingError as e:
            return _error(422, "segment_failed", str(e))
        return JSONResponse({"mask_png_b64": encode_mask_png(mask),
                             "bbox": [bbox.x0, bbox.y0, bbox.x1, bbox.y1]})

    @app.post("/v1/caption")
    async def caption(request: Request):
        body, err = await read_json(request)
        if err:
            return err
        try:
            image = decode_png(body["image_png_b64"])
        except (WireError, KeyError, TypeError) as e:
            return _error(400, "bad_request", str(e))
        return JSONResponse({"caption": adapters["caption"].caption(image)})

    @app.post("/v1/pointcloud")
    async def pointcloud(request: Request):
        body, err = await read_json(request)
        if err:
            return err
        try:
            image = decode_png(body["image_png_b64"])
        except (WireError, KeyError, TypeError) as e:
            return _error(400, "bad_request", str(e))
        rows = adapters["pointcloud"].pointcloud(image)
        return JSONResponse({"points": [[float(v) for v in row] for row in rows]})

    @app.post("/v1/score")
    async def score(request: Request):
        body, err = await read_json(request)
        if err:
            return err
        try:
            x_t = decode_tensor(body["x_t"])
            t = int(body["t"])
            depth = decode_tensor(body["depth"])
            embedding = [float(v) for v in body.get("embedding", [])]
            eps_true = (decode_tensor(body["eps_true"])
                        if "eps_true" in body else None)
        except (WireError, KeyError, TypeError, ValueError) as e:
            return _error(400, "bad_request", str(e))
        if eps_true is not None and eps_true.shape != x_t.shape:
            return _error(400, "bad_request", "eps_true shape must match x_t")
        eps, grad = adapters["score"].score(x_t, t, depth, embedding, eps_true)
        out = {"eps": encode_tensor(eps)}
        if grad is not None:
            out["embedding_grad"] = [float(v) for v in grad]
        return JSONResponse(out)

    return app


def main(argv=None) -> int:
    import uvicorn

    ap = argparse.ArgumentParser(description="serve the lift3d model bridge")
    ap.add_argument("--addr", default="127.0.0.1:9000")
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args(argv)
    host, _, port = args.addr.rpartition(":")
    if not host or not port.isdigit():
        ap.error(f"address must be host:port, got {args.addr!r}")
    uvicorn.run(create_app(), host=host, port=int(port), workers=1,
                log_level="warning")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
