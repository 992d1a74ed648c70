"""HTTP job service: queue reconstructions, poll their progress, render the
evolving field on demand, and segment interactively with the local stand-in.

Endpoints: POST /v1/jobs {flat config} -> 201 {id}; GET /v1/jobs/{id} ->
{state, iteration, proxy_loss_tail}; GET /v1/jobs/{id}/render?azimuth&
elevation (degrees) -> image/png; POST /v1/segment {image_png_b64, prompt} ->
{mask_png_b64, bbox}.

One worker thread executes jobs FIFO; API reads are concurrent. A render of a
running job uses a field snapshot taken between optimization steps.
"""

from __future__ import annotations

import base64
import io
import os
import queue
import tempfile
import threading
import uuid
from dataclasses import dataclass, field as dc_field

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, Response
from PIL import Image as PILImage

from . import field as vf
from .geometry import make_pose
from .imaging import mask_to_bbox, segment_region_grow
from .pipeline import PipelineError, config_from_flat, run_pipeline
from .wire import WireError, decode_png, encode_mask_png

SNAPSHOT_EVERY = 25
TAIL_LENGTH = 50


@dataclass
class Job:
    id: str
    config: dict
    state: str = "queued"          # queued -> running -> done | failed
    iteration: int = 0
    proxy_tail: list = dc_field(default_factory=list)
    error: str | None = None
    field_snapshot: vf.VoxelRadianceField | None = None


class JobManager:
    def __init__(self, workdir: str | None = None):
        self.workdir = workdir or tempfile.mkdtemp(prefix="lift3d-jobs-")
        self._jobs: dict[str, Job] = {}
        self._lock = threading.Lock()
        self._queue: queue.Queue = queue.Queue()
        self._worker = threading.Thread(target=self._run, daemon=True)
        self._worker.start()

    def submit(self, flat: dict) -> str:
        flat = dict(flat)
        job_id = uuid.uuid4().hex
        job_dir = os.path.join(self.workdir, job_id)
        os.makedirs(job_dir, exist_ok=True)
        png_b64 = flat.pop("image_png_b64", None)
        if png_b64 is not None:
            image_path = os.path.join(job_dir, "input.png")
            with open(image_path, "wb") as fh:
                fh.write(base64.b64decode(png_b64, validate=True))
            flat["image"] = image_path
        flat.setdefault("out_dir", os.path.join(job_dir, "out"))
        config_from_flat(flat)  # reject malformed configs before queueing
        job = Job(job_id, flat)
        with self._lock:
            self._jobs[job_id] = job
        self._queue.put(job_id)
        return job_id

    def get(self, job_id: str) -> Job | None:
        with self._lock:
            return self._jobs.get(job_id)

    def status(self, job_id: str) -> dict | None:
        with self._lock:
            job = self._jobs.get(job_id)
            if job is None:
                return None
            out = {"state": job.state, "iteration": job.iteration,
                   "proxy_loss_tail": list(job.proxy_tail)}
            if job.error is not None:
                out["error"] = job.error
            return out

    def render_snapshot(self, job_id: str, azimuth_deg: float, elevation_deg: float):
        """Render the job's current field; None if unknown id, False if the
        job has no field yet."""
        with self._lock:
            job = self._jobs.get(job_id)
            if job is None:
                return None
            snap = job.field_snapshot
            flat = job.config
        if snap is None:
            return False
        cfg = config_from_flat(flat)
        pose = make_pose(np.deg2rad(azimuth_deg), np.deg2rad(elevation_deg),
                         cfg.radius, np.deg2rad(cfg.fov_deg))
        s = cfg.sds.render_size
        settings = vf.RenderSettings(cfg.sds.samples_per_ray, cfg.sds.background)
        img, _ = vf.render(snap, pose, s, s, settings)
        return img

    def _run(self):
        while True:
            job_id = self._queue.get()
            if job_id is None:
                return
            with self._lock:
                job = self._jobs[job_id]
                job.state = "running"
                cfg_flat = dict(job.config)

            def on_step(it, rec, f, job=job):
                with self._lock:
                    job.iteration = it + 1
                    job.proxy_tail.append(rec.proxy_loss)
                    del job.proxy_tail[:-TAIL_LENGTH]
                    if (it + 1) % SNAPSHOT_EVERY == 0:
                        job.field_snapshot = f.copy()

            try:
                cfg = config_from_flat(cfg_flat)
                result = run_pipeline(cfg, on_step=on_step)
                with self._lock:
                    job.field_snapshot = result["field"].copy()
                    job.state = "done"
            except Exception as e:  # noqa: BLE001 - job failures must not kill the worker
                with self._lock:
                    job.error = str(e)
                    job.state = "failed"

    def shutdown(self):
        self._queue.put(None)
        self._worker.join(timeout=5.0)


def _error(status: int, message: str) -> JSONResponse:
    return JSONResponse({"error": message}, status_code=status)


def create_app(manager: JobManager | None = None) -> FastAPI:
    app = FastAPI(title="lift3d")
    app.state.manager = manager or JobManager()

    @app.post("/v1/jobs")
    async def post_job(request: Request):
        try:
            body = await request.json()
        except Exception:  # noqa: BLE001
            return _error(400, "request body is not valid JSON")
        if not isinstance(body, dict):
            return _error(400, "job config must be a JSON object")
        try:
            job_id = app.state.manager.submit(body)
        except (PipelineError, WireError, ValueError, TypeError, KeyError) as e:
            return _error(400, f"invalid job config: {e}")
        return JSONResponse({"id": job_id}, status_code=201)

    @app.get("/v1/jobs/{job_id}")
    async def get_job(job_id: str):
        status = app.state.manager.status(job_id)
        if status is None:
            return _error(404, f"unknown job {job_id!r}")
        return JSONResponse(status)

    @app.get("/v1/jobs/{job_id}/render")
    async def get_render(job_id: str, azimuth: float = 0.0, elevation: float = 0.0):
        img = app.state.manager.render_snapshot(job_id, azimuth, elevation)
        if img is None:
            return _error(404, f"unknown job {job_id!r}")
        if img is False:
            return _error(409, "job has not produced a field yet")
        arr = np.clip(np.rint(img.pixels * 255.0), 0, 255).astype(np.uint8)
        buf = io.BytesIO()
        PILImage.fromarray(arr, mode="RGB").save(buf, format="PNG")
        return Response(buf.getvalue(), media_type="image/png")

    @app.post("/v1/segment")
    async def post_segment(request: Request):
        try:
            body = await request.json()
        except Exception:  # noqa: BLE001
            return _error(400, "request body is not valid JSON")
        from .remote import prompt_from_json
        try:
            image = decode_png(body["image_png_b64"])
            prompt = prompt_from_json(body["prompt"])
            tau = float(body.get("tau", 0.25))
        except (WireError, KeyError, TypeError, ValueError) as e:
            return _error(400, f"malformed segment request: {e}")
        try:
            mask = segment_region_grow(image, prompt, tau)
            bbox = mask_to_bbox(mask)
        except ValueError as e:
            return _error(422, f"segmentation failed: {e}")
        return JSONResponse({
            "mask_png_b64": encode_mask_png(mask),
            "bbox": [bbox.x0, bbox.y0, bbox.x1, bbox.y1],
        })

    return app


def serve(addr: str = "127.0.0.1:8000", workdir: str | None = None):
    import uvicorn
    host, _, port = addr.rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"address must be host:port, got {addr!r}")
    app = create_app(JobManager(workdir))
    uvicorn.run(app, host=host, port=int(port), log_level="warning")
