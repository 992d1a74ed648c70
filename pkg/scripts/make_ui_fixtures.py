#!/usr/bin/env python3
"""Generate golden fixtures for the frontend test suite from the live service.

Writes frontend/tests/fixtures/{two_region.json,job_render.json}. The job
fixture records the PNG bytes the render endpoint returned and asserts they
are byte-identical to rendering the exported field directly, so the frontend
tests can check orbit fetches against a service-authored reference.
"""

from __future__ import annotations

import base64
import io
import json
import tempfile
import time
from pathlib import Path

import numpy as np
from fastapi.testclient import TestClient
from PIL import Image as PILImage

from lift3d.engine import SDSConfig
from lift3d.field import RenderSettings, export_grid, import_grid, render
from lift3d.fixtures import ground_truth_field, two_region_image
from lift3d.geometry import make_pose
from lift3d.imaging import PromptAnnotation, save_image
from lift3d.pipeline import PipelineConfig, config_to_flat
from lift3d.service import JobManager, create_app
from lift3d.wire import encode_png

OUT_DIR = Path(__file__).resolve().parents[1] / "frontend" / "tests" / "fixtures"


def wait_done(client, job_id, timeout=180.0):
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        st = client.get(f"/v1/jobs/{job_id}").json()
        if st["state"] in ("done", "failed"):
            return st
        time.sleep(0.2)
    raise TimeoutError("job did not finish")


def make_two_region(client) -> None:
    img = two_region_image()
    prompt = {"kind": "point", "point": [4, 4]}
    body = {"image_png_b64": encode_png(img), "prompt": prompt}
    resp = client.post("/v1/segment", json=body)
    resp.raise_for_status()
    payload = {"request": body, "response": resp.json()}
    (OUT_DIR / "two_region.json").write_text(json.dumps(payload, indent=2))
    print("wrote two_region.json")


def make_job_render(client, fixture_dir: Path, tmp: Path) -> None:
    cfg = PipelineConfig(
        image=str(fixture_dir / "input.png"),
        prompt=PromptAnnotation("point", point=(48, 48)),
        out_dir=str(tmp / "out"),
        oracle_grid=str(fixture_dir / "gt.vxrf"),
        sds=SDSConfig(iterations=25),
    )
    job_id = client.post("/v1/jobs", json=config_to_flat(cfg)).json()["id"]
    status = wait_done(client, job_id)
    assert status["state"] == "done", status

    azimuth, elevation = 45.0, 20.0
    r = client.get(f"/v1/jobs/{job_id}/render",
                   params={"azimuth": azimuth, "elevation": elevation})
    r.raise_for_status()

    # independent reference: render the exported grid through the same encoder
    grid = import_grid(tmp / "out" / "field.vxrf")
    pose = make_pose(np.deg2rad(azimuth), np.deg2rad(elevation), 2.3,
                     np.deg2rad(60.0))
    img, _ = render(grid, pose, 64, 64, RenderSettings(128))
    arr = np.clip(np.rint(img.pixels * 255.0), 0, 255).astype(np.uint8)
    buf = io.BytesIO()
    PILImage.fromarray(arr, mode="RGB").save(buf, format="PNG")
    assert buf.getvalue() == r.content, "render endpoint bytes diverge from direct render"

    payload = {
        "azimuth": azimuth,
        "elevation": elevation,
        "final_status": {k: status[k] for k in ("state", "iteration", "proxy_loss_tail")},
        "render_png_b64": base64.b64encode(r.content).decode("ascii"),
    }
    (OUT_DIR / "job_render.json").write_text(json.dumps(payload, indent=2))
    print("wrote job_render.json (byte equality with direct render verified)")


def main() -> None:
    OUT_DIR.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory() as td:
        tmp = Path(td)
        gt = ground_truth_field()
        fixture_dir = tmp / "fixture"
        fixture_dir.mkdir()
        export_grid(gt, fixture_dir / "gt.vxrf")
        pose = make_pose(0.0, 0.0, 2.3, np.deg2rad(60.0))
        img, _ = render(gt, pose, 96, 96, RenderSettings(128))
        save_image(img, fixture_dir / "input.png")

        manager = JobManager(str(tmp / "jobs"))
        app = create_app(manager)
        with TestClient(app) as client:
            make_two_region(client)
            make_job_render(client, fixture_dir, tmp)
        manager.shutdown()


if __name__ == "__main__":
    main()
