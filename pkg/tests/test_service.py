"""Job service API: lifecycle, render-on-demand equivalence, the local
segmentation stand-in, and structured error responses."""

import io
import time

import numpy as np
import pytest
from fastapi.testclient import TestClient
from PIL import Image as PILImage

from lift3d.engine import SDSConfig
from lift3d.field import RenderSettings, import_grid, render
from lift3d.fixtures import two_region_image
from lift3d.geometry import make_pose
from lift3d.imaging import PromptAnnotation
from lift3d.pipeline import PipelineConfig, config_to_flat
from lift3d.service import JobManager, create_app
from lift3d.wire import decode_mask_png, encode_png


@pytest.fixture()
def client(tmp_path):
    app = create_app(JobManager(str(tmp_path / "jobs")))
    with TestClient(app) as c:
        yield c
    app.state.manager.shutdown()


def fixture_flat(pipeline_fixture_dir, out_dir, iterations=12, seed=0):
    cfg = PipelineConfig(
        image=str(pipeline_fixture_dir / "input.png"),
        prompt=PromptAnnotation("point", point=(48, 48)),
        out_dir=str(out_dir),
        oracle_grid=str(pipeline_fixture_dir / "gt.vxrf"),
        seed=seed,
        sds=SDSConfig(iterations=iterations, seed=seed),
    )
    return config_to_flat(cfg)


def wait_done(client, job_id, timeout=120.0):
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        st = client.get(f"/v1/jobs/{job_id}").json()
        if st["state"] in ("done", "failed"):
            return st
        time.sleep(0.2)
    raise TimeoutError("job did not finish")


class TestJobLifecycle:
    def test_submit_poll_done(self, client, pipeline_fixture_dir, tmp_path):
        r = client.post("/v1/jobs", json=fixture_flat(pipeline_fixture_dir,
                                                      tmp_path / "out"))
        assert r.status_code == 201
        job_id = r.json()["id"]
        st = wait_done(client, job_id)
        assert st["state"] == "done", st
        assert st["iteration"] == 12
        assert len(st["proxy_loss_tail"]) == 12
        assert all(np.isfinite(v) for v in st["proxy_loss_tail"])

    def test_failed_job_reports_stage_and_message(self, client, pipeline_fixture_dir,
                                                  tmp_path):
        flat2 = fixture_flat(pipeline_fixture_dir, tmp_path / "out2")
        flat2["oracle_grid"] = str(tmp_path / "missing.vxrf")
        r2 = client.post("/v1/jobs", json=flat2)
        st2 = wait_done(client, r2.json()["id"])
        assert st2["state"] == "failed"
        assert "config" in st2["error"]

    def test_two_jobs_both_complete(self, client, pipeline_fixture_dir, tmp_path):
        ids = [client.post("/v1/jobs",
                           json=fixture_flat(pipeline_fixture_dir, tmp_path / f"o{k}",
                                             iterations=5)).json()["id"]
               for k in range(2)]
        for job_id in ids:
            assert wait_done(client, job_id)["state"] == "done"

    def test_unknown_job_404(self, client):
        assert client.get("/v1/jobs/deadbeef").status_code == 404
        assert client.get("/v1/jobs/deadbeef/render").status_code == 404

    def test_malformed_submissions_rejected(self, client):
        assert client.post("/v1/jobs", content=b"{oops").status_code == 400
        assert client.post("/v1/jobs", json=[1, 2]).status_code == 400
        assert client.post("/v1/jobs", json={"bogus_key": 1}).status_code == 400


class TestRenderEndpoint:
    def test_done_job_render_matches_direct_render(self, client, pipeline_fixture_dir,
                                                   tmp_path):
        flat = fixture_flat(pipeline_fixture_dir, tmp_path / "out")
        job_id = client.post("/v1/jobs", json=flat).json()["id"]
        assert wait_done(client, job_id)["state"] == "done"
        r = client.get(f"/v1/jobs/{job_id}/render",
                       params={"azimuth": 0.0, "elevation": 0.0})
        assert r.status_code == 200
        assert r.headers["content-type"] == "image/png"
        got = np.asarray(PILImage.open(io.BytesIO(r.content)))
        grid = import_grid(tmp_path / "out" / "field.vxrf")
        pose = make_pose(0.0, 0.0, 2.3, np.deg2rad(60.0))
        img, _ = render(grid, pose, 64, 64, RenderSettings(128))
        expect = np.clip(np.rint(img.pixels * 255), 0, 255).astype(np.uint8)
        np.testing.assert_array_equal(got, expect)

    def test_queued_job_render_is_conflict(self, tmp_path):
        # a manager whose worker never runs the job: submit then render at once
        manager = JobManager(str(tmp_path / "jobs"))
        manager._queue = __import__("queue").Queue()  # detach the live worker
        app = create_app(manager)
        with TestClient(app) as c:
            flat = {"image": "unused.png", "out_dir": str(tmp_path / "o"),
                    "prompt_kind": "point", "point_x": 1, "point_y": 1,
                    "backend": "remote", "remote_url": "http://x"}
            job_id = c.post("/v1/jobs", json=flat).json()["id"]
            r = c.get(f"/v1/jobs/{job_id}/render")
            assert r.status_code == 409


class TestSegmentEndpoint:
    def test_two_region_fixture(self, client):
        img = two_region_image()
        r = client.post("/v1/segment", json={
            "image_png_b64": encode_png(img),
            "prompt": {"kind": "point", "point": [4, 4]},
        })
        assert r.status_code == 200
        body = r.json()
        mask = decode_mask_png(body["mask_png_b64"])
        expect = np.zeros((32, 32), dtype=bool)
        expect[:, :16] = True
        np.testing.assert_array_equal(mask.bits, expect)
        assert body["bbox"] == [0, 0, 15, 31]

    def test_idempotent_across_requests(self, client):
        img = two_region_image()
        body = {"image_png_b64": encode_png(img),
                "prompt": {"kind": "point", "point": [20, 9]}}
        a = client.post("/v1/segment", json=body).json()
        b = client.post("/v1/segment", json=body).json()
        assert a == b

    def test_malformed_requests_rejected(self, client):
        assert client.post("/v1/segment", json={"prompt": {}}).status_code == 400
        assert client.post("/v1/segment", json={
            "image_png_b64": "@@@", "prompt": {"kind": "point", "point": [0, 0]},
        }).status_code == 400
        assert client.post("/v1/segment", content=b"junk").status_code == 400
