"""End-to-end pipeline: export bundle contents, config round trips, failure
modes without partial exports, and bitwise determinism of the grid export."""

import dataclasses
import os

import numpy as np
import pytest

from lift3d.engine import SDSConfig
from lift3d.field import import_grid, softplus
from lift3d.fixtures import ground_truth_field
from lift3d.imaging import PromptAnnotation, load_image, load_mask
from lift3d.pipeline import (PipelineConfig, PipelineError, cloud_from_field,
                             config_from_flat, config_to_flat, read_flat_toml,
                             run_pipeline, sphere_shell_cloud, write_flat_toml)


def make_config(fixture_dir, out_dir, iterations=15, seed=0):
    return PipelineConfig(
        image=str(fixture_dir / "input.png"),
        prompt=PromptAnnotation("point", point=(48, 48)),
        out_dir=str(out_dir),
        oracle_grid=str(fixture_dir / "gt.vxrf"),
        seed=seed,
        sds=SDSConfig(iterations=iterations, seed=seed),
    )


class TestFlatConfig:
    def test_roundtrip_through_dict(self, pipeline_fixture_dir, tmp_path):
        cfg = make_config(pipeline_fixture_dir, tmp_path / "out")
        flat = config_to_flat(cfg)
        assert config_to_flat(config_from_flat(flat)) == flat

    def test_roundtrip_through_toml_file(self, pipeline_fixture_dir, tmp_path):
        cfg = make_config(pipeline_fixture_dir, tmp_path / "out")
        p = tmp_path / "cfg.toml"
        write_flat_toml(config_to_flat(cfg), p)
        assert read_flat_toml(p) == config_to_flat(cfg)

    def test_box_prompt_roundtrip(self):
        flat = {"image": "x.png", "out_dir": "o", "prompt_kind": "box",
                "box_x0": 1, "box_y0": 2, "box_x1": 8, "box_y1": 9,
                "backend": "analytic", "oracle_grid": "g.vxrf"}
        cfg = config_from_flat(flat)
        assert cfg.prompt.box == (1, 2, 8, 9)

    def test_unknown_keys_rejected(self):
        with pytest.raises(PipelineError, match="unknown config keys"):
            config_from_flat({"image": "x", "out_dir": "o", "prompt_kind": "point",
                              "point_x": 1, "point_y": 1, "warp_speed": 9})

    def test_remote_backend_requires_url(self):
        with pytest.raises(PipelineError):
            PipelineConfig(image="x", prompt=PromptAnnotation("point", point=(0, 0)),
                           out_dir="o", backend="remote")


class TestClouds:
    def test_cloud_from_field_samples_occupied_voxels(self):
        gt = ground_truth_field((24, 24, 24))
        cloud = cloud_from_field(gt, n_points=500, seed=1)
        assert len(cloud.points) == 500
        # every sampled point sits where the grid density clears the threshold
        n = 24
        for p in cloud.points[:50]:
            idx = tuple(np.rint((p + 1) / 2 * (n - 1)).astype(int))
            assert softplus(float(gt.density[idx])) > 1.0

    def test_cloud_from_field_deterministic(self):
        gt = ground_truth_field((24, 24, 24))
        a = cloud_from_field(gt, n_points=200, seed=3)
        b = cloud_from_field(gt, n_points=200, seed=3)
        np.testing.assert_array_equal(a.points, b.points)

    def test_sphere_shell_on_unit_shell(self):
        cloud = sphere_shell_cloud(n_points=100, radius=0.9, seed=0)
        np.testing.assert_allclose(np.linalg.norm(cloud.points, axis=1), 0.9)


class TestRunPipeline:
    def test_bundle_contents(self, pipeline_fixture_dir, tmp_path):
        cfg = make_config(pipeline_fixture_dir, tmp_path / "out")
        res = run_pipeline(cfg)
        out = tmp_path / "out"
        for name in ("mask.png", "crop.png", "field.vxrf", "trace.jsonl",
                     "config.toml"):
            assert (out / name).exists(), name
        views = sorted(p.name for p in out.glob("view_*.png"))
        assert len(views) == 5
        assert len(res["trace"].records) == cfg.sds.iterations
        # mask covers the object, crop is the configured square size
        mask = load_mask(out / "mask.png")
        assert mask.bits.sum() > 100
        crop = load_image(out / "crop.png")
        assert crop.pixels.shape == (cfg.sds.render_size, cfg.sds.render_size, 3)
        # the bundle is self-describing: the stored config parses back
        stored = config_from_flat(read_flat_toml(out / "config.toml"))
        assert stored.seed == cfg.seed
        assert stored.sds.iterations == cfg.sds.iterations

    def test_missing_image_fails_without_partial_exports(self, pipeline_fixture_dir,
                                                         tmp_path):
        cfg = make_config(pipeline_fixture_dir, tmp_path / "out")
        cfg = dataclasses.replace(cfg, image=str(tmp_path / "absent.png"))
        with pytest.raises(PipelineError, match="config"):
            run_pipeline(cfg)
        assert not (tmp_path / "out").exists()

    def test_missing_oracle_grid_fails_early(self, pipeline_fixture_dir, tmp_path):
        cfg = make_config(pipeline_fixture_dir, tmp_path / "out")
        cfg = dataclasses.replace(cfg, oracle_grid=str(tmp_path / "absent.vxrf"))
        with pytest.raises(PipelineError, match="config"):
            run_pipeline(cfg)
        assert not (tmp_path / "out").exists()

    def test_grid_export_bitwise_deterministic(self, pipeline_fixture_dir, tmp_path):
        blobs = []
        for run in range(2):
            out = tmp_path / f"out{run}"
            run_pipeline(make_config(pipeline_fixture_dir, out, iterations=10, seed=4))
            blobs.append((out / "field.vxrf").read_bytes())
        assert blobs[0] == blobs[1]

    def test_different_seeds_differ(self, pipeline_fixture_dir, tmp_path):
        blobs = []
        for seed in (0, 1):
            out = tmp_path / f"s{seed}"
            run_pipeline(make_config(pipeline_fixture_dir, out, iterations=10, seed=seed))
            blobs.append((out / "field.vxrf").read_bytes())
        assert blobs[0] != blobs[1]


class FakeBridge:
    """Stand-in for BridgeClient exercising the remote code path without HTTP."""

    calls: list

    def __init__(self, base_url, **kwargs):
        self.base_url = base_url
        FakeBridge.calls.append(base_url)

    def caption(self, image):
        return "a synthetic object"

    def pointcloud(self, image):
        from lift3d.fixtures import ground_truth_cloud
        return ground_truth_cloud(256)

    def score(self, x_t, t, depth_features, embedding, eps_true=None):
        # predict zero noise; embedding gradient only when eps_true provided
        grad = np.zeros(len(embedding)) if eps_true is not None else None
        return np.zeros_like(np.asarray(x_t, dtype=np.float64)), grad

    def close(self):
        pass


class TestRemotePath:
    def test_remote_stages_invoked(self, pipeline_fixture_dir, tmp_path, monkeypatch):
        import lift3d.remote as remote
        FakeBridge.calls = []
        monkeypatch.setattr(remote, "BridgeClient", FakeBridge)
        cfg = make_config(pipeline_fixture_dir, tmp_path / "out", iterations=3)
        cfg = dataclasses.replace(cfg, backend="remote", oracle_grid="",
                                  remote_url="http://bridge.test", inversion_steps=2)
        res = run_pipeline(cfg)
        assert FakeBridge.calls == ["http://bridge.test"]
        assert res["caption"] == "a synthetic object"
        assert (tmp_path / "out" / "field.vxrf").exists()
