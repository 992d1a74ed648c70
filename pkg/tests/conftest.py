import numpy as np
import pytest

from lift3d.field import VoxelRadianceField
from lift3d.fixtures import ground_truth_field


@pytest.fixture(scope="session")
def gt_field() -> VoxelRadianceField:
    return ground_truth_field()


@pytest.fixture(scope="session")
def pipeline_fixture_dir(tmp_path_factory, gt_field):
    """Directory with the bundled synthetic object exported as a grid plus an
    input photo of it rendered from the front pose."""
    from lift3d.field import RenderSettings, export_grid, render
    from lift3d.geometry import make_pose
    from lift3d.imaging import save_image

    d = tmp_path_factory.mktemp("pipeline-fixture")
    export_grid(gt_field, d / "gt.vxrf")
    pose = make_pose(0.0, 0.0, 2.3, np.deg2rad(60.0))
    img, _ = render(gt_field, pose, 96, 96, RenderSettings(128))
    save_image(img, d / "input.png")
    return d


@pytest.fixture(scope="session")
def small_random_field() -> VoxelRadianceField:
    rng = np.random.default_rng(11)
    density = rng.normal(0.5, 1.0, (8, 8, 8))
    color = rng.normal(0.0, 1.0, (8, 8, 8, 3))
    return VoxelRadianceField(density, color)
