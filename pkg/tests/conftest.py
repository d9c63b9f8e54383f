import numpy as np
import pytest

from slamkit.datasets.synthetic import SdfScene, generate_synthetic
from slamkit.geometry import CameraModel

SMALL_CAMERA = CameraModel(fx=60.0, fy=60.0, cx=63.5, cy=47.5, width=128, height=96,
                           depth_scale=6553.5)


def small_scene() -> SdfScene:
    return SdfScene.build(
        room_half_extents=(2.0, 2.0, 1.1),
        spheres=[((0.45, 0.0, -0.35), 0.5, (0.85, 0.25, 0.2))],
        boxes=[((-0.8, 0.7, -0.6), (0.35, 0.3, 0.5), (0.2, 0.5, 0.9))],
    )


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    """20-frame 128x96 orbit of the small test scene, 4 cm ground-truth mesh."""
    out = tmp_path_factory.mktemp("synthetic") / "seq"
    spec = dict(type="orbit", radius=1.35, height=0.15, total_angle=2 * np.pi,
                target=(0.0, 0.0, 0.0))
    return generate_synthetic(small_scene(), spec, SMALL_CAMERA, 20, out, seed=3,
                              gt_mesh_voxel=0.04)


@pytest.fixture(scope="session")
def slow_dataset(tmp_path_factory):
    """30-frame slow orbit (sub-cm, sub-degree steps) for tracking tests."""
    out = tmp_path_factory.mktemp("synthetic_slow") / "seq"
    spec = dict(type="orbit", radius=1.35, height=0.15,
                total_angle=float(np.deg2rad(12.0)), target=(0.0, 0.0, 0.0))
    return generate_synthetic(small_scene(), spec, SMALL_CAMERA, 30, out, seed=3,
                              gt_mesh_voxel=0.05)


def run_config_text(dataset_root, output_dir, algorithm="gt_tsdf", extra=""):
    return f"""
output_dir = "{output_dir}"
[dataset]
kind = "synthetic"
root = "{dataset_root}"
[algorithm]
name = "{algorithm}"
{extra}
"""
