from pathlib import Path

import numpy as np
import pytest

from quadpick.geometry import CameraIntrinsics, Pose3
from quadpick.nav import NavConfig
from quadpick.scene import (
    BodyConfig,
    CameraMount,
    NoiseConfig,
    OccupancyGrid,
    Room,
    SceneObject,
    WorldScene,
    front_mount_pose,
)
from quadpick.scenario import load_scenario_file
from quadpick.shapes import Box, Sphere

REPO_ROOT = Path(__file__).resolve().parent.parent
REFERENCE_SCENARIO = REPO_ROOT / "scenarios" / "lab_floor9.json"

SMALL_K = CameraIntrinsics(fx=60.0, fy=60.0, cx=31.5, cy=23.5, width=64, height=48)


def open_grid(n: int = 12, resolution: float = 0.25) -> OccupancyGrid:
    rows = ["#" * n] + ["#" + "." * (n - 2) + "#"] * (n - 2) + ["#" * n]
    return OccupancyGrid.from_rows(rows, resolution)


def tiny_scene(
    objects=None,
    *,
    front_height: float = 0.5,
    front_pitch_deg: float = 0.0,
    depth_sigma: float = 0.0,
    detect_jitter_px: float = 0.0,
    grid: OccupancyGrid | None = None,
    intrinsics: CameraIntrinsics = SMALL_K,
) -> WorldScene:
    """Minimal scene for unit tests: open room, level front camera by default."""
    grid = grid or open_grid()
    return WorldScene(
        name="tiny",
        rooms=[Room("Room A", (1.0, 1.0), (1.5, 1.5))],
        objects=list(objects or []),
        grid=grid,
        home_pose=(0.5, 0.5, 0.0),
        place_target=(0.75, 0.5, 0.02),
        front_camera=CameraMount(
            intrinsics=intrinsics,
            pose=front_mount_pose(height=front_height, pitch_deg=front_pitch_deg),
            max_range=6.0,
        ),
        gripper_camera=CameraMount(intrinsics=intrinsics, pose=Pose3.identity(), max_range=2.0),
        body=BodyConfig(),
        noise=NoiseConfig(depth_sigma=depth_sigma, detect_jitter_px=detect_jitter_px),
        nav=NavConfig(),
        seed=0,
    )


def sphere_object(object_id="ball", center=(1.5, 0.5, 0.5), radius=0.2, mass=0.05, slip=0.8):
    return SceneObject(
        id=object_id,
        class_name="ball",
        shape=Sphere(radius=radius),
        pose=Pose3(np.eye(3), center),
        mass=mass,
        slip_coefficient=slip,
    )


def box_object(object_id="crate", center=(1.0, 0.0, 0.5), size=(0.3, 0.3, 0.3), mass=0.2, slip=0.1):
    return SceneObject(
        id=object_id,
        class_name="crate",
        shape=Box(size=size),
        pose=Pose3(np.eye(3), center),
        mass=mass,
        slip_coefficient=slip,
    )


@pytest.fixture
def reference_scene():
    return load_scenario_file(REFERENCE_SCENARIO)


@pytest.fixture
def reference_text():
    return REFERENCE_SCENARIO.read_text(encoding="utf-8")
