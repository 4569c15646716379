"""World-state domain types: rooms, objects, occupancy grid, robot state.

World frame: x/y on the ground plane, z up.  The robot base frame has
+x forward and +y to the robot's left (right-handed, z up); heading 0
points along world +x.  Operator-facing metrics flip y so "to the
robot's right" reads positive, matching how final offsets are reported.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .arm import ArmModel, JointState
from .geometry import CameraIntrinsics, Pose3, rot_y, rot_z
from .shapes import Shape, half_extents


class UnknownObject(KeyError):
    pass


class Posture(str, Enum):
    STANDING = "standing"
    SITTING = "sitting"


@dataclass(frozen=True)
class Room:
    name: str
    entry_waypoint: tuple[float, float]
    scan_center: tuple[float, float]


@dataclass(frozen=True)
class SceneObject:
    id: str
    class_name: str
    shape: Shape
    pose: Pose3
    mass: float
    slip_coefficient: float
    movable: bool = True

    def __post_init__(self):
        if self.mass <= 0:
            raise ValueError(f"object {self.id}: mass must be positive")
        if not 0.0 <= self.slip_coefficient <= 1.0:
            raise ValueError(f"object {self.id}: slip_coefficient must be in [0, 1]")

    def resting_height(self) -> float:
        """Centroid z when the object sits on the floor in its current orientation."""
        corners = half_extents(self.shape)
        # support extent along world z through the object's rotation
        return float(np.abs(self.pose.rotation.T[:, 2]) @ corners)

    def moved_to(self, position) -> "SceneObject":
        return replace(self, pose=Pose3(self.pose.rotation, position))


class OccupancyGrid:
    """Boolean grid over the ground plane; cell (ix, iy) spans
    [origin + i*resolution, origin + (i+1)*resolution)."""

    def __init__(self, occupied: np.ndarray, resolution: float, origin=(0.0, 0.0)):
        if resolution <= 0:
            raise ValueError("grid resolution must be positive")
        self.occupied = np.asarray(occupied, dtype=bool)  # [iy, ix]
        self.resolution = float(resolution)
        self.origin = (float(origin[0]), float(origin[1]))

    @classmethod
    def from_rows(cls, rows: list[str], resolution: float, origin=(0.0, 0.0)) -> "OccupancyGrid":
        """Rows are written top-down ('#' occupied, '.' free); row 0 is
        the highest-y row, as a map reads on screen."""
        if not rows:
            raise ValueError("grid rows must be non-empty")
        width = len(rows[0])
        if any(len(r) != width for r in rows):
            raise ValueError("grid rows must all have the same length")
        bad = {c for r in rows for c in r} - {".", "#"}
        if bad:
            raise ValueError(f"grid rows contain invalid characters: {sorted(bad)}")
        cells = np.array([[c == "#" for c in row] for row in reversed(rows)])
        return cls(cells, resolution, origin)

    def to_rows(self) -> list[str]:
        return [
            "".join("#" if c else "." for c in row) for row in reversed(self.occupied)
        ]

    @property
    def size(self) -> tuple[int, int]:
        return self.occupied.shape[1], self.occupied.shape[0]  # nx, ny

    def cell_of(self, xy) -> tuple[int, int]:
        ix = int(math.floor((xy[0] - self.origin[0]) / self.resolution))
        iy = int(math.floor((xy[1] - self.origin[1]) / self.resolution))
        return ix, iy

    def center_of(self, cell) -> tuple[float, float]:
        ix, iy = cell
        return (
            self.origin[0] + (ix + 0.5) * self.resolution,
            self.origin[1] + (iy + 0.5) * self.resolution,
        )

    def in_bounds(self, cell) -> bool:
        ix, iy = cell
        nx, ny = self.size
        return 0 <= ix < nx and 0 <= iy < ny

    def is_free(self, cell) -> bool:
        return self.in_bounds(cell) and not self.occupied[cell[1], cell[0]]

    def position_free(self, xy) -> bool:
        return self.is_free(self.cell_of(xy))

    def inflated(self, cells: int = 1) -> "OccupancyGrid":
        """Copy with obstacles dilated by ``cells`` (planning clearance
        for the robot footprint)."""
        grown = self.occupied.copy()
        for _ in range(cells):
            padded = np.pad(grown, 1, constant_values=False)
            grown = (
                padded[1:-1, 1:-1]
                | padded[:-2, 1:-1] | padded[2:, 1:-1]
                | padded[1:-1, :-2] | padded[1:-1, 2:]
                | padded[:-2, :-2] | padded[:-2, 2:]
                | padded[2:, :-2] | padded[2:, 2:]
            )
        return OccupancyGrid(grown, self.resolution, self.origin)


@dataclass(frozen=True)
class RobotCommand:
    """One tick's worth of actuation; unset parts hold their state."""

    v: float = 0.0
    omega: float = 0.0
    arm_target: JointState | None = None
    gripper_target: float | None = None
    posture: Posture | None = None

    def is_motion(self) -> bool:
        return (
            self.v != 0.0
            or self.omega != 0.0
            or self.arm_target is not None
            or self.gripper_target is not None
            or self.posture is not None
        )


@dataclass(frozen=True)
class RobotState:
    base: tuple[float, float, float]  # x, y, heading
    posture: Posture = Posture.STANDING
    arm_joints: JointState = JointState(0.0, 0.0, 0.0, 0.0)
    gripper_opening: float = 0.0
    held_object: str | None = None
    held_offset: Pose3 | None = None  # end-effector -> object while held

    def base_pose(self) -> Pose3:
        x, y, heading = self.base
        return Pose3(rot_z(heading), (x, y, 0.0))


@dataclass(frozen=True)
class BodyConfig:
    """Chassis geometry: arm mount location and per-posture deck heights."""

    arm_mount_forward: float = 0.08
    standing_height: float = 0.33
    sitting_height: float = 0.16


@dataclass(frozen=True)
class CameraMount:
    intrinsics: CameraIntrinsics
    pose: Pose3  # camera in base frame (front) — gripper cam uses the arm offset
    max_range: float = 5.0


def front_mount_pose(height: float = 0.25, pitch_deg: float = 15.0, forward: float = 0.0) -> Pose3:
    """Front camera pose in the base frame: +z optical axis forward, pitched down."""
    cam_axes = np.array([[0.0, 0.0, 1.0], [-1.0, 0.0, 0.0], [0.0, -1.0, 0.0]])
    return Pose3(rot_y(math.radians(pitch_deg)) @ cam_axes, (forward, 0.0, height))


@dataclass(frozen=True)
class NoiseConfig:
    depth_sigma: float = 0.003
    detect_jitter_px: float = 2.0


@dataclass
class WorldScene:
    """In-memory form of a scenario document."""

    name: str
    rooms: list[Room]
    objects: list[SceneObject]
    grid: OccupancyGrid
    home_pose: tuple[float, float, float]
    place_target: tuple[float, float, float]
    front_camera: CameraMount
    gripper_camera: CameraMount
    arm: ArmModel = field(default_factory=ArmModel)
    body: BodyConfig = field(default_factory=BodyConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    nav: "object" = None  # NavConfig; typed loosely to keep imports acyclic
    seed: int = 0

    def object_by_id(self, object_id: str) -> SceneObject:
        for obj in self.objects:
            if obj.id == object_id:
                return obj
        raise UnknownObject(object_id)

    def replace_object(self, updated: SceneObject):
        for i, obj in enumerate(self.objects):
            if obj.id == updated.id:
                self.objects[i] = updated
                return
        raise UnknownObject(updated.id)

    def room_by_name(self, name: str) -> Room:
        for room in self.rooms:
            if room.name == name:
                return room
        raise KeyError(f"unknown room: {name}")

    def initial_robot_state(self) -> RobotState:
        return RobotState(base=self.home_pose)
