"""Deterministic world simulation: sensor rendering and kinematic stepping.

Rendering is analytic ray-primitive intersection: each pixel's ray is
cast against every scene object and the nearest hit wins.  The "RGB"
channel is a label image (per-pixel object index plus a name table);
depth is the camera-frame z of the hit, 0.0 where nothing was hit
within range.  Optional zero-mean Gaussian depth noise is applied after
the analytic render.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import shapes
from .arm import JointState, fk
from .geometry import Pose3, compose, inverse, transform_point
from .scene import (
    Posture,
    RobotCommand,
    RobotState,
    SceneObject,
    UnknownObject,
    WorldScene,
)

BACKGROUND = 0
MIN_VISIBLE_PIXELS = 20
PERTURB_GAIN = 0.05  # meters of travel per unit impulse/mass
SLIDE_SLIP_THRESHOLD = 0.5  # boxes/cylinders below this stay put when nudged
GRIPPER_SPEED = 0.2  # m/s opening rate


class ObjectNotVisibleAfterSit(RuntimeError):
    """Sitting left the target outside the gripper camera's view."""


@dataclass(frozen=True)
class SensorFrame:
    camera: str  # "front" | "gripper"
    labels: np.ndarray  # int16 [h, w], 0 = background
    label_names: tuple[str, ...]  # index -> object id, [0] = ""
    class_names: tuple[str, ...]  # index -> object class, [0] = ""
    depth: np.ndarray  # float64 meters, 0 = invalid
    intrinsics: "object"
    camera_pose_world: Pose3
    tick: int
    extent_counts: dict[str, int]  # occlusion-free pixel counts per object

    def label_index(self, object_id: str) -> int:
        return self.label_names.index(object_id)

    def visible_count(self, object_id: str) -> int:
        return int(np.count_nonzero(self.labels == self.label_index(object_id)))


def base_pose(robot: RobotState) -> Pose3:
    return robot.base_pose()


def arm_base_pose(scene: WorldScene, robot: RobotState) -> Pose3:
    height = (
        scene.body.standing_height
        if robot.posture == Posture.STANDING
        else scene.body.sitting_height
    )
    mount = Pose3(np.eye(3), (scene.body.arm_mount_forward, 0.0, height))
    return compose(robot.base_pose(), mount)


def ee_pose_world(scene: WorldScene, robot: RobotState) -> Pose3:
    return compose(arm_base_pose(scene, robot), fk(scene.arm, robot.arm_joints))


def ee_pose_base(scene: WorldScene, robot: RobotState) -> Pose3:
    return compose(inverse(robot.base_pose()), ee_pose_world(scene, robot))


def camera_pose_world(scene: WorldScene, robot: RobotState, camera: str) -> Pose3:
    if camera == "front":
        return compose(robot.base_pose(), scene.front_camera.pose)
    if camera == "gripper":
        return compose(ee_pose_world(scene, robot), scene.arm.camera_offset)
    raise ValueError(f"unknown camera: {camera}")


def gripper_camera_in_arm_base(scene: WorldScene, robot: RobotState) -> Pose3:
    """Gripper camera extrinsics in the arm-base frame: FK ∘ camera offset.

    This is the frame the grasp pipeline and IK work in.
    """
    return compose(fk(scene.arm, robot.arm_joints), scene.arm.camera_offset)


def render(
    scene: WorldScene,
    robot: RobotState,
    camera: str,
    tick: int = 0,
    rng: np.random.Generator | None = None,
) -> SensorFrame:
    """Render one frame; deterministic given (scene, robot, rng state)."""
    mount = scene.front_camera if camera == "front" else scene.gripper_camera
    k = mount.intrinsics
    cam_pose = camera_pose_world(scene, robot, camera)

    us, vs = np.meshgrid(np.arange(k.width), np.arange(k.height))
    dirs_cam = np.stack(
        [
            (us.ravel() - k.cx) / k.fx,
            (vs.ravel() - k.cy) / k.fy,
            np.ones(k.width * k.height),
        ],
        axis=1,
    )
    dirs_world = dirs_cam @ cam_pose.rotation.T

    nearest = np.full(len(dirs_cam), np.inf)
    hit_index = np.zeros(len(dirs_cam), dtype=np.int16)
    extent_counts: dict[str, int] = {}
    for idx, obj in enumerate(scene.objects, start=1):
        origin_local = obj.pose.rotation.T @ (cam_pose.translation - obj.pose.translation)
        dirs_local = dirs_world @ obj.pose.rotation
        t = shapes.ray_hits(obj.shape, origin_local, dirs_local)
        in_range = t <= mount.max_range
        extent_counts[obj.id] = int(np.count_nonzero(in_range))
        closer = in_range & (t < nearest)
        nearest[closer] = t[closer]
        hit_index[closer] = idx

    depth = np.where(np.isfinite(nearest), nearest, 0.0)
    if rng is not None and scene.noise.depth_sigma > 0.0:
        valid = depth > 0.0
        noisy = depth + rng.normal(0.0, scene.noise.depth_sigma, size=depth.shape)
        depth = np.where(valid, np.maximum(noisy, 1e-4), 0.0)
    names = ("",) + tuple(obj.id for obj in scene.objects)
    classes = ("",) + tuple(obj.class_name for obj in scene.objects)
    return SensorFrame(
        camera=camera,
        labels=hit_index.reshape(k.height, k.width),
        label_names=names,
        class_names=classes,
        depth=depth.reshape(k.height, k.width),
        intrinsics=k,
        camera_pose_world=cam_pose,
        tick=tick,
        extent_counts=extent_counts,
    )


def step(scene: WorldScene, robot: RobotState, command: RobotCommand, dt: float) -> RobotState:
    """Advance the robot one step: unicycle base, rate-limited arm, gripper.

    Commands saturate at the configured limits; base motion into an
    occupied (or off-grid) cell is clipped, heading still updates.
    Base motion is only available while standing.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    nav = scene.nav
    v_max = nav.v_max if nav is not None else 0.5
    omega_max = nav.omega_max if nav is not None else 1.2

    x, y, heading = robot.base
    v = max(-v_max, min(v_max, command.v))
    omega = max(-omega_max, min(omega_max, command.omega))
    posture = command.posture or robot.posture
    if posture == Posture.SITTING:
        v = 0.0
        omega = 0.0
    new_heading = math.remainder(heading + omega * dt, math.tau)
    nx = x + v * math.cos(heading) * dt
    ny = y + v * math.sin(heading) * dt
    if not scene.grid.position_free((nx, ny)):
        nx, ny = x, y

    joints = robot.arm_joints
    if command.arm_target is not None:
        limit = scene.arm.max_joint_speed * dt
        q = joints.as_array()
        delta = np.clip(command.arm_target.as_array() - q, -limit, limit)
        q = q + delta
        lows = np.array([lo for lo, _ in scene.arm.joint_limits])
        highs = np.array([hi for _, hi in scene.arm.joint_limits])
        joints = JointState.from_array(np.clip(q, lows, highs))

    opening = robot.gripper_opening
    if command.gripper_target is not None:
        target = max(0.0, min(scene.arm.gripper_max_opening, command.gripper_target))
        step_limit = GRIPPER_SPEED * dt
        opening += max(-step_limit, min(step_limit, target - opening))

    return replace(
        robot,
        base=(nx, ny, new_heading),
        posture=posture,
        arm_joints=joints,
        gripper_opening=opening,
    )


def update_held_object(scene: WorldScene, robot: RobotState):
    """Keep a held object glued to the end-effector."""
    if robot.held_object is None:
        return
    obj = scene.object_by_id(robot.held_object)
    pose = compose(ee_pose_world(scene, robot), robot.held_offset)
    scene.replace_object(replace(obj, pose=pose))


def perturb_object(scene: WorldScene, object_id: str, contact_impulse) -> WorldScene:
    """Nudge an object: spheres roll away, low-slip boxes/cylinders stay put.

    Displacement is ``PERTURB_GAIN * |impulse| / mass`` along the
    impulse direction, confined to the ground plane.
    """
    obj = scene.object_by_id(object_id)
    if not obj.movable:
        raise UnknownObject(f"object {object_id} is not movable")
    impulse = np.asarray(contact_impulse, dtype=np.float64)
    magnitude = float(np.linalg.norm(impulse))
    if magnitude == 0.0:
        return scene
    slides = isinstance(obj.shape, shapes.Sphere) or obj.slip_coefficient >= SLIDE_SLIP_THRESHOLD
    if not slides:
        return scene
    direction = impulse / magnitude
    direction[2] = 0.0
    norm = np.linalg.norm(direction)
    if norm < 1e-12:
        return scene
    direction /= norm
    distance = PERTURB_GAIN * magnitude / obj.mass
    new_pos = obj.pose.translation + distance * direction
    new_pos = (new_pos[0], new_pos[1], obj.resting_height())
    scene.replace_object(obj.moved_to(new_pos))
    return scene


def settle_and_sit(scene: WorldScene, robot: RobotState, target_object_id: str) -> RobotState:
    """Drop to the seated posture and confirm the target will be in view.

    Visibility is checked at the survey arm pose (where grasp selection
    happens); fewer than MIN_VISIBLE_PIXELS of the target raises
    ObjectNotVisibleAfterSit so the mission can retry the approach.
    """
    seated = replace(robot, posture=Posture.SITTING)
    preview = replace(seated, arm_joints=scene.arm.survey_joints)
    frame = render(scene, preview, "gripper")
    if frame.visible_count(target_object_id) < MIN_VISIBLE_PIXELS:
        raise ObjectNotVisibleAfterSit(
            f"{target_object_id} not visible from gripper camera after sitting"
        )
    return seated


def object_position_in_base(robot: RobotState, obj: SceneObject) -> tuple[float, float]:
    """Ground-plane object position in the metrics frame: x forward, y to
    the robot's right (positive y = right, as offsets are reported)."""
    rel = transform_point(inverse(robot.base_pose()), obj.pose.translation)
    return float(rel[0]), float(-rel[1])
