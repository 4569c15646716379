"""Grasp execution physics proxy and object placement.

Success is a geometric/threshold model reproducing the three observed
failure modes of a real two-finger pickup: slipping off a sphere,
dropping a heavy object grasped off-center, and failing to span an
object wider than the gripper.  Grasp poses are expressed in the
arm-base frame (the frame IK solves in).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import shapes
from .arm import JointLimitViolation, OrientationInfeasible, Unreachable, ik
from .geometry import Pose3, compose, inverse, rot_y, rot_z, transform_point
from .scene import RobotState, SceneObject, WorldScene
from .worldsim import arm_base_pose, ee_pose_world, perturb_object

EPSILON_P = 0.01  # max distance from a valid antipodal midpoint (meters)
HEAVY_MASS = 0.15  # kg; above this, off-center grasps drop
OFF_CENTER_LIMIT = 0.40  # fraction of half-extent
NUDGE_IMPULSE = 0.01  # kg*m/s imparted when a grasp slips off


class GripperOccupied(RuntimeError):
    pass


class InfeasiblePose(RuntimeError):
    pass


class NothingHeld(RuntimeError):
    pass


@dataclass(frozen=True)
class GraspOutcome:
    status: str  # "success" | "fail-slip" | "fail-drop"
    object_id: str | None
    detail: str

    @property
    def succeeded(self) -> bool:
        return self.status == "success"


def _closest_object(scene: WorldScene, point_world: np.ndarray, closing_world: np.ndarray):
    """Object whose antipodal-midpoint set lies nearest the closing line,
    plus that distance and the line's contact-center point (local frame)."""
    best, best_dist, best_contact = None, math.inf, None
    for obj in scene.objects:
        if not obj.movable:
            continue
        local = obj.pose.rotation.T @ (point_world - obj.pose.translation)
        axis_local = obj.pose.rotation.T @ closing_world
        dist, contact = shapes.grasp_axis_offset(obj.shape, local, axis_local)
        if dist < best_dist:
            best, best_dist, best_contact = obj, dist, contact
    return best, best_dist, best_contact


def execute_grasp(
    scene: WorldScene,
    robot: RobotState,
    grasp_pose_base: Pose3,
    width: float,
    epsilon_p: float = EPSILON_P,
) -> tuple[GraspOutcome, RobotState]:
    """Close the gripper at a pose and resolve the outcome.

    Success requires, at closure: the end-effector within ``epsilon_p``
    of a valid antipodal-axis midpoint on some object, the object
    narrow enough along the closing axis, light enough for the payload
    limit, and passing the slip/off-center checks.  A slipping sphere
    is nudged away (see perturb_object) before reporting fail-slip.

    Returns (outcome, updated robot state).

    Raises:
        GripperOccupied: something is already held.
        InfeasiblePose: the grasp pose has no IK solution.
    """
    if robot.held_object is not None:
        raise GripperOccupied(f"already holding {robot.held_object}")
    try:
        joints = ik(scene.arm, grasp_pose_base)
    except (Unreachable, OrientationInfeasible, JointLimitViolation) as exc:
        raise InfeasiblePose(str(exc)) from exc

    robot = replace(robot, arm_joints=joints)
    base = arm_base_pose(scene, robot)
    ee_world = compose(base, grasp_pose_base)
    ee_pos = ee_world.translation
    closing_world = ee_world.rotation[:, 1]

    obj, axis_offset, contact_local = _closest_object(scene, ee_pos, closing_world)
    if obj is None or axis_offset > epsilon_p:
        return (
            GraspOutcome("fail-drop", obj.id if obj else None, "closed off the grasp axis"),
            robot,
        )
    closing_local = obj.pose.rotation.T @ closing_world
    span = shapes.support_width(obj.shape, closing_local)
    if span > scene.arm.gripper_max_opening:
        return GraspOutcome("fail-drop", obj.id, "object wider than gripper opening"), robot
    if obj.mass > scene.arm.payload_limit:
        return GraspOutcome("fail-drop", obj.id, "object exceeds payload limit"), robot

    if isinstance(obj.shape, shapes.Sphere):
        # slip is governed by how far the closing line misses the center
        slip_margin = (1.0 - obj.slip_coefficient) * obj.shape.radius
        if axis_offset >= slip_margin:
            direction = obj.pose.rotation @ contact_local
            direction[2] = 0.0
            if np.linalg.norm(direction) < 1e-12:
                direction = np.cross(closing_world, (0.0, 0.0, 1.0))
            perturb_object(scene, obj.id, NUDGE_IMPULSE * direction / max(np.linalg.norm(direction), 1e-12))
            return GraspOutcome("fail-slip", obj.id, "slipped off the sphere"), robot
    elif obj.mass > HEAVY_MASS:
        fraction = shapes.off_center_fraction(obj.shape, contact_local)
        if fraction > OFF_CENTER_LIMIT:
            return GraspOutcome("fail-drop", obj.id, "heavy object grasped off-center"), robot

    held_offset = compose(inverse(ee_world), obj.pose)
    robot = replace(
        robot,
        held_object=obj.id,
        held_offset=held_offset,
        gripper_opening=min(width, scene.arm.gripper_max_opening),
    )
    return GraspOutcome("success", obj.id, "grasped"), robot


def _release_pose(scene: WorldScene, robot: RobotState, target_world, rest_height: float) -> Pose3:
    """An IK-feasible end-effector pose holding the object at the target."""
    base = arm_base_pose(scene, robot)
    target_arm = transform_point(inverse(base), (target_world[0], target_world[1], rest_height))
    yaw = math.atan2(target_arm[1], target_arm[0])
    last_error = None
    for pitch_deg in (50.0, 35.0, 65.0, 20.0, 80.0):
        pose = Pose3(rot_z(yaw) @ rot_y(math.radians(pitch_deg)), target_arm)
        try:
            ik(scene.arm, pose)
            return pose
        except (Unreachable, OrientationInfeasible, JointLimitViolation) as exc:
            last_error = exc
    raise Unreachable(f"place target out of reach: {last_error}")


def place(scene: WorldScene, robot: RobotState, target) -> RobotState:
    """Release the held object at the target, snapped to the floor.

    Raises:
        NothingHeld: the gripper is empty.
        Unreachable: no feasible release pose for the arm.
    """
    if robot.held_object is None:
        raise NothingHeld("place called with an empty gripper")
    obj = scene.object_by_id(robot.held_object)
    rest = _resting_height_at(obj)
    release = _release_pose(scene, robot, target, rest)
    joints = ik(scene.arm, release)
    scene.replace_object(obj.moved_to((float(target[0]), float(target[1]), rest)))
    return replace(
        robot,
        arm_joints=joints,
        held_object=None,
        held_offset=None,
        gripper_opening=scene.arm.gripper_max_opening,
    )


def _resting_height_at(obj: SceneObject) -> float:
    return obj.resting_height()


def grasp_pose_at(scene: WorldScene, robot: RobotState, point_world) -> Pose3:
    """IK-feasible manifold grasp pose centered on a world point (test/eval
    convenience); prefers a steep downward approach."""
    base = arm_base_pose(scene, robot)
    point_arm = transform_point(inverse(base), np.asarray(point_world, dtype=np.float64))
    yaw = math.atan2(point_arm[1], point_arm[0])
    last_error = None
    for pitch_deg in (50.0, 60.0, 70.0, 40.0, 30.0, 80.0, 20.0, 90.0):
        pose = Pose3(rot_z(yaw) @ rot_y(math.radians(pitch_deg)), point_arm)
        try:
            ik(scene.arm, pose)
            return pose
        except (Unreachable, OrientationInfeasible, JointLimitViolation) as exc:
            last_error = exc
    raise Unreachable(f"no feasible grasp pitch: {last_error}")


def grasp_pose_for_object(scene: WorldScene, robot: RobotState, obj: SceneObject) -> Pose3:
    return grasp_pose_at(scene, robot, obj.pose.translation)
