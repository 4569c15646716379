"""Grasp-execution proxy tests: the three observed failure modes plus
placement and the tolerance-monotonicity property."""

import dataclasses
import math

import numpy as np
import pytest

from conftest import tiny_scene

from quadpick.geometry import Pose3, rot_x
from quadpick.manipulation import (
    GraspOutcome,
    grasp_pose_at,
    GripperOccupied,
    InfeasiblePose,
    NothingHeld,
    execute_grasp,
    grasp_pose_for_object,
    place,
)
from quadpick.arm import Unreachable
from quadpick.scene import Posture, RobotState, SceneObject
from quadpick.shapes import Box, Cylinder, Sphere


def seated_robot(x=0.5, y=0.5, heading=0.0) -> RobotState:
    return RobotState(base=(x, y, heading), posture=Posture.SITTING)


def make_object(kind: str, base_offset=(0.25, -0.10)) -> SceneObject:
    """Object placed at a base-frame offset in front of a robot at (0.5, 0.5, 0)."""
    world_xy = (0.5 + base_offset[0], 0.5 + base_offset[1])
    if kind == "charger":
        shape = Box(size=(0.09, 0.04, 0.03))
        # long axis pointed at the robot so the fingers close across the width
        yaw = math.atan2(base_offset[1], base_offset[0])
        c, s = math.cos(yaw), math.sin(yaw)
        pose = Pose3([[c, -s, 0], [s, c, 0], [0, 0, 1]], (*world_xy, 0.015))
        return SceneObject("charger-1", "charger", shape, pose, mass=0.08, slip_coefficient=0.1)
    if kind == "golf_ball":
        shape = Sphere(radius=0.021)
        pose = Pose3(np.eye(3), (*world_xy, 0.021))
        return SceneObject("golf-ball-1", "golf_ball", shape, pose, mass=0.046, slip_coefficient=0.8)
    if kind == "battery":
        shape = Cylinder(radius=0.016, height=0.07)
        pose = Pose3(np.eye(3), (*world_xy, 0.035))  # standing upright
        return SceneObject("battery-1", "battery", shape, pose, mass=0.25, slip_coefficient=0.3)
    raise ValueError(kind)


def scene_with(kind: str):
    obj = make_object(kind)
    scene = tiny_scene([obj])
    return scene, obj, seated_robot()


class TestExecuteGrasp:
    def test_charger_centered_grasp_succeeds(self):
        scene, obj, robot = scene_with("charger")
        pose = grasp_pose_for_object(scene, robot, obj)
        outcome, robot = execute_grasp(scene, robot, pose, width=0.045)
        assert outcome.status == "success"
        assert robot.held_object == "charger-1"

    def test_golf_ball_off_center_slips_and_rolls(self):
        scene, obj, robot = scene_with("golf_ball")
        # closing line 5 mm above center exceeds (1 - 0.8) * 21 mm = 4.2 mm
        shifted = grasp_pose_at(scene, robot, obj.pose.translation + np.array([0.0, 0.0, 0.005]))
        before = obj.pose.translation.copy()
        outcome, robot = execute_grasp(scene, robot, shifted, width=0.042)
        assert outcome.status == "fail-slip"
        assert robot.held_object is None
        moved = scene.object_by_id("golf-ball-1").pose.translation
        assert np.linalg.norm(moved - before) >= 0.01

    def test_golf_ball_centered_succeeds(self):
        scene, obj, robot = scene_with("golf_ball")
        pose = grasp_pose_for_object(scene, robot, obj)
        outcome, robot = execute_grasp(scene, robot, pose, width=0.042)
        assert outcome.status == "success"

    def test_battery_near_edge_drops(self):
        scene, obj, robot = scene_with("battery")
        # 45% of the half-height up the cylinder axis, heavy object
        shifted = grasp_pose_at(
            scene, robot, obj.pose.translation + np.array([0.0, 0.0, 0.45 * 0.035])
        )
        outcome, robot = execute_grasp(scene, robot, shifted, width=0.032)
        assert outcome.status == "fail-drop"

    def test_battery_centered_succeeds(self):
        scene, obj, robot = scene_with("battery")
        pose = grasp_pose_for_object(scene, robot, obj)
        outcome, robot = execute_grasp(scene, robot, pose, width=0.032)
        assert outcome.status == "success"

    def test_too_wide_object_fails(self):
        scene, obj, robot = scene_with("charger")
        wide = dataclasses.replace(obj, shape=Box(size=(0.09, 0.08, 0.03)))
        scene.replace_object(wide)
        pose = grasp_pose_for_object(scene, robot, wide)
        outcome, _ = execute_grasp(scene, robot, pose, width=0.07)
        assert outcome.status == "fail-drop"
        assert "wider" in outcome.detail

    def test_overweight_object_fails(self):
        scene, obj, robot = scene_with("charger")
        heavy = dataclasses.replace(obj, mass=0.8)
        scene.replace_object(heavy)
        pose = grasp_pose_for_object(scene, robot, heavy)
        outcome, _ = execute_grasp(scene, robot, pose, width=0.045)
        assert outcome.status == "fail-drop"
        assert "payload" in outcome.detail

    def test_gripper_occupied(self):
        scene, obj, robot = scene_with("charger")
        pose = grasp_pose_for_object(scene, robot, obj)
        _, robot = execute_grasp(scene, robot, pose, width=0.045)
        with pytest.raises(GripperOccupied):
            execute_grasp(scene, robot, pose, width=0.045)

    def test_infeasible_pose(self):
        scene, obj, robot = scene_with("charger")
        bad = Pose3(rot_x(0.5), (0.2, 0.0, 0.1))  # rolled orientation
        with pytest.raises(InfeasiblePose):
            execute_grasp(scene, robot, bad, width=0.045)

    def test_miss_is_fail_drop(self):
        # closing line 15 mm above a 21 mm sphere's center: outside the
        # midpoint tolerance entirely
        scene, obj, robot = scene_with("golf_ball")
        far = grasp_pose_at(scene, robot, obj.pose.translation + np.array([0.0, 0.0, 0.015]))
        outcome, _ = execute_grasp(scene, robot, far, width=0.042)
        assert outcome.status == "fail-drop"

    def test_deterministic(self):
        for _ in range(3):
            scene, obj, robot = scene_with("golf_ball")
            pose = grasp_pose_for_object(scene, robot, obj)
            outcome, _ = execute_grasp(scene, robot, pose, width=0.042)
            assert outcome.status == "success"

    def test_tightening_epsilon_never_adds_successes(self):
        rng = np.random.default_rng(17)
        for _ in range(60):
            scene, obj, robot = scene_with("charger")
            try:
                offset = rng.normal(0, 0.006, size=3)
                noisy = grasp_pose_at(scene, robot, obj.pose.translation + offset)
                loose, _ = execute_grasp(scene, robot, noisy, width=0.045, epsilon_p=0.012)
            except (InfeasiblePose, Unreachable):
                continue
            scene2, obj2, robot2 = scene_with("charger")
            tight, _ = execute_grasp(scene2, robot2, noisy, width=0.045, epsilon_p=0.004)
            if tight.succeeded:
                assert loose.succeeded


class TestPlace:
    def _grasped(self):
        scene, obj, robot = scene_with("charger")
        pose = grasp_pose_for_object(scene, robot, obj)
        outcome, robot = execute_grasp(scene, robot, pose, width=0.045)
        assert outcome.succeeded
        return scene, robot

    def test_place_at_target(self):
        scene, robot = self._grasped()
        robot = place(scene, robot, scene.place_target)
        placed = scene.object_by_id("charger-1").pose.translation
        assert np.linalg.norm(placed - np.asarray(scene.place_target)) < 0.02
        assert robot.held_object is None

    def test_place_empty_gripper(self):
        scene, _, robot = scene_with("charger")
        with pytest.raises(NothingHeld):
            place(scene, robot, scene.place_target)

    def test_place_beyond_reach(self):
        scene, robot = self._grasped()
        with pytest.raises(Unreachable):
            place(scene, robot, (5.0, 5.0, 0.02))
