"""4-DOF manipulator kinematics and joint-space trajectories.

Kinematic layout: a yaw joint about the vertical base axis, then three
pitch joints with parallel horizontal axes.  At the all-zero
configuration the links point straight out along +x with the shoulder
at height L1, so fk((0,0,0,0)) = (L2+L3+L4, 0, L1).  Positive pitch
rotates a link downward.

End-effector frame convention: +x is the approach axis (the direction
the gripper travels toward the object), +y the finger closing axis.
The reachable orientations are exactly Rz(yaw) @ Ry(pitch), i.e. roll
is always zero and the yaw must match the azimuth of the end-effector
position.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import Pose3, rot_y, rot_z


class JointLimitViolation(ValueError):
    pass


class Unreachable(ValueError):
    pass


class OrientationInfeasible(ValueError):
    """Target orientation has roll, or its yaw disagrees with the position azimuth."""


# End-effector -> gripper camera: camera sits behind the fingers along
# the approach axis, optical +z looking along it (+x right, +y down).
_EE_TO_CAMERA_ROT = np.array(
    [
        [0.0, 0.0, 1.0],
        [-1.0, 0.0, 0.0],
        [0.0, -1.0, 0.0],
    ]
)


def default_camera_offset(setback: float = 0.05) -> Pose3:
    return Pose3(_EE_TO_CAMERA_ROT, (-setback, 0.0, 0.0))


@dataclass(frozen=True)
class JointState:
    q1: float  # base yaw (rad)
    q2: float  # shoulder pitch
    q3: float  # elbow pitch
    q4: float  # wrist pitch

    def as_array(self) -> np.ndarray:
        return np.array([self.q1, self.q2, self.q3, self.q4])

    @staticmethod
    def from_array(q) -> "JointState":
        q = np.asarray(q, dtype=np.float64)
        return JointState(float(q[0]), float(q[1]), float(q[2]), float(q[3]))


@dataclass(frozen=True)
class ArmModel:
    """Geometry and limits; defaults follow the OpenManipulator-X footprint."""

    link_lengths: tuple[float, float, float, float] = (0.077, 0.130, 0.124, 0.126)
    joint_limits: tuple[tuple[float, float], ...] = (
        (-2.90, 2.90),
        (-2.05, 2.05),
        (-2.05, 2.05),
        (-2.00, 2.00),
    )
    max_joint_speed: float = 1.0  # rad/s, shared by all joints
    gripper_max_opening: float = 0.07
    payload_limit: float = 0.5  # kg
    camera_offset: Pose3 = field(default_factory=default_camera_offset)
    survey_joints: JointState = JointState(0.0, -math.pi / 2, math.radians(45.0), math.radians(105.0))
    pregrasp_standoff: float = 0.05

    def __post_init__(self):
        if min(self.link_lengths) <= 0:
            raise ValueError("link lengths must be positive")
        for lo, hi in self.joint_limits:
            if lo >= hi:
                raise ValueError("joint limits must satisfy lo < hi")
        if self.max_joint_speed <= 0 or self.gripper_max_opening <= 0:
            raise ValueError("speed and opening must be positive")

    @property
    def max_reach(self) -> float:
        return sum(self.link_lengths[1:])

    def check_limits(self, q: JointState, tol: float = 1e-9):
        for value, (lo, hi) in zip(q.as_array(), self.joint_limits):
            if value < lo - tol or value > hi + tol:
                raise JointLimitViolation(
                    f"joint value {value:.4f} outside [{lo:.4f}, {hi:.4f}]"
                )

    def within_limits(self, q: JointState, tol: float = 1e-9) -> bool:
        try:
            self.check_limits(q, tol)
            return True
        except JointLimitViolation:
            return False


def fk(model: ArmModel, q: JointState) -> Pose3:
    """End-effector pose in the arm-base frame."""
    model.check_limits(q)
    l1, l2, l3, l4 = model.link_lengths
    a2 = q.q2
    a3 = q.q2 + q.q3
    a4 = q.q2 + q.q3 + q.q4
    r = l2 * math.cos(a2) + l3 * math.cos(a3) + l4 * math.cos(a4)
    z = l1 - l2 * math.sin(a2) - l3 * math.sin(a3) - l4 * math.sin(a4)
    rotation = rot_z(q.q1) @ rot_y(a4)
    translation = (r * math.cos(q.q1), r * math.sin(q.q1), z)
    return Pose3(rotation, translation)


def _manifold_pitch(rotation: np.ndarray, yaw: float, tol: float) -> float:
    """Extract pitch from Rz(yaw)@Ry(pitch); reject anything off the manifold."""
    m = rot_z(yaw).T @ rotation
    off = max(abs(m[0, 1]), abs(m[1, 0]), abs(m[1, 2]), abs(m[2, 1]), abs(m[1, 1] - 1.0))
    if off > tol:
        raise OrientationInfeasible(
            f"orientation off the yaw-pitch manifold (residual {off:.2e})"
        )
    return math.atan2(m[0, 2], m[0, 0])


def ik(model: ArmModel, target: Pose3, orientation_tol: float = 1e-6) -> JointState:
    """Closed-form inverse kinematics, elbow-up branch preferred.

    Raises:
        Unreachable: position outside the workspace annulus.
        OrientationInfeasible: target rotation has roll or a yaw that
            does not match the position azimuth.
        JointLimitViolation: both elbow branches violate joint limits.
    """
    l1, l2, l3, l4 = model.link_lengths
    x, y, z = target.translation
    q1 = math.atan2(y, x)
    pitch = _manifold_pitch(target.rotation, q1, orientation_tol)

    radial = math.hypot(x, y)
    if radial > model.max_reach + 1e-9:
        raise Unreachable(f"radial distance {radial:.3f} beyond reach {model.max_reach:.3f}")
    # wrist center, in (radial, downward) planar coordinates from the shoulder
    wr = radial - l4 * math.cos(pitch)
    wdown = (l1 - z) - l4 * math.sin(pitch)
    dist2 = wr * wr + wdown * wdown
    dist = math.sqrt(dist2)
    if dist > l2 + l3 + 1e-9 or dist < abs(l2 - l3) - 1e-9:
        raise Unreachable(f"wrist distance {dist:.3f} outside 2R annulus")

    cos_elbow = np.clip((dist2 - l2 * l2 - l3 * l3) / (2.0 * l2 * l3), -1.0, 1.0)
    elbow = math.acos(cos_elbow)
    candidates = []
    for q3 in (-elbow, elbow):
        q2 = math.atan2(wdown, wr) - math.atan2(l3 * math.sin(q3), l2 + l3 * math.cos(q3))
        q4 = math.remainder(pitch - q2 - q3, math.tau)  # same rotation, principal range
        state = JointState(q1, q2, q3, q4)
        elbow_height = -l2 * math.sin(q2)  # above shoulder is positive
        candidates.append((elbow_height, state))
    # prefer the branch whose elbow sits higher
    candidates.sort(key=lambda c: -c[0])
    for _, state in candidates:
        if model.within_limits(state):
            return state
    raise JointLimitViolation("both elbow branches violate joint limits")


def is_reachable(model: ArmModel, target: Pose3) -> bool:
    try:
        ik(model, target)
        return True
    except (Unreachable, OrientationInfeasible, JointLimitViolation):
        return False


@dataclass(frozen=True)
class Trajectory:
    """Time-stamped joint waypoints, linearly interpolated between them."""

    waypoints: tuple[tuple[JointState, float], ...]

    def __post_init__(self):
        if not self.waypoints:
            raise ValueError("trajectory needs at least one waypoint")
        times = [t for _, t in self.waypoints]
        if any(b < a for a, b in zip(times, times[1:])):
            raise ValueError("waypoint times must be monotone")

    @property
    def duration(self) -> float:
        return self.waypoints[-1][1]

    def sample(self, t: float) -> JointState:
        pts = self.waypoints
        if t <= pts[0][1]:
            return pts[0][0]
        for (qa, ta), (qb, tb) in zip(pts, pts[1:]):
            if t <= tb:
                if tb - ta <= 0.0:
                    return qb
                alpha = (t - ta) / (tb - ta)
                return JointState.from_array(
                    qa.as_array() + alpha * (qb.as_array() - qa.as_array())
                )
        return pts[-1][0]


def _segment_time(model: ArmModel, frm: JointState, to: JointState) -> float:
    delta = np.abs(to.as_array() - frm.as_array()).max()
    return float(delta / model.max_joint_speed)


def _build(model: ArmModel, states: list[JointState]) -> Trajectory:
    for s in states:
        model.check_limits(s)
    waypoints = [(states[0], 0.0)]
    t = 0.0
    for prev, nxt in zip(states, states[1:]):
        dt = _segment_time(model, prev, nxt)
        if dt <= 0.0:
            continue
        t += dt
        waypoints.append((nxt, t))
    return Trajectory(tuple(waypoints))


def joint_move(model: ArmModel, frm: JointState, to: JointState) -> Trajectory:
    """Direct rate-limited move between two joint states."""
    return _build(model, [frm, to])


def raise_to_survey(model: ArmModel, frm: JointState) -> Trajectory:
    """Move to the configured survey pose (high camera vantage, pitched down)."""
    return joint_move(model, frm, model.survey_joints)


def plan_trajectory(model: ArmModel, frm: JointState, to: JointState) -> Trajectory:
    """Three-phase grasp approach: current -> pre-grasp standoff -> grasp.

    The pre-grasp waypoint backs off ``model.pregrasp_standoff`` meters
    along the grasp approach axis at the same orientation.

    Raises:
        Unreachable / OrientationInfeasible / JointLimitViolation when
        the standoff pose cannot be reached.
    """
    if np.array_equal(frm.as_array(), to.as_array()):
        return Trajectory(((frm, 0.0),))
    grasp_pose = fk(model, to)
    approach = grasp_pose.rotation[:, 0]
    standoff_pose = Pose3(
        grasp_pose.rotation, grasp_pose.translation - model.pregrasp_standoff * approach
    )
    q_pre = ik(model, standoff_pose)
    return _build(model, [frm, q_pre, to])


def retreat_trajectory(model: ArmModel, frm: JointState, to: JointState) -> Trajectory:
    """Post-grasp move used for carrying: plain joint move, no standoff."""
    return joint_move(model, frm, to)


def with_scenario_overrides(model: ArmModel, **kwargs) -> ArmModel:
    return replace(model, **kwargs)
