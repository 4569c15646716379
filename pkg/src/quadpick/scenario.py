"""Scenario document loading and validation.

Scenarios are JSON documents with top-level keys ``version``, ``name``,
``rooms``, ``objects``, ``grid``, ``robot``, ``cameras``, ``arm``,
``body``, ``nav``, ``noise``, ``seed``.  The grid is written as
row-major strings ('.' free, '#' occupied), top row first.  Angles are
radians, lengths meters.  See scenarios/README.md for the full schema.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

from .arm import ArmModel, JointState, default_camera_offset
from .geometry import CameraIntrinsics, Pose3
from .nav import ApproachTarget, NavConfig, PidGains
from .scene import (
    BodyConfig,
    CameraMount,
    NoiseConfig,
    OccupancyGrid,
    Room,
    SceneObject,
    WorldScene,
    front_mount_pose,
)
from .shapes import Box, Cylinder, Sphere

SCHEMA_VERSION = 1


class ParseError(ValueError):
    """Document is not well-formed JSON."""


class ValidationError(ValueError):
    """Document parsed but violates the scenario schema; message names the field."""


def _require(mapping: dict, key: str, kind, where: str):
    if key not in mapping:
        raise ValidationError(f"{where}.{key}: missing required field")
    value = mapping[key]
    if kind is float:
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise ValidationError(f"{where}.{key}: expected a number")
        return float(value)
    if not isinstance(value, kind):
        raise ValidationError(f"{where}.{key}: expected {kind.__name__}")
    return value


def _vec(mapping: dict, key: str, n: int, where: str) -> tuple[float, ...]:
    raw = _require(mapping, key, list, where)
    if len(raw) != n or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in raw):
        raise ValidationError(f"{where}.{key}: expected {n} numbers")
    return tuple(float(v) for v in raw)


def _parse_shape(raw: dict, where: str):
    kind = _require(raw, "kind", str, where)
    try:
        if kind == "box":
            return Box(size=tuple(_vec(raw, "size", 3, where)))
        if kind == "sphere":
            return Sphere(radius=_require(raw, "radius", float, where))
        if kind == "cylinder":
            return Cylinder(
                radius=_require(raw, "radius", float, where),
                height=_require(raw, "height", float, where),
            )
    except ValueError as exc:
        raise ValidationError(f"{where}: {exc}") from exc
    raise ValidationError(f"{where}.kind: unknown shape kind {kind!r}")


def _parse_object(raw: dict, where: str) -> SceneObject:
    shape = _parse_shape(_require(raw, "shape", dict, where), f"{where}.shape")
    if "quat" in raw:
        qx, qy, qz, qw = _vec(raw, "quat", 4, where)
        rotation = Pose3.from_quat(qx, qy, qz, qw).rotation
    else:
        yaw = float(raw.get("yaw", 0.0))
        c, s = math.cos(yaw), math.sin(yaw)
        rotation = [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]
    position = list(_vec(raw, "position", 2, where) + (0.0,)) if len(raw.get("position", [])) == 2 else None
    try:
        obj = SceneObject(
            id=_require(raw, "id", str, where),
            class_name=_require(raw, "class", str, where),
            shape=shape,
            pose=Pose3(rotation, position or _vec(raw, "position", 3, where)),
            mass=_require(raw, "mass", float, where),
            slip_coefficient=_require(raw, "slip", float, where),
            movable=bool(raw.get("movable", True)),
        )
    except ValueError as exc:
        raise ValidationError(f"{where}: {exc}") from exc
    if position is not None:
        # 2D positions rest the object on the floor
        obj = obj.moved_to((position[0], position[1], obj.resting_height()))
    return obj


def _parse_intrinsics(raw: dict, where: str) -> CameraIntrinsics:
    try:
        return CameraIntrinsics(
            fx=_require(raw, "fx", float, where),
            fy=_require(raw, "fy", float, where),
            cx=_require(raw, "cx", float, where),
            cy=_require(raw, "cy", float, where),
            width=_require(raw, "width", int, where),
            height=_require(raw, "height", int, where),
        )
    except ValueError as exc:
        raise ValidationError(f"{where}: {exc}") from exc


def _parse_gains(raw: dict, where: str, default: PidGains) -> PidGains:
    try:
        return PidGains(
            kp=float(raw.get("kp", default.kp)),
            ki=float(raw.get("ki", default.ki)),
            kd=float(raw.get("kd", default.kd)),
            integral_clamp=float(raw.get("integral_clamp", default.integral_clamp)),
            saturation=float(raw.get("saturation", default.saturation)),
        )
    except ValueError as exc:
        raise ValidationError(f"{where}: {exc}") from exc


def _parse_nav(raw: dict) -> NavConfig:
    default = NavConfig()
    approach_raw = raw.get("approach", {})
    try:
        approach = ApproachTarget(
            stop_distance=float(approach_raw.get("stop_distance", default.approach.stop_distance)),
            lateral_offset=float(approach_raw.get("lateral_offset", default.approach.lateral_offset)),
            tolerance=float(approach_raw.get("tolerance", default.approach.tolerance)),
        )
    except ValueError as exc:
        raise ValidationError(f"nav.approach: {exc}") from exc
    return NavConfig(
        linear=_parse_gains(raw.get("linear", {}), "nav.linear", default.linear),
        angular=_parse_gains(raw.get("angular", {}), "nav.angular", default.angular),
        approach=approach,
        lookahead=float(raw.get("lookahead", default.lookahead)),
        goal_tolerance=float(raw.get("goal_tolerance", default.goal_tolerance)),
        scan_period=float(raw.get("scan_period", default.scan_period)),
        arrive_px_threshold=float(raw.get("arrive_px_threshold", default.arrive_px_threshold)),
        arrive_debounce_ticks=int(raw.get("arrive_debounce_ticks", default.arrive_debounce_ticks)),
    )


def _parse_arm(raw: dict) -> ArmModel:
    default = ArmModel()
    kwargs = {}
    if "link_lengths" in raw:
        kwargs["link_lengths"] = tuple(_vec(raw, "link_lengths", 4, "arm"))
    if "joint_limits" in raw:
        limits = raw["joint_limits"]
        if not isinstance(limits, list) or len(limits) != 4:
            raise ValidationError("arm.joint_limits: expected 4 [lo, hi] pairs")
        kwargs["joint_limits"] = tuple((float(lo), float(hi)) for lo, hi in limits)
    for key in ("max_joint_speed", "gripper_max_opening", "payload_limit", "pregrasp_standoff"):
        if key in raw:
            kwargs[key] = float(raw[key])
    if "camera_setback" in raw:
        kwargs["camera_offset"] = default_camera_offset(float(raw["camera_setback"]))
    if "survey_joints" in raw:
        kwargs["survey_joints"] = JointState.from_array(_vec(raw, "survey_joints", 4, "arm"))
    try:
        return ArmModel(
            **{**{"link_lengths": default.link_lengths}, **kwargs}
        )
    except ValueError as exc:
        raise ValidationError(f"arm: {exc}") from exc


def load_scenario(text: str) -> WorldScene:
    """Parse and validate a scenario document.

    Raises:
        ParseError: malformed JSON.
        ValidationError: schema violation; the message names the field.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"scenario is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ValidationError("document: expected a JSON object")
    version = _require(doc, "version", int, "document")
    if version != SCHEMA_VERSION:
        raise ValidationError(f"document.version: unsupported version {version}")

    grid_raw = _require(doc, "grid", dict, "document")
    resolution = _require(grid_raw, "resolution", float, "grid")
    if resolution <= 0:
        raise ValidationError("grid.resolution: must be positive")
    origin = tuple(grid_raw.get("origin", (0.0, 0.0)))
    rows = _require(grid_raw, "rows", list, "grid")
    try:
        grid = OccupancyGrid.from_rows(rows, resolution, origin)
    except ValueError as exc:
        raise ValidationError(f"grid.rows: {exc}") from exc

    rooms = []
    seen_names = set()
    for i, raw in enumerate(_require(doc, "rooms", list, "document")):
        where = f"rooms[{i}]"
        name = _require(raw, "name", str, where)
        if name in seen_names:
            raise ValidationError(f"{where}.name: duplicate room name {name!r}")
        seen_names.add(name)
        entry = _vec(raw, "entry_waypoint", 2, where)
        scan = _vec(raw, "scan_center", 2, where)
        if not grid.position_free(entry):
            raise ValidationError(f"{where}.entry_waypoint: cell is occupied")
        if not grid.position_free(scan):
            raise ValidationError(f"{where}.scan_center: cell is occupied")
        rooms.append(Room(name=name, entry_waypoint=entry, scan_center=scan))
    if not rooms:
        raise ValidationError("rooms: at least one room required")

    objects = []
    seen_ids = set()
    for i, raw in enumerate(_require(doc, "objects", list, "document")):
        obj = _parse_object(raw, f"objects[{i}]")
        if obj.id in seen_ids:
            raise ValidationError(f"objects[{i}].id: duplicate object id {obj.id!r}")
        seen_ids.add(obj.id)
        objects.append(obj)

    robot_raw = _require(doc, "robot", dict, "document")
    home = _vec(robot_raw, "home", 3, "robot")
    if not grid.position_free(home[:2]):
        raise ValidationError("robot.home: cell is occupied")
    place_target = _vec(robot_raw, "place_target", 3, "robot")

    cameras = _require(doc, "cameras", dict, "document")
    front_raw = _require(cameras, "front", dict, "cameras")
    gripper_raw = _require(cameras, "gripper", dict, "cameras")
    front = CameraMount(
        intrinsics=_parse_intrinsics(_require(front_raw, "intrinsics", dict, "cameras.front"), "cameras.front.intrinsics"),
        pose=front_mount_pose(
            height=float(front_raw.get("height", 0.25)),
            pitch_deg=float(front_raw.get("pitch_deg", 15.0)),
            forward=float(front_raw.get("forward", 0.0)),
        ),
        max_range=float(front_raw.get("max_range", 5.0)),
    )
    gripper = CameraMount(
        intrinsics=_parse_intrinsics(_require(gripper_raw, "intrinsics", dict, "cameras.gripper"), "cameras.gripper.intrinsics"),
        pose=Pose3.identity(),  # actual pose comes from arm FK + camera offset
        max_range=float(gripper_raw.get("max_range", 2.0)),
    )

    body_raw = doc.get("body", {})
    body = BodyConfig(
        arm_mount_forward=float(body_raw.get("arm_mount_forward", 0.08)),
        standing_height=float(body_raw.get("standing_height", 0.33)),
        sitting_height=float(body_raw.get("sitting_height", 0.16)),
    )
    noise_raw = doc.get("noise", {})
    noise = NoiseConfig(
        depth_sigma=float(noise_raw.get("depth_sigma", 0.003)),
        detect_jitter_px=float(noise_raw.get("detect_jitter_px", 2.0)),
    )

    return WorldScene(
        name=str(doc.get("name", "scenario")),
        rooms=rooms,
        objects=objects,
        grid=grid,
        home_pose=home,
        place_target=place_target,
        front_camera=front,
        gripper_camera=gripper,
        arm=_parse_arm(doc.get("arm", {})),
        body=body,
        noise=noise,
        nav=_parse_nav(doc.get("nav", {})),
        seed=int(doc.get("seed", 0)),
    )


def load_scenario_file(path) -> WorldScene:
    return load_scenario(Path(path).read_text(encoding="utf-8"))
