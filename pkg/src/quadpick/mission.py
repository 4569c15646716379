"""Mission finite state machine: the four-step pick-and-return flow
gated by operator events.

The controller owns the world (scene + robot), advances it one tick at
a time, and maps every module error onto a recovery transition: a lost
track re-enters scanning, empty masks and infeasible grasps return to
grasp selection, and three consecutive grasp-phase failures fault the
mission.  Operator events are queued and applied at tick boundaries,
one per tick, in sequence order, which makes full runs replayable.

Actuation only happens in the active phases; Idle, Done, Faulted, and
the Await* phases never emit commands.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any

import numpy as np

from . import grasp as grasp_mod
from . import manipulation, nav, perception, worldsim
from .arm import JointLimitViolation, JointState, Trajectory, Unreachable, ik, raise_to_survey
from .geometry import Pose3
from .scene import Posture, RobotCommand, RobotState, WorldScene
from .worldsim import SensorFrame

MAX_STRIKES = 3
PLACE_BEARING_TOL = 0.35  # rad; rotate toward the drop target before sitting


class Phase(str, Enum):
    IDLE = "Idle"
    NAVIGATE_TO_ROOM = "NavigateToRoom"
    SCANNING = "Scanning"
    AWAIT_APPROACH_SELECTION = "AwaitApproachSelection"
    APPROACHING = "Approaching"
    SITTING = "Sitting"
    ARM_SURVEY = "ArmSurvey"
    AWAIT_GRASP_SELECTION = "AwaitGraspSelection"
    AWAIT_DRAG_CONFIRM = "AwaitDragConfirm"
    PLANNING = "Planning"
    GRASPING = "Grasping"
    RETURNING = "Returning"
    PLACING = "Placing"
    DONE = "Done"
    FAULTED = "Faulted"


TERMINAL_PHASES = {Phase.DONE, Phase.FAULTED}
QUIET_PHASES = {
    Phase.IDLE,
    Phase.DONE,
    Phase.FAULTED,
    Phase.AWAIT_APPROACH_SELECTION,
    Phase.AWAIT_GRASP_SELECTION,
    Phase.AWAIT_DRAG_CONFIRM,
}


class EventKind(str, Enum):
    GO_TO_ROOM = "go_to_room"
    BEGIN_SCAN = "begin_scan"
    STOP = "stop"
    SELECT_CLICK = "select_click"
    SELECT_DRAG = "select_drag"
    CONFIRM_DRAG = "confirm_drag"
    TOGGLE_DETECTION = "toggle_detection"


@dataclass(frozen=True)
class OperatorEvent:
    kind: EventKind
    seq: int
    room: str | None = None
    camera: str | None = None
    point: tuple[float, float] | None = None
    rect: tuple[float, float, float, float] | None = None
    accept: bool | None = None
    enabled: bool | None = None


# Legality table: every (phase, event kind) pair resolves to a handler
# name or "ignore"; the totality test enumerates it.
def _build_event_rules() -> dict[tuple[Phase, EventKind], str]:
    rules = {(p, k): "ignore" for p in Phase for k in EventKind}
    for p in Phase:
        rules[(p, EventKind.STOP)] = "stop"
        rules[(p, EventKind.TOGGLE_DETECTION)] = "toggle_detection"
    for p in (Phase.IDLE, Phase.SCANNING, Phase.AWAIT_APPROACH_SELECTION):
        rules[(p, EventKind.GO_TO_ROOM)] = "go_to_room"
    for p in (Phase.SCANNING, Phase.AWAIT_APPROACH_SELECTION):
        rules[(p, EventKind.SELECT_CLICK)] = "select_approach"
        rules[(p, EventKind.SELECT_DRAG)] = "select_approach"
        rules[(p, EventKind.BEGIN_SCAN)] = "begin_scan"
    rules[(Phase.AWAIT_GRASP_SELECTION, EventKind.SELECT_CLICK)] = "select_grasp"
    rules[(Phase.AWAIT_GRASP_SELECTION, EventKind.SELECT_DRAG)] = "select_grasp"
    rules[(Phase.AWAIT_DRAG_CONFIRM, EventKind.CONFIRM_DRAG)] = "confirm_drag"
    return rules


EVENT_RULES = _build_event_rules()


@dataclass
class MetricsRecord:
    trial: int
    object_class: str
    method: str  # "click" | "drag"
    duration: float
    status: str  # "success" | "fail-slip" | "fail-drop" | "fail-plan"
    final_position: tuple[float, float]  # base frame, x forward / y right

    def to_dict(self) -> dict:
        return {
            "trial": self.trial,
            "object_class": self.object_class,
            "method": self.method,
            "duration": self.duration,
            "status": self.status,
            "final_position": list(self.final_position),
        }


@dataclass
class MissionStatus:
    phase: str
    detail: str
    sim_time: float
    tick: int
    location: tuple[float, float, float]
    room: str | None
    target_room: str | None
    tracked_object: str | None
    held_object: str | None
    detection_enabled: bool
    warning: str | None
    fault_reason: str | None
    awaiting_confirmation: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)


class MissionController:
    """Single-writer mission loop over one scenario."""

    def __init__(self, scene: WorldScene, seed: int | None = None, dt: float = 0.05):
        self.scene = scene
        self.robot: RobotState = scene.initial_robot_state()
        self.dt = dt
        self.seed = scene.seed if seed is None else seed
        self.rng = np.random.default_rng(self.seed)
        self.phase = Phase.IDLE
        self.tick_index = 0
        self.sim_time = 0.0
        self.entered_at = 0.0
        self.trace: list[dict] = []
        self.metrics: list[MetricsRecord] = []
        self.event_queue: list[OperatorEvent] = []
        self.last_seq = -1
        self.warning: str | None = None
        self.fault_reason: str | None = None
        self.detection_enabled = True
        # mission context
        self.target_room: str | None = None
        self.tracked_object: str | None = None
        self.track_bbox: tuple[int, int, int, int] | None = None
        self.pending_selection: perception.Selection | None = None
        self.grasp_selection: perception.Selection | None = None
        self.selected_grasp: grasp_mod.GraspCandidate | None = None
        self.grasp_trajectory: Trajectory | None = None
        self.trajectory_started: float = 0.0
        self.path_world: list[tuple[float, float]] | None = None
        self.approach = nav.ApproachState()
        self.approach_target: nav.ApproachTarget = scene.nav.approach
        self.scan_accumulated = 0.0
        self.strikes = 0
        self.trial_counter = 0
        self.mission_started = 0.0
        self.reapproach_used = False
        self.selection_method: str | None = None
        self.grasp_position_base: tuple[float, float] | None = None
        self.last_front_frame: SensorFrame | None = None
        self.last_gripper_frame: SensorFrame | None = None
        self.last_detections: list[perception.DetectionBox] = []
        self.planning_grid = scene.grid.inflated(1)
        self._stall_anchor: tuple[float, float, float] = (*self.robot.base[:2], 0.0)

    # -- event intake -------------------------------------------------------

    def submit(self, event: OperatorEvent):
        if event.seq <= self.last_seq:
            raise ValueError(f"event seq {event.seq} not increasing (last {self.last_seq})")
        self.last_seq = event.seq
        self.event_queue.append(event)

    # -- transitions --------------------------------------------------------

    def _transition(self, to: Phase, trigger: str):
        self.trace.append(
            {
                "tick": self.tick_index,
                "sim_time": round(self.sim_time, 6),
                "from": self.phase.value,
                "to": to.value,
                "trigger": trigger,
            }
        )
        self.phase = to
        self.entered_at = self.sim_time

    def _warn(self, message: str):
        self.warning = message

    def _fault(self, reason: str):
        self.fault_reason = reason
        self._transition(Phase.FAULTED, f"fault: {reason}")

    # -- event handlers -----------------------------------------------------

    def handle_event(self, ev: OperatorEvent):
        """Apply one operator event; illegal (phase, event) pairs are
        absorbed with a warning."""
        self.warning = None
        handler = EVENT_RULES[(self.phase, ev.kind)]
        if handler == "ignore":
            self._warn(f"event {ev.kind.value} ignored in state {self.phase.value}")
            return
        getattr(self, f"_on_{handler}")(ev)

    def _on_stop(self, ev: OperatorEvent):
        if self.robot.held_object is not None:
            obj = self.scene.object_by_id(self.robot.held_object)
            drop = obj.pose.translation
            self.scene.replace_object(obj.moved_to((drop[0], drop[1], obj.resting_height())))
        self.robot = replace(
            self.robot,
            held_object=None,
            held_offset=None,
            arm_joints=JointState(0.0, 0.0, 0.0, 0.0),
            gripper_opening=self.scene.arm.gripper_max_opening,
            posture=Posture.STANDING,
        )
        self._reset_mission_context()
        self._transition(Phase.IDLE, "stop")

    def _reset_mission_context(self):
        self.target_room = None
        self.tracked_object = None
        self.track_bbox = None
        self.pending_selection = None
        self.grasp_selection = None
        self.selected_grasp = None
        self.grasp_trajectory = None
        self.path_world = None
        self.approach.reset()
        self.approach_target = self.scene.nav.approach
        self.scan_accumulated = 0.0
        self.strikes = 0
        self.reapproach_used = False

    def _on_toggle_detection(self, ev: OperatorEvent):
        self.detection_enabled = bool(ev.enabled)

    def _on_go_to_room(self, ev: OperatorEvent):
        try:
            room = self.scene.room_by_name(ev.room or "")
        except KeyError:
            self._warn(f"unknown room: {ev.room}")
            return
        try:
            path = self._plan_to(room.entry_waypoint, room.scan_center)
        except (nav.NoPath, nav.CellOccupied) as exc:
            self._warn(f"cannot navigate to {room.name}: {exc}")
            return
        if self.phase == Phase.IDLE:
            self.mission_started = self.sim_time
        self.target_room = room.name
        self.path_world = path
        self._transition(Phase.NAVIGATE_TO_ROOM, f"go_to_room:{room.name}")

    def _plan_to(self, *goals_xy) -> list[tuple[float, float]]:
        try:
            return self._plan_on(self.planning_grid, *goals_xy)
        except nav.CellOccupied:
            # wedged against a wall in the inflated map: plan on the raw grid
            return self._plan_on(self.scene.grid, *goals_xy)

    def _plan_on(self, grid, *goals_xy) -> list[tuple[float, float]]:
        path_cells: list[tuple[int, int]] = []
        start = grid.cell_of(self.robot.base[:2])
        for goal_xy in goals_xy:
            segment = nav.plan_path(grid, start, grid.cell_of(goal_xy))
            path_cells.extend(segment if not path_cells else segment[1:])
            start = segment[-1]
        path = [grid.center_of(c) for c in path_cells]
        path[-1] = tuple(goals_xy[-1])
        return path

    def _follow_with_recovery(self, goal_xy) -> tuple[RobotCommand, bool]:
        command, done = nav.follow_path(
            self.robot, self.path_world, self.scene.nav, self.dt, self.planning_grid
        )
        if done:
            return command, True
        x, y, _ = self.robot.base
        ax, ay, since = self._stall_anchor
        if math.hypot(x - ax, y - ay) > 0.05:
            self._stall_anchor = (x, y, self.sim_time)
        elif self.sim_time - since > 4.0:
            self._stall_anchor = (x, y, self.sim_time)
            try:
                self.path_world = self._plan_to(goal_xy)
            except (nav.NoPath, nav.CellOccupied) as exc:
                self._fault(f"navigation stalled and replanning failed: {exc}")
                return RobotCommand(), False
        return command, False

    def _on_begin_scan(self, ev: OperatorEvent):
        self.scan_accumulated = 0.0
        if self.phase != Phase.SCANNING:
            self._transition(Phase.SCANNING, "begin_scan")

    def _selection_from_event(self, ev: OperatorEvent) -> perception.Selection:
        if ev.kind == EventKind.SELECT_CLICK:
            return perception.Selection.click(*ev.point)
        return perception.Selection.drag(*ev.rect)

    def _on_select_approach(self, ev: OperatorEvent):
        if ev.camera != "front":
            self._warn("approach selection must use the front camera")
            return
        frame = self._front_frame()
        detections = self._detect(frame)
        try:
            sel = perception.resolve_selection(self._selection_from_event(ev), detections, frame)
        except perception.NoTargetUnderSelection as exc:
            self._warn(str(exc))
            return
        self.tracked_object = sel.target_object_id
        self.track_bbox = sel.resolved_bbox
        self.selection_method = sel.mode
        self.approach.reset()
        self._transition(Phase.APPROACHING, f"target:{sel.target_object_id}")

    def _on_select_grasp(self, ev: OperatorEvent):
        if ev.camera != "gripper":
            self._warn("grasp selection must use the gripper camera")
            return
        frame = self._gripper_frame()
        detections = self._detect(frame)
        try:
            sel = perception.resolve_selection(self._selection_from_event(ev), detections, frame)
        except perception.NoTargetUnderSelection as exc:
            self._warn(str(exc))
            return
        self.selection_method = sel.mode
        if sel.confirmed:
            self.grasp_selection = sel
            self._transition(Phase.PLANNING, f"grasp-click:{sel.target_object_id}")
        else:
            self.pending_selection = sel
            self._transition(Phase.AWAIT_DRAG_CONFIRM, f"grasp-drag:{sel.target_object_id}")

    def _on_confirm_drag(self, ev: OperatorEvent):
        pending = self.pending_selection
        self.pending_selection = None
        if ev.accept and pending is not None:
            self.grasp_selection = pending.confirm()
            self._transition(Phase.PLANNING, "drag-confirmed")
        else:
            self._transition(Phase.AWAIT_GRASP_SELECTION, "drag-rejected")

    # -- per-tick behavior ---------------------------------------------------

    def run_tick(self) -> MissionStatus:
        """Process one queued event, then advance the active phase."""
        if self.event_queue:
            self.handle_event(self.event_queue.pop(0))
        command = RobotCommand()
        if self.phase not in QUIET_PHASES:
            command = self._phase_tick()
        if command.is_motion():
            self.robot = worldsim.step(self.scene, self.robot, command, self.dt)
            worldsim.update_held_object(self.scene, self.robot)
        self.tick_index += 1
        self.sim_time = self.tick_index * self.dt
        return self.status()

    def _phase_tick(self) -> RobotCommand:
        handlers = {
            Phase.NAVIGATE_TO_ROOM: self._tick_navigate,
            Phase.SCANNING: self._tick_scanning,
            Phase.APPROACHING: self._tick_approaching,
            Phase.SITTING: self._tick_sitting,
            Phase.ARM_SURVEY: self._tick_arm_survey,
            Phase.PLANNING: self._tick_planning,
            Phase.GRASPING: self._tick_grasping,
            Phase.RETURNING: self._tick_returning,
            Phase.PLACING: self._tick_placing,
        }
        return handlers[self.phase]()

    def _front_frame(self) -> SensorFrame:
        frame = worldsim.render(self.scene, self.robot, "front", self.tick_index, self.rng)
        self.last_front_frame = frame
        return frame

    def _gripper_frame(self) -> SensorFrame:
        frame = worldsim.render(self.scene, self.robot, "gripper", self.tick_index, self.rng)
        self.last_gripper_frame = frame
        return frame

    def _detect(self, frame: SensorFrame) -> list[perception.DetectionBox]:
        boxes = perception.detect(frame, self.rng, self.scene.noise.detect_jitter_px)
        self.last_detections = boxes
        return boxes

    def _tick_navigate(self) -> RobotCommand:
        room = self.scene.room_by_name(self.target_room)
        command, done = self._follow_with_recovery(room.scan_center)
        if done:
            self.scan_accumulated = 0.0
            self._transition(Phase.SCANNING, "room-reached")
            return RobotCommand()
        return command

    def _tick_scanning(self) -> RobotCommand:
        frame = self._front_frame()
        self._detect(frame)
        command = nav.scan_step(self.scene.nav)
        self.scan_accumulated += abs(command.omega) * self.dt
        if self.scan_accumulated >= math.tau:
            self._transition(Phase.AWAIT_APPROACH_SELECTION, "scan-complete")
            return RobotCommand()
        return command

    def _tick_approaching(self) -> RobotCommand:
        frame = self._front_frame()
        try:
            update = perception.track(
                self.tracked_object, self.track_bbox, frame, self.rng,
                self.scene.noise.detect_jitter_px,
            )
        except perception.TrackLost:
            self._warn(f"track lost on {self.tracked_object}")
            self.approach.reset()
            self.scan_accumulated = 0.0
            self._transition(Phase.SCANNING, "track-lost")
            return RobotCommand()
        self.track_bbox = update.bbox
        command, arrived = nav.approach_step(
            self.approach,
            update.x_error_px,
            update.distance,
            self.approach_target,
            self.scene.nav,
            frame.intrinsics,
            self.dt,
        )
        if arrived:
            self._transition(Phase.SITTING, "arrived")
            return RobotCommand()
        return command

    def _tick_sitting(self) -> RobotCommand:
        try:
            self.robot = worldsim.settle_and_sit(self.scene, self.robot, self.tracked_object)
        except worldsim.ObjectNotVisibleAfterSit as exc:
            if not self.reapproach_used:
                self.reapproach_used = True
                self._warn(f"{exc}; retrying approach closer in")
                self.approach.reset()
                # steer the object more central on the retry
                self.approach_target = replace(
                    self.approach_target,
                    lateral_offset=self.approach_target.lateral_offset / 2.0,
                )
                self._transition(Phase.APPROACHING, "object-not-visible")
                return RobotCommand()
            self._fault(str(exc))
            return RobotCommand()
        trajectory = raise_to_survey(self.scene.arm, self.robot.arm_joints)
        self._start_trajectory(trajectory)
        self._transition(Phase.ARM_SURVEY, "seated")
        return RobotCommand()

    def _start_trajectory(self, trajectory: Trajectory):
        self.grasp_trajectory = trajectory
        self.trajectory_started = self.sim_time

    def _trajectory_command(self) -> tuple[RobotCommand, bool]:
        traj = self.grasp_trajectory
        t = self.sim_time - self.trajectory_started + self.dt
        target = traj.sample(t)
        finished = t >= traj.duration and np.allclose(
            self.robot.arm_joints.as_array(), traj.waypoints[-1][0].as_array(), atol=1e-6
        )
        return RobotCommand(arm_target=target), finished

    def _tick_arm_survey(self) -> RobotCommand:
        command, finished = self._trajectory_command()
        command = replace(command, gripper_target=self.scene.arm.gripper_max_opening)
        if finished:
            self.grasp_trajectory = None
            self._gripper_frame()  # publish a fresh view for the operator
            self._transition(Phase.AWAIT_GRASP_SELECTION, "survey-pose-reached")
            return RobotCommand()
        return command

    def _grasp_failure(self, status: str, detail: str, object_class: str | None):
        self.strikes += 1
        self._record_trial(status, object_class)
        self._warn(detail)
        if self.strikes >= MAX_STRIKES:
            self._fault(f"{self.strikes} consecutive grasp failures: {detail}")
        elif self.phase == Phase.GRASPING:
            # raise the arm back to the selection vantage before waiting
            self._start_trajectory(raise_to_survey(self.scene.arm, self.robot.arm_joints))
            self._transition(Phase.ARM_SURVEY, f"{status}-retry")
        else:
            self._transition(Phase.AWAIT_GRASP_SELECTION, f"{status}-retry")

    def _record_trial(self, status: str, object_class: str | None):
        self.trial_counter += 1
        position = (0.0, 0.0)
        if self.tracked_object is not None:
            try:
                obj = self.scene.object_by_id(self.tracked_object)
                position = worldsim.object_position_in_base(self.robot, obj)
            except KeyError:
                pass
        self.metrics.append(
            MetricsRecord(
                trial=self.trial_counter,
                object_class=object_class or "unknown",
                method=self.selection_method or "click",
                duration=round(self.sim_time - self.mission_started, 6),
                status=status,
                final_position=position,
            )
        )

    def _tick_planning(self) -> RobotCommand:
        sel = self.grasp_selection
        target_class = sel.target_class if sel else None
        try:
            frame = self._gripper_frame()
            camera_pose = worldsim.gripper_camera_in_arm_base(self.scene, self.robot)
            gi = perception.capture_grasp_input(frame, sel, camera_pose)
            cloud = perception.mask_cloud(gi)
            sampler_cfg = grasp_mod.SamplerConfig(
                max_opening=self.scene.arm.gripper_max_opening,
                seed=int(self.rng.integers(2**31)),
            )
            grasp_set = grasp_mod.generate_candidates(cloud, sampler_cfg)
            chosen = grasp_mod.select_executable(
                grasp_set, camera_pose, self.scene.arm,
                standoff=self.scene.arm.pregrasp_standoff,
            )
            trajectory = manipulation_plan(self.scene, self.robot, chosen)
        except (
            perception.SelectionNotConfirmed,
            perception.EmptyMask,
            grasp_mod.NoCandidates,
            grasp_mod.NoFeasibleGrasp,
            Unreachable,
            JointLimitViolation,
        ) as exc:
            self._grasp_failure("fail-plan", f"grasp planning failed: {exc}", target_class)
            return RobotCommand()
        self.selected_grasp = chosen
        self.tracked_object = gi.target_object_id or self.tracked_object
        self._start_trajectory(trajectory)
        self._transition(Phase.GRASPING, "grasp-planned")
        return RobotCommand()

    def _tick_grasping(self) -> RobotCommand:
        command, finished = self._trajectory_command()
        if not finished:
            return replace(command, gripper_target=self.scene.arm.gripper_max_opening)
        target_class = self.grasp_selection.target_class if self.grasp_selection else None
        self.grasp_position_base = None
        try:
            outcome, self.robot = manipulation.execute_grasp(
                self.scene, self.robot, self.selected_grasp.pose, self.selected_grasp.width
            )
        except (manipulation.GripperOccupied, manipulation.InfeasiblePose) as exc:
            self._grasp_failure("fail-plan", str(exc), target_class)
            return RobotCommand()
        if not outcome.succeeded:
            self._grasp_failure(outcome.status, outcome.detail, target_class)
            return RobotCommand()
        self._record_trial("success", target_class)
        self.strikes = 0
        try:
            path = self._plan_to(self.scene.home_pose[:2])
        except (nav.NoPath, nav.CellOccupied) as exc:
            self._fault(f"cannot plan the return leg: {exc}")
            return RobotCommand()
        self.path_world = path
        self.robot = replace(self.robot, posture=Posture.STANDING)
        self._start_trajectory(raise_to_survey(self.scene.arm, self.robot.arm_joints))
        self._transition(Phase.RETURNING, "grasp-success")
        return RobotCommand()

    def _tick_returning(self) -> RobotCommand:
        command, done = self._follow_with_recovery(self.scene.home_pose[:2])
        if self.grasp_trajectory is not None:
            arm_command, finished = self._trajectory_command()
            command = replace(command, arm_target=arm_command.arm_target)
            if finished:
                self.grasp_trajectory = None
        if done:
            self._transition(Phase.PLACING, "home-reached")
            return RobotCommand()
        return command

    def _tick_placing(self) -> RobotCommand:
        target = self.scene.place_target
        x, y, heading = self.robot.base
        bearing = math.remainder(math.atan2(target[1] - y, target[0] - x) - heading, math.tau)
        if abs(bearing) > PLACE_BEARING_TOL:
            omega = max(-self.scene.nav.omega_max, min(self.scene.nav.omega_max, 2.0 * bearing))
            return RobotCommand(omega=omega)
        if self.robot.posture != Posture.SITTING:
            return RobotCommand(posture=Posture.SITTING)
        try:
            self.robot = manipulation.place(self.scene, self.robot, target)
        except (manipulation.NothingHeld, Unreachable) as exc:
            self._fault(f"place failed: {exc}")
            return RobotCommand()
        self._transition(Phase.DONE, "placed")
        return RobotCommand()

    # -- status --------------------------------------------------------------

    _DETAILS = {
        Phase.IDLE: "idle, awaiting a destination",
        Phase.NAVIGATE_TO_ROOM: "navigating to {room}",
        Phase.SCANNING: "scanning for objects",
        Phase.AWAIT_APPROACH_SELECTION: "scan complete, awaiting target selection",
        Phase.APPROACHING: "tracking target and approaching",
        Phase.SITTING: "settling into the seated posture",
        Phase.ARM_SURVEY: "raising arm to the survey pose",
        Phase.AWAIT_GRASP_SELECTION: "awaiting grasp selection on the gripper view",
        Phase.AWAIT_DRAG_CONFIRM: "awaiting drag confirmation",
        Phase.PLANNING: "planning the grasp",
        Phase.GRASPING: "grasping the selected object",
        Phase.RETURNING: "returning to the start point",
        Phase.PLACING: "placing the object",
        Phase.DONE: "mission complete",
        Phase.FAULTED: "faulted",
    }

    def current_room(self) -> str | None:
        x, y, _ = self.robot.base
        best, best_d = None, math.inf
        for room in self.scene.rooms:
            d = math.hypot(room.scan_center[0] - x, room.scan_center[1] - y)
            if d < best_d:
                best, best_d = room.name, d
        return best if best_d < 2.0 else None

    def status(self) -> MissionStatus:
        detail = self._DETAILS[self.phase].format(room=self.target_room)
        if self.phase == Phase.FAULTED and self.fault_reason:
            detail = f"faulted: {self.fault_reason}"
        return MissionStatus(
            phase=self.phase.value,
            detail=detail,
            sim_time=round(self.sim_time, 6),
            tick=self.tick_index,
            location=tuple(round(v, 6) for v in self.robot.base),
            room=self.current_room(),
            target_room=self.target_room,
            tracked_object=self.tracked_object,
            held_object=self.robot.held_object,
            detection_enabled=self.detection_enabled,
            warning=self.warning,
            fault_reason=self.fault_reason,
            awaiting_confirmation=self.phase == Phase.AWAIT_DRAG_CONFIRM,
        )

    def display_frame(self, camera: str) -> SensorFrame:
        """Noise-free render for operator display; never consumes the
        mission RNG, so broadcasting cannot perturb replays."""
        return worldsim.render(self.scene, self.robot, camera, self.tick_index, rng=None)


def manipulation_plan(scene: WorldScene, robot: RobotState, chosen: grasp_mod.GraspCandidate) -> Trajectory:
    """Joint trajectory from the current pose through the pre-grasp standoff."""
    from .arm import plan_trajectory

    goal = ik(scene.arm, chosen.pose)
    return plan_trajectory(scene.arm, robot.arm_joints, goal)
