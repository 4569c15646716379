"""Waypoint navigation, circular scan, and PID visual-servo approach.

The approach controller steers on tracker feedback: the angular channel
servos the image-space x error (normalized by image width) toward a
small rightward bias so the object settles front-right of the robot,
and the linear channel servos the tracked distance toward the
configured stop distance.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

from .geometry import CameraIntrinsics
from .scene import OccupancyGrid, RobotCommand, RobotState


class NoPath(RuntimeError):
    pass


class CellOccupied(ValueError):
    pass


@dataclass(frozen=True)
class PidGains:
    kp: float
    ki: float = 0.0
    kd: float = 0.0
    integral_clamp: float = 1.0
    saturation: float = 1.0

    def __post_init__(self):
        if min(self.kp, self.ki, self.kd) < 0:
            raise ValueError("PID gains must be non-negative")
        if self.saturation <= 0 or self.integral_clamp <= 0:
            raise ValueError("saturation and integral clamp must be positive")


@dataclass
class PidState:
    integral: float = 0.0
    prev_error: float | None = None

    def reset(self):
        self.integral = 0.0
        self.prev_error = None


def pid_step(gains: PidGains, state: PidState, error: float, dt: float) -> float:
    state.integral += error * dt
    state.integral = max(-gains.integral_clamp, min(gains.integral_clamp, state.integral))
    derivative = 0.0 if state.prev_error is None else (error - state.prev_error) / dt
    state.prev_error = error
    out = gains.kp * error + gains.ki * state.integral + gains.kd * derivative
    return max(-gains.saturation, min(gains.saturation, out))


@dataclass(frozen=True)
class ApproachTarget:
    stop_distance: float = 0.28
    lateral_offset: float = 0.10
    tolerance: float = 0.02

    def __post_init__(self):
        if self.stop_distance <= 0 or self.tolerance <= 0:
            raise ValueError("stop_distance and tolerance must be positive")


@dataclass(frozen=True)
class NavConfig:
    linear: PidGains = PidGains(kp=0.8, ki=0.05, kd=0.1, integral_clamp=0.5, saturation=0.5)
    angular: PidGains = PidGains(kp=1.2, ki=0.0, kd=0.2, integral_clamp=0.5, saturation=1.2)
    approach: ApproachTarget = ApproachTarget()
    lookahead: float = 0.35
    goal_tolerance: float = 0.15
    scan_period: float = 12.0
    arrive_px_threshold: float = 14.0
    arrive_debounce_ticks: int = 10

    @property
    def v_max(self) -> float:
        return self.linear.saturation

    @property
    def omega_max(self) -> float:
        return self.angular.saturation


def _wrap_angle(a: float) -> float:
    return math.remainder(a, math.tau)


_SQRT2 = math.sqrt(2.0)
_NEIGHBORS = [
    (1, 0, 1.0), (-1, 0, 1.0), (0, 1, 1.0), (0, -1, 1.0),
    (1, 1, _SQRT2), (1, -1, _SQRT2), (-1, 1, _SQRT2), (-1, -1, _SQRT2),
]


def plan_path(grid: OccupancyGrid, start: tuple[int, int], goal: tuple[int, int]) -> list[tuple[int, int]]:
    """8-connected A* with Euclidean heuristic and sqrt(2) diagonal cost.

    Diagonal steps are disallowed when they would cut a corner (both
    orthogonal neighbors of the step must be free).
    """
    for name, cell in (("start", start), ("goal", goal)):
        if not grid.is_free(cell):
            raise CellOccupied(f"{name} cell {cell} is occupied or out of bounds")
    if start == goal:
        return [start]

    def heuristic(c):
        return math.hypot(c[0] - goal[0], c[1] - goal[1])

    open_heap = [(heuristic(start), 0.0, start)]
    g_cost = {start: 0.0}
    came_from: dict[tuple[int, int], tuple[int, int]] = {}
    closed = set()
    while open_heap:
        _, g, cell = heapq.heappop(open_heap)
        if cell in closed:
            continue
        if cell == goal:
            path = [cell]
            while cell in came_from:
                cell = came_from[cell]
                path.append(cell)
            return path[::-1]
        closed.add(cell)
        for dx, dy, cost in _NEIGHBORS:
            nxt = (cell[0] + dx, cell[1] + dy)
            if not grid.is_free(nxt):
                continue
            if dx and dy and not (grid.is_free((cell[0] + dx, cell[1])) and grid.is_free((cell[0], cell[1] + dy))):
                continue
            ng = g + cost
            if ng < g_cost.get(nxt, math.inf) - 1e-12:
                g_cost[nxt] = ng
                came_from[nxt] = cell
                heapq.heappush(open_heap, (ng + heuristic(nxt), ng, nxt))
    raise NoPath(f"no path from {start} to {goal}")


def path_cost(path: list[tuple[int, int]]) -> float:
    return sum(
        math.hypot(b[0] - a[0], b[1] - a[1]) for a, b in zip(path, path[1:])
    )


def line_of_sight(grid: OccupancyGrid, a, b) -> bool:
    """Straight segment a-b stays in free cells (sampled at half-cell steps)."""
    ax, ay = a
    bx, by = b
    length = math.hypot(bx - ax, by - ay)
    steps = max(2, int(length / (grid.resolution / 2.0)) + 1)
    for i in range(steps + 1):
        s = i / steps
        if not grid.position_free((ax + s * (bx - ax), ay + s * (by - ay))):
            return False
    return True


def follow_path(
    robot: RobotState,
    path: list[tuple[float, float]],
    cfg: NavConfig,
    dt: float,
    grid: OccupancyGrid | None = None,
) -> tuple[RobotCommand, bool]:
    """Pure-pursuit step toward the furthest path point within lookahead.

    ``path`` holds world coordinates.  With a grid, the chase point must
    also be line-of-sight visible so doorway corners are not cut.
    Returns (command, done); done is True (with a zero command) once
    within goal tolerance of the last point.
    """
    if not path:
        raise ValueError("follow_path needs a non-empty path")
    x, y, heading = robot.base
    gx, gy = path[-1]
    if math.hypot(gx - x, gy - y) <= cfg.goal_tolerance:
        return RobotCommand(), True
    target = None
    for px, py in reversed(path):
        if math.hypot(px - x, py - y) <= cfg.lookahead and (
            grid is None or line_of_sight(grid, (x, y), (px, py))
        ):
            target = (px, py)
            break
    if target is None:
        # nothing suitable within lookahead: chase the nearest point
        target = min(path, key=lambda p: math.hypot(p[0] - x, p[1] - y))
        if math.hypot(target[0] - x, target[1] - y) < 1e-9:
            idx = path.index(target)
            target = path[min(idx + 1, len(path) - 1)]
    bearing = _wrap_angle(math.atan2(target[1] - y, target[0] - x) - heading)
    omega = max(-cfg.omega_max, min(cfg.omega_max, 2.0 * bearing))
    v = cfg.v_max * max(0.0, math.cos(bearing))
    if abs(bearing) > math.pi / 3:
        v = 0.0  # turn in place when badly misaligned
    return RobotCommand(v=v, omega=omega), False


def scan_step(cfg: NavConfig) -> RobotCommand:
    """Rotate in place; one revolution per configured scan period."""
    return RobotCommand(v=0.0, omega=math.tau / cfg.scan_period)


@dataclass
class ApproachState:
    """Mutable controller state owned by the mission loop."""

    linear: PidState = field(default_factory=PidState)
    angular: PidState = field(default_factory=PidState)
    settled_ticks: int = 0

    def reset(self):
        self.linear.reset()
        self.angular.reset()
        self.settled_ticks = 0


def approach_bias_px(target: ApproachTarget, intrinsics: CameraIntrinsics, distance: float) -> float:
    """Pixel offset that keeps the object right-of-center by the lateral offset."""
    return intrinsics.fx * target.lateral_offset / max(distance, target.stop_distance)


def approach_step(
    state: ApproachState,
    x_error_px: float,
    distance: float,
    target: ApproachTarget,
    cfg: NavConfig,
    intrinsics: CameraIntrinsics,
    dt: float,
) -> tuple[RobotCommand, bool]:
    """One visual-servo step; returns (command, arrived).

    Positive x error means the object sits right of image center; the
    robot turns right (negative omega, z-up heading convention).
    Arrival requires both errors inside their windows for
    ``cfg.arrive_debounce_ticks`` consecutive ticks.
    """
    bias = approach_bias_px(target, intrinsics, distance)
    steer_err_px = x_error_px - bias
    omega = -pid_step(cfg.angular, state.angular, steer_err_px / intrinsics.width, dt)
    v = pid_step(cfg.linear, state.linear, distance - target.stop_distance, dt)
    settled = (
        abs(distance - target.stop_distance) < target.tolerance
        and abs(steer_err_px) < cfg.arrive_px_threshold
    )
    state.settled_ticks = state.settled_ticks + 1 if settled else 0
    if state.settled_ticks >= cfg.arrive_debounce_ticks:
        return RobotCommand(), True
    return RobotCommand(v=v, omega=omega), False
