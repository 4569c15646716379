"""Shape primitives and their analytic geometry.

All functions work in the shape's local frame: origin at the centroid,
cylinder axis along +z, box edges along the axes.  Callers transform
rays/points into the local frame first.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_INF = np.inf


@dataclass(frozen=True)
class Box:
    kind = "box"
    size: tuple[float, float, float]  # w, d, h (meters)

    def __post_init__(self):
        if min(self.size) <= 0:
            raise ValueError("box dimensions must be positive")


@dataclass(frozen=True)
class Sphere:
    kind = "sphere"
    radius: float

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("sphere radius must be positive")


@dataclass(frozen=True)
class Cylinder:
    kind = "cylinder"
    radius: float
    height: float

    def __post_init__(self):
        if self.radius <= 0 or self.height <= 0:
            raise ValueError("cylinder dimensions must be positive")


Shape = Box | Sphere | Cylinder


def half_extents(shape: Shape) -> np.ndarray:
    """Axis-aligned half extents of the local bounding box."""
    if isinstance(shape, Box):
        return np.asarray(shape.size) / 2.0
    if isinstance(shape, Sphere):
        return np.full(3, shape.radius)
    return np.array([shape.radius, shape.radius, shape.height / 2.0])


def bounding_radius(shape: Shape) -> float:
    return float(np.linalg.norm(half_extents(shape)))


def contains(shape: Shape, p: np.ndarray, margin: float = 0.0) -> bool:
    """Point-inside test in the local frame, inflated by ``margin``."""
    p = np.asarray(p)
    if isinstance(shape, Box):
        return bool(np.all(np.abs(p) <= half_extents(shape) + margin))
    if isinstance(shape, Sphere):
        return bool(p @ p <= (shape.radius + margin) ** 2)
    return bool(
        p[0] ** 2 + p[1] ** 2 <= (shape.radius + margin) ** 2
        and abs(p[2]) <= shape.height / 2.0 + margin
    )


def support_width(shape: Shape, axis: np.ndarray) -> float:
    """Extent of the shape measured along a unit axis (local frame)."""
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    if isinstance(shape, Box):
        return float(np.abs(axis) @ np.asarray(shape.size))
    if isinstance(shape, Sphere):
        return 2.0 * shape.radius
    ca = abs(axis[2])
    sa = float(np.sqrt(max(0.0, 1.0 - ca * ca)))
    return shape.height * ca + 2.0 * shape.radius * sa


def grasp_midpoint_distance(shape: Shape, p: np.ndarray) -> float:
    """Distance from a local point to the nearest antipodal-pair midpoint.

    Antipodal two-finger grasps close through the middle of the shape:
    the sphere's midpoints collapse to its center, a box's to its three
    central cross-sections, a cylinder's to its axis segment plus the
    central disc.
    """
    p = np.asarray(p, dtype=np.float64)
    if isinstance(shape, Sphere):
        return float(np.linalg.norm(p))
    if isinstance(shape, Box):
        h = half_extents(shape)
        best = _INF
        for axis in range(3):
            q = p.copy()
            q[axis] = 0.0
            others = [i for i in range(3) if i != axis]
            q[others] = np.clip(q[others], -h[others], h[others])
            best = min(best, float(np.linalg.norm(p - q)))
        return best
    # cylinder: axis segment, then central disc
    hz = shape.height / 2.0
    axis_pt = np.array([0.0, 0.0, np.clip(p[2], -hz, hz)])
    d_axis = float(np.linalg.norm(p - axis_pt))
    radial = np.linalg.norm(p[:2])
    disc_xy = p[:2] if radial <= shape.radius else p[:2] * (shape.radius / radial)
    d_disc = float(np.linalg.norm(p - np.array([disc_xy[0], disc_xy[1], 0.0])))
    return min(d_axis, d_disc)


def off_center_fraction(shape: Shape, p: np.ndarray) -> float:
    """Grasp offset toward the object's far edge, as a fraction of the
    long-axis half-extent.

    The long axis is the lever that makes a heavy object rotate out of
    the fingers; lateral misses are already bounded by the grasp-axis
    tolerance.
    """
    p = np.asarray(p, dtype=np.float64)
    if isinstance(shape, Sphere):
        return float(np.linalg.norm(p)) / shape.radius
    if isinstance(shape, Cylinder):
        if shape.height >= 2.0 * shape.radius:
            return abs(float(p[2])) / (shape.height / 2.0)
        return float(np.linalg.norm(p[:2])) / shape.radius
    h = half_extents(shape)
    axis = int(np.argmax(h))
    return abs(float(p[axis])) / h[axis]


def grasp_axis_offset(
    shape: Shape, point: np.ndarray, axis: np.ndarray, half_travel: float = 0.05
) -> tuple[float, np.ndarray]:
    """Offset of a closing line from the antipodal-midpoint set.

    Fingers slide along the closing axis as they shut, so the grasp is
    judged by the line through ``point`` along ``axis`` (local frame):
    returns the minimum distance from that line to the midpoint set and
    the line point achieving it.
    """
    point = np.asarray(point, dtype=np.float64)
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    if isinstance(shape, Sphere):
        along = -(point @ axis)
        closest = point + np.clip(along, -half_travel, half_travel) * axis
        return float(np.linalg.norm(closest)), closest
    ts = np.linspace(-half_travel, half_travel, 401)
    candidates = point[None, :] + ts[:, None] * axis
    dists = np.array([grasp_midpoint_distance(shape, p) for p in candidates])
    dmin = dists.min()
    # ties along the line (e.g. a chord across a central plane): fingers
    # settle symmetrically, so take the most central contact
    tied = np.nonzero(dists <= dmin + 1e-9)[0]
    best = tied[np.linalg.norm(candidates[tied], axis=1).argmin()]
    return float(dists[best]), candidates[best]


def ray_hits(shape: Shape, origin: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    """First-hit ray parameters for rays ``origin + t * dirs`` (local frame).

    ``dirs`` is (N, 3), not necessarily normalized; returns t per ray,
    ``inf`` where the ray misses.  Only t > 1e-9 counts as a hit.
    """
    origin = np.asarray(origin, dtype=np.float64)
    dirs = np.asarray(dirs, dtype=np.float64)
    if isinstance(shape, Sphere):
        return _ray_sphere(shape.radius, origin, dirs)
    if isinstance(shape, Box):
        return _ray_box(half_extents(shape), origin, dirs)
    return _ray_cylinder(shape.radius, shape.height / 2.0, origin, dirs)


def _ray_sphere(radius, origin, dirs):
    a = np.einsum("ij,ij->i", dirs, dirs)
    b = 2.0 * dirs @ origin
    c = origin @ origin - radius * radius
    disc = b * b - 4.0 * a * c
    t = np.full(len(dirs), _INF)
    ok = disc >= 0.0
    sq = np.sqrt(np.where(ok, disc, 0.0))
    t0 = (-b - sq) / (2.0 * a)
    t1 = (-b + sq) / (2.0 * a)
    near = np.where(t0 > 1e-9, t0, np.where(t1 > 1e-9, t1, _INF))
    t[ok] = near[ok]
    return t


def _ray_box(h, origin, dirs):
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / dirs
        tlo = (-h - origin) * inv
        thi = (h - origin) * inv
    tmin = np.minimum(tlo, thi)
    tmax = np.maximum(tlo, thi)
    # rays parallel to a slab: inside keeps (-inf, inf), outside misses
    par = np.abs(dirs) < 1e-15
    inside = np.abs(origin) <= h
    tmin = np.where(par, np.where(inside, -_INF, _INF), tmin)
    tmax = np.where(par, np.where(inside, _INF, -_INF), tmax)
    enter = tmin.max(axis=1)
    leave = tmax.min(axis=1)
    hit = (leave >= np.maximum(enter, 0.0)) & (leave > 1e-9)
    t = np.where(enter > 1e-9, enter, leave)
    return np.where(hit, t, _INF)


def _ray_cylinder(radius, hz, origin, dirs):
    n = len(dirs)
    best = np.full(n, _INF)
    # curved side
    a = dirs[:, 0] ** 2 + dirs[:, 1] ** 2
    b = 2.0 * (origin[0] * dirs[:, 0] + origin[1] * dirs[:, 1])
    c = origin[0] ** 2 + origin[1] ** 2 - radius * radius
    disc = b * b - 4.0 * a * c
    ok = (disc >= 0.0) & (a > 1e-15)
    sq = np.sqrt(np.where(ok, disc, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        for sign in (-1.0, 1.0):
            t = (-b + sign * sq) / (2.0 * a)
            z = origin[2] + t * dirs[:, 2]
            cand = ok & (t > 1e-9) & (np.abs(z) <= hz)
            best = np.where(cand & (t < best), t, best)
    # caps
    with np.errstate(divide="ignore", invalid="ignore"):
        for zcap in (-hz, hz):
            t = (zcap - origin[2]) / dirs[:, 2]
            x = origin[0] + t * dirs[:, 0]
            y = origin[1] + t * dirs[:, 1]
            cand = (np.abs(dirs[:, 2]) > 1e-15) & (t > 1e-9) & (x * x + y * y <= radius * radius)
            best = np.where(cand & (t < best), t, best)
    return best
