"""Rigid-body transforms, pinhole camera model, and depth back-projection.

Conventions used across the package:

* ``Pose3`` stores rotation as a 3x3 orthonormal matrix; quaternions are
  accepted only at file/wire boundaries and converted on the way in.
* Camera frames are standard pinhole: +z forward (optical axis),
  +x right, +y down.  Depth images hold the camera-frame z coordinate
  in meters, with 0.0 marking invalid pixels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class DimensionMismatch(ValueError):
    """Image dimensions do not match the camera intrinsics."""


ORTHONORMAL_TOL = 1e-9


def _as_rotation(m) -> np.ndarray:
    r = np.asarray(m, dtype=np.float64)
    if r.shape != (3, 3):
        raise ValueError(f"rotation must be 3x3, got {r.shape}")
    err = np.abs(r.T @ r - np.eye(3)).max()
    if err > 1e-6:
        raise ValueError(f"rotation not orthonormal (max error {err:.2e})")
    if abs(np.linalg.det(r) - 1.0) > 1e-6:
        raise ValueError("rotation determinant is not +1")
    return r


@dataclass(frozen=True)
class Pose3:
    """Rigid transform: ``p_out = rotation @ p_in + translation`` (meters)."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "rotation", _as_rotation(self.rotation))
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if not np.all(np.isfinite(t)):
            raise ValueError("translation has non-finite components")
        t.flags.writeable = False
        self.rotation.flags.writeable = False
        object.__setattr__(self, "translation", t)

    @staticmethod
    def identity() -> "Pose3":
        return Pose3()

    @staticmethod
    def from_quat(qx: float, qy: float, qz: float, qw: float, translation=(0.0, 0.0, 0.0)) -> "Pose3":
        """Build from a unit quaternion (x, y, z, w), the wire-format rotation."""
        n = math.sqrt(qx * qx + qy * qy + qz * qz + qw * qw)
        if n < 1e-12:
            raise ValueError("zero-norm quaternion")
        x, y, z, w = qx / n, qy / n, qz / n, qw / n
        r = np.array(
            [
                [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
                [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
                [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
            ]
        )
        return Pose3(r, translation)

    def matrix(self) -> np.ndarray:
        """4x4 homogeneous form."""
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m


def rot_x(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def compose(a: Pose3, b: Pose3) -> Pose3:
    """Chain two transforms: ``transform_point(compose(a, b), v)`` applies b, then a."""
    return Pose3(a.rotation @ b.rotation, a.rotation @ b.translation + a.translation)


def inverse(p: Pose3) -> Pose3:
    rt = p.rotation.T
    return Pose3(rt, -rt @ p.translation)


def transform_point(p: Pose3, v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    return p.rotation @ v + p.translation


def transform_points(p: Pose3, pts: np.ndarray) -> np.ndarray:
    """Apply a pose to an (N, 3) array of points."""
    pts = np.asarray(pts, dtype=np.float64)
    return pts @ p.rotation.T + p.translation


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole parameters: focal lengths and principal point in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width) or not (0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")


@dataclass(frozen=True)
class PointCloud:
    """Camera-frame points (N, 3); optional per-point object labels and normals.

    Labels carry the simulator's ground-truth object ids when the cloud
    came from a rendered frame; normals are attached by synthetic test
    fixtures so samplers can skip estimation.
    """

    points: np.ndarray
    labels: list[str] | None = None
    normals: np.ndarray | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        if not np.all(np.isfinite(pts)):
            raise ValueError("point cloud has non-finite coordinates")
        object.__setattr__(self, "points", pts)
        if self.labels is not None and len(self.labels) != len(pts):
            raise ValueError("labels length must match point count")
        if self.normals is not None:
            nrm = np.asarray(self.normals, dtype=np.float64).reshape(-1, 3)
            if len(nrm) != len(pts):
                raise ValueError("normals length must match point count")
            object.__setattr__(self, "normals", nrm)

    def __len__(self) -> int:
        return len(self.points)


def backproject(depth_image: np.ndarray, k: CameraIntrinsics, labels: np.ndarray | None = None) -> PointCloud:
    """Lift a depth image to a camera-frame point cloud.

    Pixels with depth 0.0 (the invalid sentinel) are skipped.  When a
    label image of the same shape is given, per-point object ids are
    carried along.

    Raises:
        DimensionMismatch: image shape differs from ``k.height x k.width``.
    """
    depth = np.asarray(depth_image, dtype=np.float64)
    if depth.shape != (k.height, k.width):
        raise DimensionMismatch(
            f"depth image is {depth.shape}, intrinsics expect {(k.height, k.width)}"
        )
    vs, us = np.nonzero(depth > 0.0)
    d = depth[vs, us]
    x = (us - k.cx) * d / k.fx
    y = (vs - k.cy) * d / k.fy
    pts = np.stack([x, y, d], axis=1)
    point_labels = None
    if labels is not None:
        lab = np.asarray(labels)
        if lab.shape != depth.shape:
            raise DimensionMismatch("label image shape differs from depth image")
        point_labels = [str(v) for v in lab[vs, us]]
    return PointCloud(pts, point_labels)
