"""Grasp candidate generation and the three-stage selection filter.

Candidates follow the provider contract: a 6-DOF pose in the camera
frame whose local +x is the approach axis and +y the finger closing
axis, plus a gripper width and a confidence score in [0, 1].

The reference provider is a geometric antipodal sampler.  It draws
random point pairs with opposing surface normals and a separation the
gripper can span.  A single depth view of a convex object never shows
two opposing faces of a box, so when the observed surface yields too
few pairs the sampler retries on a symmetry-completed cloud (the view
reflected through its centroid) — the stand-in for the shape priors a
learned grasp network brings to partial views.

The filter then runs in three stages: keep the top 20 by score, rank
by distance to the object centroid, and project the winner's
orientation onto the 4-DOF arm's reachable yaw-pitch manifold.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .arm import ArmModel, is_reachable
from .geometry import CameraIntrinsics, PointCloud, Pose3, compose, rot_y, rot_z


class NoCandidates(RuntimeError):
    pass


class OrientationCollapse(RuntimeError):
    """Approach axis too close to vertical to orient; try the next candidate."""


class NoFeasibleGrasp(RuntimeError):
    pass


@dataclass(frozen=True)
class GraspCandidate:
    pose: Pose3  # camera frame; +x approach, +y closing
    width: float
    score: float

    def __post_init__(self):
        if self.width <= 0:
            raise ValueError("width must be positive")
        if not 0.0 <= self.score <= 1.0:
            raise ValueError("score must be in [0, 1]")


@dataclass(frozen=True)
class GraspSet:
    candidates: tuple[GraspCandidate, ...]
    source: str
    object_centroid_camera: np.ndarray  # arithmetic mean of the masked cloud
    center_estimate: np.ndarray | None = None  # de-biased center, when computable

    def __post_init__(self):
        object.__setattr__(
            self,
            "object_centroid_camera",
            np.asarray(self.object_centroid_camera, dtype=np.float64).reshape(3),
        )
        if self.center_estimate is not None:
            object.__setattr__(
                self,
                "center_estimate",
                np.asarray(self.center_estimate, dtype=np.float64).reshape(3),
            )

    @property
    def reference_center(self) -> np.ndarray:
        """Center used for distance ranking.

        The raw visible-surface centroid sits well toward the camera (a
        single view only sees the near side), which would bias ranking
        toward grasps above the object.  The silhouette-rim estimate
        removes that bias; sets built without one fall back to the
        centroid.
        """
        return self.center_estimate if self.center_estimate is not None else self.object_centroid_camera


@dataclass(frozen=True)
class SamplerConfig:
    max_opening: float = 0.07
    seed: int = 0
    max_candidates: int = 256
    min_points: int = 30
    antipodal_dot: float = -0.8
    align_cos: float = 0.75  # contact normals must oppose along the pair line
    min_separation: float = 0.008  # gripper can't pinch thinner than this
    max_pairs: int = 6000
    knn: int = 16


def estimate_normals(points: np.ndarray, knn: int = 10) -> tuple[np.ndarray, np.ndarray]:
    """k-NN plane-fit normals oriented toward the camera, plus planarity.

    Planarity is 1 - 3*lambda_min/trace of the neighborhood covariance:
    1.0 on a perfect plane, falling toward 0 in isotropic clutter.
    """
    points = np.asarray(points, dtype=np.float64)
    k = min(knn, len(points))
    tree = cKDTree(points)
    _, idx = tree.query(points, k=k)
    if k == 1:
        idx = idx[:, None]
    neighborhoods = points[idx]  # (n, k, 3)
    centered = neighborhoods - neighborhoods.mean(axis=1, keepdims=True)
    cov = np.einsum("nki,nkj->nij", centered, centered) / max(k - 1, 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    normals = eigvecs[:, :, 0]
    trace = eigvals.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        planarity = np.where(trace > 1e-18, 1.0 - 3.0 * eigvals[:, 0] / trace, 0.0)
    # orient toward the camera at the origin: visible surfaces face it
    flip = np.einsum("ij,ij->i", normals, points) > 0.0
    normals[flip] = -normals[flip]
    return normals, np.clip(planarity, 0.0, 1.0)


def estimate_center(points: np.ndarray, normals: np.ndarray | None = None) -> np.ndarray:
    """Model-free object-center estimate from the silhouette rim.

    On a convex body the silhouette lies on a section through the
    middle of the object, so the mean of the rim points is nearly
    unbiased along the view direction, unlike the visible-surface
    centroid, which hugs the camera-facing side.  Rim points are the
    convex-hull vertices of the cloud's angular footprint (x/z, y/z).
    """
    from scipy.spatial import ConvexHull, QhullError

    footprint = points[:, :2] / points[:, 2:3]
    try:
        hull = ConvexHull(footprint)
    except (QhullError, ValueError):
        return points.mean(axis=0)
    ring = points[hull.vertices]
    # bounding-box midpoint of the rim ring: immune to uneven sampling
    # density around the silhouette
    return (ring.min(axis=0) + ring.max(axis=0)) / 2.0


def _approach_axis(
    midpoint: np.ndarray,
    closing: np.ndarray,
    tree: cKDTree,
    normals: np.ndarray,
    knn: int,
) -> np.ndarray:
    """Outward-robust approach: negative mean normal of the surface
    around the midpoint, re-orthogonalized against the closing axis."""
    _, idx = tree.query(midpoint, k=min(knn, tree.n))
    mean_normal = normals[np.atleast_1d(idx)].mean(axis=0)
    axis = -mean_normal
    axis -= (axis @ closing) * closing
    norm = np.linalg.norm(axis)
    if norm < 1e-8:
        axis = np.array([0.0, 0.0, 1.0])  # camera forward
        axis -= (axis @ closing) * closing
        norm = np.linalg.norm(axis)
        if norm < 1e-8:
            axis = np.array([1.0, 0.0, 0.0])
            axis -= (axis @ closing) * closing
            norm = np.linalg.norm(axis)
    return axis / norm


def _sample_pairs(
    points: np.ndarray,
    normals: np.ndarray,
    planarity: np.ndarray,
    tree: cKDTree,
    real_normals: np.ndarray,
    rng: np.random.Generator,
    cfg: SamplerConfig,
) -> list[GraspCandidate]:
    n = len(points)
    ii = rng.integers(0, n, size=cfg.max_pairs)
    jj = rng.integers(0, n, size=cfg.max_pairs)
    candidates: list[GraspCandidate] = []
    for i, j in zip(ii, jj):
        if i == j:
            continue
        p1, p2 = points[i], points[j]
        gap = p2 - p1
        separation = float(np.linalg.norm(gap))
        if not (cfg.min_separation <= separation <= cfg.max_opening):
            continue
        dot = float(normals[i] @ normals[j])
        if dot >= cfg.antipodal_dot:
            continue
        closing = gap / separation
        # force closure: the normals must oppose along the pair line,
        # which rejects noise-induced pairs between neighboring points
        if normals[i] @ closing > -cfg.align_cos or normals[j] @ closing < cfg.align_cos:
            continue
        midpoint = (p1 + p2) / 2.0
        approach = _approach_axis(midpoint, closing, tree, real_normals, cfg.knn)
        rotation = np.column_stack([approach, closing, np.cross(approach, closing)])
        antipodality = min(1.0, (-dot + cfg.antipodal_dot) / (1.0 + cfg.antipodal_dot))
        flatness = float((planarity[i] + planarity[j]) / 2.0)
        width_margin = 1.0 - separation / cfg.max_opening
        score = float(np.clip(0.5 * antipodality + 0.3 * flatness + 0.2 * width_margin, 0.0, 1.0))
        candidates.append(
            GraspCandidate(pose=Pose3(rotation, midpoint), width=separation, score=score)
        )
        if len(candidates) >= cfg.max_candidates:
            break
    return candidates


def generate_candidates(cloud: PointCloud, cfg: SamplerConfig = SamplerConfig()) -> GraspSet:
    """Sample antipodal grasp candidates from a masked cloud.

    Deterministic given (cloud, cfg.seed).

    Raises:
        NoCandidates: cloud too sparse (< cfg.min_points) or no valid
            pairs even after symmetry completion.
    """
    points = cloud.points
    if len(points) < cfg.min_points:
        raise NoCandidates(f"cloud has {len(points)} points, need {cfg.min_points}")
    if cloud.normals is not None:
        normals = np.asarray(cloud.normals, dtype=np.float64)
        _, planarity = estimate_normals(points, cfg.knn)
    else:
        normals, planarity = estimate_normals(points, cfg.knn)
    centroid = points.mean(axis=0)
    tree = cKDTree(points)
    rng = np.random.default_rng(cfg.seed)

    center = estimate_center(points, normals)
    # a single view never shows both sides of the object (a box exposes
    # no opposing faces at all), so sample over the cloud completed by
    # point symmetry about the estimated center: the geometric stand-in
    # for the shape priors a learned grasp model brings to partial views
    all_pts = np.vstack([points, 2.0 * center - points])
    all_normals = np.vstack([normals, -normals])
    all_planarity = np.concatenate([planarity, planarity])
    candidates = _sample_pairs(all_pts, all_normals, all_planarity, tree, normals, rng, cfg)
    if not candidates:
        raise NoCandidates("no antipodal pairs found")
    return GraspSet(
        tuple(candidates), "antipodal-symmetry-sampler", centroid, center_estimate=center
    )


def filter_stage1_topk(gs: GraspSet, k: int = 20) -> GraspSet:
    """Keep the k highest-scoring candidates (stable on ties)."""
    if not gs.candidates:
        raise ValueError("empty grasp set")
    order = sorted(range(len(gs.candidates)), key=lambda i: (-gs.candidates[i].score, i))
    kept = tuple(gs.candidates[i] for i in order[:k])
    return replace(gs, candidates=kept)


def _stage2_order(gs: GraspSet) -> list[int]:
    center = gs.reference_center

    def key(i: int):
        c = gs.candidates[i]
        return (float(np.linalg.norm(c.pose.translation - center)), -c.score, i)

    return sorted(range(len(gs.candidates)), key=key)


def filter_stage2_center(gs: GraspSet) -> GraspCandidate:
    """The candidate closest to the object centroid (ties: higher score,
    then original order)."""
    if not gs.candidates:
        raise ValueError("empty grasp set")
    return gs.candidates[_stage2_order(gs)[0]]


_VERTICAL_COS = math.cos(math.radians(3.0))


def filter_stage3_orient(
    c: GraspCandidate, camera_pose_base: Pose3, model: ArmModel
) -> GraspCandidate:
    """Transform to the arm-base frame and project onto the reachable
    orientation manifold.

    The provider's approach axis (+x) already matches the end-effector
    convention, so the fixed frame-mapping rotation is the identity.
    Projection sets yaw from the grasp position's azimuth, zeroes roll,
    and keeps the approach elevation clamped to [-90 deg, 0 deg];
    translation is untouched.

    Raises:
        OrientationCollapse: approach within 3 degrees of vertical,
            where the projected yaw would be arbitrary.
    """
    pose_base = compose(camera_pose_base, c.pose)
    approach = pose_base.rotation[:, 0]
    if abs(approach[2]) > _VERTICAL_COS:
        raise OrientationCollapse("approach axis within 3 degrees of vertical")
    t = pose_base.translation
    yaw = math.atan2(t[1], t[0])
    elevation = math.atan2(approach[2], math.hypot(approach[0], approach[1]))
    pitch = min(0.0, max(-math.pi / 2.0, elevation))
    rotation = rot_z(yaw) @ rot_y(-pitch)
    return replace(c, pose=Pose3(rotation, t))


def select_executable(
    gs: GraspSet,
    camera_pose_base: Pose3,
    model: ArmModel,
    k: int = 20,
    standoff: float | None = None,
) -> GraspCandidate:
    """Full pipeline: top-k by score, then walk the center-distance
    ranking, orienting each candidate and returning the first that is
    IK-feasible.

    With ``standoff`` set, feasibility also requires the pre-grasp pose
    that far back along the approach axis, so the returned candidate is
    executable end to end.

    Raises:
        NoFeasibleGrasp: every surviving candidate is unreachable.
    """
    if not gs.candidates:
        raise ValueError("empty grasp set")
    shortlisted = filter_stage1_topk(gs, k)
    for idx in _stage2_order(shortlisted):
        try:
            oriented = filter_stage3_orient(shortlisted.candidates[idx], camera_pose_base, model)
        except OrientationCollapse:
            continue
        if not is_reachable(model, oriented.pose):
            continue
        if standoff is not None:
            approach = oriented.pose.rotation[:, 0]
            staged = Pose3(oriented.pose.rotation, oriented.pose.translation - standoff * approach)
            if not is_reachable(model, staged):
                continue
        return oriented
    raise NoFeasibleGrasp("no IK-feasible candidate among the shortlist")


# -- candidate replay files -------------------------------------------------

def save_candidates(gs: GraspSet, intrinsics: CameraIntrinsics, path) -> None:
    """Write a replay file: a header line, then one record per candidate.

    The JSON float encoding round-trips exactly, so write -> read ->
    write is byte-identical.
    """
    lines = [
        json.dumps(
            {
                "intrinsics": {
                    "fx": intrinsics.fx,
                    "fy": intrinsics.fy,
                    "cx": intrinsics.cx,
                    "cy": intrinsics.cy,
                    "width": intrinsics.width,
                    "height": intrinsics.height,
                },
                "centroid": list(gs.object_centroid_camera),
                "center_estimate": None
                if gs.center_estimate is None
                else list(gs.center_estimate),
                "source": gs.source,
            },
            sort_keys=True,
        )
    ]
    for c in gs.candidates:
        lines.append(
            json.dumps(
                {
                    "translation": list(c.pose.translation),
                    "rotation": [float(v) for v in c.pose.rotation.ravel()],
                    "width": c.width,
                    "score": c.score,
                },
                sort_keys=True,
            )
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_candidates(path) -> tuple[GraspSet, CameraIntrinsics]:
    """Read a replay file written by save_candidates (or any external
    tool following the same record schema)."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise ValueError("replay file is empty")
    header = json.loads(lines[0])
    intrinsics = CameraIntrinsics(**header["intrinsics"])
    candidates = []
    for line in lines[1:]:
        if not line.strip():
            continue
        rec = json.loads(line)
        rotation = np.array(rec["rotation"], dtype=np.float64).reshape(3, 3)
        candidates.append(
            GraspCandidate(
                pose=Pose3(rotation, rec["translation"]),
                width=float(rec["width"]),
                score=float(rec["score"]),
            )
        )
    estimate = header.get("center_estimate")
    gs = GraspSet(
        tuple(candidates),
        header.get("source", "replay"),
        np.asarray(header["centroid"], dtype=np.float64),
        center_estimate=None if estimate is None else np.asarray(estimate, dtype=np.float64),
    )
    return gs, intrinsics
