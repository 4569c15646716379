"""Detection oracle, tracker, operator selection, and grasp-input capture.

The detector and tracker are ground-truth oracles over the simulator's
label images, with configurable pixel jitter standing in for the
failure modes of a learned detector: boxes wobble, small targets drop
out, and a shrinking target raises TrackLost.

Bounding boxes are half-open pixel rects (u_min, v_min, u_max, v_max):
a one-pixel object has u_max = u_min + 1.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .geometry import CameraIntrinsics, PointCloud, Pose3, backproject
from .worldsim import MIN_VISIBLE_PIXELS, SensorFrame


class NoTargetUnderSelection(LookupError):
    pass


class TrackLost(RuntimeError):
    pass


class SelectionNotConfirmed(RuntimeError):
    pass


class EmptyMask(RuntimeError):
    """No valid depth inside the mask; the operator should re-select."""


@dataclass(frozen=True)
class DetectionBox:
    object_id: str
    class_name: str
    bbox: tuple[int, int, int, int]  # u_min, v_min, u_max, v_max (half-open)
    confidence: float

    def __post_init__(self):
        u0, v0, u1, v1 = self.bbox
        if not (u0 < u1 and v0 < v1):
            raise ValueError("bbox must be non-degenerate")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError("confidence must be in [0, 1]")

    @property
    def area(self) -> int:
        u0, v0, u1, v1 = self.bbox
        return (u1 - u0) * (v1 - v0)

    def contains(self, u: float, v: float) -> bool:
        u0, v0, u1, v1 = self.bbox
        return u0 <= u < u1 and v0 <= v < v1


@dataclass(frozen=True)
class Selection:
    mode: str  # "click" | "drag"
    point: tuple[float, float] | None = None
    rect: tuple[float, float, float, float] | None = None
    resolved_bbox: tuple[int, int, int, int] | None = None
    target_object_id: str | None = None
    target_class: str | None = None
    confirmed: bool = False

    @staticmethod
    def click(u: float, v: float) -> "Selection":
        return Selection(mode="click", point=(u, v))

    @staticmethod
    def drag(u0: float, v0: float, u1: float, v1: float) -> "Selection":
        return Selection(mode="drag", rect=(u0, v0, u1, v1))

    def confirm(self) -> "Selection":
        return replace(self, confirmed=True)


@dataclass(frozen=True)
class GraspInput:
    """Frozen triple captured at selection time plus the camera extrinsics."""

    label_frame: np.ndarray
    label_names: tuple[str, ...]
    depth_frame: np.ndarray
    intrinsics: CameraIntrinsics
    mask_bbox: tuple[int, int, int, int]
    camera_pose_base: Pose3
    target_object_id: str | None = None

    def __post_init__(self):
        if self.label_frame.shape != self.depth_frame.shape:
            raise ValueError("label and depth frames must share dimensions")
        u0, v0, u1, v1 = self.mask_bbox
        h, w = self.depth_frame.shape
        if not (0 <= u0 < u1 <= w and 0 <= v0 < v1 <= h):
            raise ValueError("mask_bbox out of image bounds")


def _tight_bbox(mask: np.ndarray) -> tuple[int, int, int, int]:
    vs, us = np.nonzero(mask)
    return int(us.min()), int(vs.min()), int(us.max()) + 1, int(vs.max()) + 1


def _jitter_bbox(
    bbox: tuple[int, int, int, int],
    jitter_px: float,
    rng: np.random.Generator | None,
    width: int,
    height: int,
) -> tuple[int, int, int, int]:
    u0, v0, u1, v1 = bbox
    if rng is not None and jitter_px > 0.0:
        du0, dv0, du1, dv1 = rng.normal(0.0, jitter_px, size=4)
        u0, v0, u1, v1 = u0 + du0, v0 + dv0, u1 + du1, v1 + dv1
    u0 = int(np.clip(round(u0), 0, width - 1))
    v0 = int(np.clip(round(v0), 0, height - 1))
    u1 = int(np.clip(round(u1), u0 + 1, width))
    v1 = int(np.clip(round(v1), v0 + 1, height))
    return u0, v0, u1, v1


def detect(
    frame: SensorFrame,
    rng: np.random.Generator | None = None,
    jitter_px: float = 0.0,
) -> list[DetectionBox]:
    """One box per sufficiently visible object (tight label extent + jitter).

    Objects with fewer than MIN_VISIBLE_PIXELS visible pixels are
    dropped, modeling detector misses on small/occluded targets.
    Confidence is the visible fraction of the object's occlusion-free
    projected extent, clamped to [0.3, 0.99].
    """
    k = frame.intrinsics
    boxes = []
    for idx in range(1, len(frame.label_names)):
        mask = frame.labels == idx
        visible = int(np.count_nonzero(mask))
        if visible < MIN_VISIBLE_PIXELS:
            continue
        object_id = frame.label_names[idx]
        extent = max(frame.extent_counts.get(object_id, visible), visible)
        confidence = float(np.clip(visible / extent, 0.3, 0.99))
        bbox = _jitter_bbox(_tight_bbox(mask), jitter_px, rng, k.width, k.height)
        boxes.append(
            DetectionBox(
                object_id=object_id,
                class_name=frame.class_names[idx],
                bbox=bbox,
                confidence=confidence,
            )
        )
    return boxes


def resolve_selection(
    sel: Selection, detections: list[DetectionBox], frame: SensorFrame
) -> Selection:
    """Resolve an operator gesture to a target object.

    Click: the containing detection (smallest area on overlap), already
    confirmed.  Drag: the drawn rect itself, targeting the object whose
    label pixels dominate inside it, pending operator confirmation.
    """
    if sel.mode == "click":
        u, v = sel.point
        hits = [d for d in detections if d.contains(u, v)]
        if not hits:
            raise NoTargetUnderSelection(f"no detection under click ({u:.0f}, {v:.0f})")
        best = min(hits, key=lambda d: d.area)
        return replace(
            sel,
            resolved_bbox=best.bbox,
            target_object_id=best.object_id,
            target_class=best.class_name,
            confirmed=True,
        )
    h, w = frame.labels.shape
    u0, v0, u1, v1 = sel.rect
    u0, u1 = sorted((u0, u1))
    v0, v1 = sorted((v0, v1))
    rect = (
        int(np.clip(np.floor(u0), 0, w - 1)),
        int(np.clip(np.floor(v0), 0, h - 1)),
        int(np.clip(np.ceil(u1), 1, w)),
        int(np.clip(np.ceil(v1), 1, h)),
    )
    if rect[2] <= rect[0] or rect[3] <= rect[1]:
        raise NoTargetUnderSelection("drag rect is degenerate")
    window = frame.labels[rect[1]: rect[3], rect[0]: rect[2]]
    counts = np.bincount(window.ravel(), minlength=len(frame.label_names))
    counts[0] = 0  # background never wins
    if counts.max() == 0:
        raise NoTargetUnderSelection("drag rect covers only background")
    idx = int(counts.argmax())
    return replace(
        sel,
        rect=None if sel.rect is None else sel.rect,
        resolved_bbox=rect,
        target_object_id=frame.label_names[idx],
        target_class=frame.class_names[idx],
        confirmed=False,
    )


@dataclass(frozen=True)
class TrackUpdate:
    bbox: tuple[int, int, int, int]
    x_error_px: float
    distance: float


def track(
    target_object_id: str,
    previous_bbox: tuple[int, int, int, int],
    frame: SensorFrame,
    rng: np.random.Generator | None = None,
    jitter_px: float = 0.0,
) -> TrackUpdate:
    """Oracle tracker: re-locates the target's label pixels each frame.

    x error is the bbox center's offset from the image center column;
    distance is the median valid depth inside the (jittered) box.

    Raises:
        TrackLost: target below MIN_VISIBLE_PIXELS or no valid depth.
    """
    u0, v0, u1, v1 = previous_bbox
    if u0 >= u1 or v0 >= v1:
        raise ValueError("previous bbox is degenerate")
    k = frame.intrinsics
    try:
        idx = frame.label_index(target_object_id)
    except ValueError:
        raise TrackLost(f"{target_object_id} not in frame") from None
    mask = frame.labels == idx
    if int(np.count_nonzero(mask)) < MIN_VISIBLE_PIXELS:
        raise TrackLost(f"{target_object_id} below visibility threshold")
    bbox = _jitter_bbox(_tight_bbox(mask), jitter_px, rng, k.width, k.height)
    window = frame.depth[bbox[1]: bbox[3], bbox[0]: bbox[2]]
    valid = window[window > 0.0]
    if valid.size == 0:
        raise TrackLost("no valid depth inside tracked box")
    x_error = (bbox[0] + bbox[2]) / 2.0 - k.width / 2.0
    return TrackUpdate(bbox=bbox, x_error_px=float(x_error), distance=float(np.median(valid)))


def capture_grasp_input(frame: SensorFrame, sel: Selection, camera_pose_base: Pose3) -> GraspInput:
    """Freeze the gripper-camera triple (labels, depth, intrinsics) plus
    the camera-in-base extrinsics computed from the arm's forward
    kinematics at capture time.

    Raises:
        SelectionNotConfirmed: the selection still awaits confirmation.
    """
    if not sel.confirmed:
        raise SelectionNotConfirmed("selection must be confirmed before capture")
    if sel.resolved_bbox is None:
        raise SelectionNotConfirmed("selection was never resolved")
    return GraspInput(
        label_frame=frame.labels.copy(),
        label_names=frame.label_names,
        depth_frame=frame.depth.copy(),
        intrinsics=frame.intrinsics,
        mask_bbox=sel.resolved_bbox,
        camera_pose_base=camera_pose_base,
        target_object_id=sel.target_object_id,
    )


def mask_cloud(gi: GraspInput) -> PointCloud:
    """Back-project only the pixels inside the mask bbox with valid depth.

    Raises:
        EmptyMask: nothing valid inside the box.
    """
    u0, v0, u1, v1 = gi.mask_bbox
    masked = np.zeros_like(gi.depth_frame)
    masked[v0:v1, u0:u1] = gi.depth_frame[v0:v1, u0:u1]
    names = np.array(gi.label_names, dtype=object)[gi.label_frame]
    cloud = backproject(masked, gi.intrinsics, labels=names)
    if len(cloud) == 0:
        raise EmptyMask("no valid depth inside the selection")
    return cloud
