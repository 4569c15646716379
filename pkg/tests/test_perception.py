"""Perception tests against brute-force pixel-scan oracles."""

import numpy as np
import pytest

from conftest import box_object, sphere_object, tiny_scene

from quadpick.geometry import CameraIntrinsics, Pose3, backproject
from quadpick.perception import (
    EmptyMask,
    GraspInput,
    NoTargetUnderSelection,
    Selection,
    SelectionNotConfirmed,
    TrackLost,
    capture_grasp_input,
    detect,
    mask_cloud,
    resolve_selection,
    track,
)
from quadpick.scene import RobotState
from quadpick.worldsim import render


def robot_at(x=0.5, y=0.5, heading=0.0):
    return RobotState(base=(x, y, heading))


def bbox_scan_oracle(labels: np.ndarray, idx: int):
    """Independent tight-bbox scan, pixel by pixel."""
    u_min, v_min = 10**9, 10**9
    u_max, v_max = -1, -1
    h, w = labels.shape
    for v in range(h):
        for u in range(w):
            if labels[v, u] == idx:
                u_min, u_max = min(u_min, u), max(u_max, u)
                v_min, v_max = min(v_min, v), max(v_max, v)
    return u_min, v_min, u_max + 1, v_max + 1


class TestDetect:
    def test_empty_frame(self):
        frame = render(tiny_scene([]), robot_at(), "front")
        assert detect(frame) == []

    def test_tight_bbox_matches_scan_oracle(self):
        scene = tiny_scene([sphere_object(center=(1.5, 0.6, 0.5), radius=0.18)])
        frame = render(scene, robot_at(), "front")
        boxes = detect(frame)
        assert len(boxes) == 1
        assert boxes[0].bbox == bbox_scan_oracle(frame.labels, 1)
        assert boxes[0].object_id == "ball"
        assert boxes[0].class_name == "ball"

    def test_small_object_dropped(self):
        # about a dozen pixels at this range
        scene = tiny_scene([sphere_object(radius=0.032, center=(2.0, 0.5, 0.5))])
        frame = render(scene, robot_at(), "front")
        visible = frame.visible_count("ball")
        assert 0 < visible < 20
        assert detect(frame) == []

    def test_fully_visible_confidence_clamped_high(self):
        scene = tiny_scene([sphere_object(center=(1.5, 0.5, 0.5), radius=0.2)])
        frame = render(scene, robot_at(), "front")
        assert detect(frame)[0].confidence == pytest.approx(0.99)

    def test_occluded_confidence_lower(self):
        blocker = box_object("wall", center=(1.0, 0.58, 0.5), size=(0.05, 0.25, 0.6))
        ball = sphere_object(center=(1.8, 0.5, 0.5), radius=0.2)
        scene = tiny_scene([ball, blocker])
        frame = render(scene, robot_at(), "front")
        boxes = {b.object_id: b for b in detect(frame)}
        assert boxes["ball"].confidence < 0.99

    def test_jitter_deterministic_per_seed(self):
        scene = tiny_scene([sphere_object()])
        frame = render(scene, robot_at(), "front")
        a = detect(frame, rng=np.random.default_rng(1), jitter_px=2.0)
        b = detect(frame, rng=np.random.default_rng(1), jitter_px=2.0)
        assert a == b


class TestResolveSelection:
    def _frame_two_objects(self):
        ball = sphere_object(center=(1.5, 0.62, 0.5), radius=0.15)
        crate = box_object(center=(1.5, 0.25, 0.45), size=(0.25, 0.25, 0.25))
        scene = tiny_scene([ball, crate])
        frame = render(scene, robot_at(), "front")
        return frame, detect(frame)

    def test_click_sole_detection_confirmed(self):
        scene = tiny_scene([sphere_object(center=(1.5, 0.5, 0.5), radius=0.2)])
        frame = render(scene, robot_at(), "front")
        boxes = detect(frame)
        u0, v0, u1, v1 = boxes[0].bbox
        sel = resolve_selection(Selection.click((u0 + u1) / 2, (v0 + v1) / 2), boxes, frame)
        assert sel.confirmed
        assert sel.target_object_id == "ball"
        assert sel.resolved_bbox == boxes[0].bbox

    def test_click_background_raises(self):
        frame, boxes = self._frame_two_objects()
        with pytest.raises(NoTargetUnderSelection):
            resolve_selection(Selection.click(1.0, 1.0), boxes, frame)

    def test_click_overlap_picks_smallest(self):
        small = sphere_object("pebble", center=(1.2, 0.5, 0.5), radius=0.05)
        big = sphere_object("boulder", center=(1.9, 0.5, 0.5), radius=0.3)
        scene = tiny_scene([big, small])
        frame = render(scene, robot_at(), "front")
        boxes = detect(frame)
        assert len(boxes) == 2
        sel = resolve_selection(Selection.click(32.0, 24.0), boxes, frame)
        assert sel.target_object_id == "pebble"

    def test_drag_majority_unconfirmed(self):
        frame, boxes = self._frame_two_objects()
        # rect spanning both objects, biased toward the ball's pixels
        ball_bbox = bbox_scan_oracle(frame.labels, 1)
        crate_bbox = bbox_scan_oracle(frame.labels, 2)
        rect = (
            min(ball_bbox[0], crate_bbox[0]),
            ball_bbox[1],
            max(ball_bbox[2], crate_bbox[2]),
            ball_bbox[3],
        )
        sel = resolve_selection(Selection.drag(*rect), boxes, frame)
        ball_px = np.count_nonzero(
            frame.labels[rect[1]: rect[3], rect[0]: rect[2]] == 1
        )
        crate_px = np.count_nonzero(
            frame.labels[rect[1]: rect[3], rect[0]: rect[2]] == 2
        )
        expected = "ball" if ball_px >= crate_px else "crate"
        assert sel.target_object_id == expected
        assert not sel.confirmed

    def test_drag_background_only_raises(self):
        frame, boxes = self._frame_two_objects()
        with pytest.raises(NoTargetUnderSelection):
            resolve_selection(Selection.drag(0.0, 0.0, 3.0, 3.0), boxes, frame)

    def test_click_in_disjoint_boxes_property(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            centers = [(1.3, 0.28, 0.5), (1.3, 0.72, 0.5)]
            objs = [
                sphere_object(f"s{i}", center=c, radius=0.1) for i, c in enumerate(centers)
            ]
            scene = tiny_scene(objs)
            frame = render(scene, robot_at(), "front")
            boxes = detect(frame)
            if len(boxes) < 2:
                continue
            b = boxes[rng.integers(len(boxes))]
            u = rng.uniform(b.bbox[0], b.bbox[2] - 1e-6)
            v = rng.uniform(b.bbox[1], b.bbox[3] - 1e-6)
            others = [o for o in boxes if o is not b]
            if any(o.contains(u, v) for o in others):
                continue
            sel = resolve_selection(Selection.click(u, v), boxes, frame)
            assert sel.target_object_id == b.object_id


class TestTrack:
    def test_centered_object_zero_error(self):
        scene = tiny_scene([sphere_object(center=(1.5, 0.5, 0.5), radius=0.2)])
        frame = render(scene, robot_at(), "front")
        upd = track("ball", (0, 0, 10, 10), frame)
        assert upd.x_error_px == pytest.approx(0.0, abs=1.0)

    def test_distance_matches_render_oracle(self):
        scene = tiny_scene([sphere_object(center=(1.0, 0.5, 0.5), radius=0.1)])
        frame = render(scene, robot_at(), "front")
        upd = track("ball", (0, 0, 10, 10), frame)
        u0, v0, u1, v1 = bbox_scan_oracle(frame.labels, 1)
        window = frame.depth[v0:v1, u0:u1]
        expected = float(np.median(window[window > 0]))
        assert upd.distance == pytest.approx(expected)
        # center at 0.5 m: median depth lies between near surface and center
        assert 0.4 <= upd.distance <= 0.5

    def test_stationary_error_constant_without_jitter(self):
        scene = tiny_scene([sphere_object(center=(1.5, 0.62, 0.5), radius=0.15)])
        frame = render(scene, robot_at(), "front")
        first = track("ball", (0, 0, 10, 10), frame)
        second = track("ball", first.bbox, frame)
        assert first.x_error_px == second.x_error_px

    def test_track_lost_when_too_small(self):
        scene = tiny_scene([sphere_object(radius=0.032, center=(2.0, 0.5, 0.5))])
        frame = render(scene, robot_at(), "front")
        with pytest.raises(TrackLost):
            track("ball", (0, 0, 10, 10), frame)

    def test_track_lost_when_gone(self):
        frame = render(tiny_scene([sphere_object()]), robot_at(), "front")
        with pytest.raises(TrackLost):
            track("ghost", (0, 0, 10, 10), frame)


def _synthetic_grasp_input(k=None, bbox=(0, 0, 32, 24)):
    k = k or CameraIntrinsics(fx=60.0, fy=60.0, cx=16.0, cy=12.0, width=32, height=24)
    depth = np.zeros((k.height, k.width))
    labels = np.zeros((k.height, k.width), dtype=np.int16)
    return k, depth, labels, bbox


class TestCaptureAndMask:
    def test_capture_requires_confirmation(self):
        scene = tiny_scene([sphere_object(center=(1.5, 0.5, 0.5), radius=0.2)])
        frame = render(scene, robot_at(), "front")
        sel = resolve_selection(
            Selection.drag(20.0, 12.0, 44.0, 36.0), detect(frame), frame
        )
        with pytest.raises(SelectionNotConfirmed):
            capture_grasp_input(frame, sel, Pose3.identity())
        gi = capture_grasp_input(frame, sel.confirm(), Pose3.identity())
        assert gi.mask_bbox == sel.resolved_bbox
        assert gi.target_object_id == "ball"

    def test_capture_click_matches_bbox(self):
        scene = tiny_scene([sphere_object(center=(1.5, 0.5, 0.5), radius=0.2)])
        frame = render(scene, robot_at(), "front")
        boxes = detect(frame)
        sel = resolve_selection(Selection.click(32.0, 24.0), boxes, frame)
        gi = capture_grasp_input(frame, sel, Pose3.identity())
        assert gi.mask_bbox == boxes[0].bbox

    def test_empty_mask_on_empty_scene(self):
        k, depth, labels, bbox = _synthetic_grasp_input()
        gi = GraspInput(labels, ("",), depth, k, bbox, Pose3.identity())
        with pytest.raises(EmptyMask):
            mask_cloud(gi)

    def test_single_pixel_principal_point(self):
        k, depth, labels, _ = _synthetic_grasp_input()
        depth[12, 16] = 0.4
        gi = GraspInput(labels, ("",), depth, k, (16, 12, 17, 13), Pose3.identity())
        cloud = mask_cloud(gi)
        assert len(cloud) == 1
        assert np.allclose(cloud.points[0], (0.0, 0.0, 0.4), atol=1e-12)

    def test_cloud_count_matches_pixel_count(self):
        scene = tiny_scene([sphere_object(center=(1.2, 0.5, 0.5), radius=0.15)])
        frame = render(scene, robot_at(), "front")
        bbox = bbox_scan_oracle(frame.labels, 1)
        gi = GraspInput(
            frame.labels, frame.label_names, frame.depth, frame.intrinsics, bbox, Pose3.identity()
        )
        cloud = mask_cloud(gi)
        window = frame.depth[bbox[1]: bbox[3], bbox[0]: bbox[2]]
        assert len(cloud) == np.count_nonzero(window > 0)

    def test_masked_cloud_subset_and_projects_inside(self):
        scene = tiny_scene(
            [sphere_object(center=(1.2, 0.5, 0.5), radius=0.15), box_object(center=(1.4, 0.9, 0.5))]
        )
        frame = render(scene, robot_at(), "front")
        bbox = bbox_scan_oracle(frame.labels, 1)
        gi = GraspInput(
            frame.labels, frame.label_names, frame.depth, frame.intrinsics, bbox, Pose3.identity()
        )
        cloud = mask_cloud(gi)
        full = backproject(frame.depth, frame.intrinsics)
        full_set = {tuple(p) for p in np.round(full.points, 9)}
        k = frame.intrinsics
        for p in cloud.points:
            assert tuple(np.round(p, 9)) in full_set
            u = p[0] * k.fx / p[2] + k.cx
            v = p[1] * k.fy / p[2] + k.cy
            assert bbox[0] - 0.5 <= u <= bbox[2] + 0.5
            assert bbox[1] - 0.5 <= v <= bbox[3] + 0.5

    def test_labels_attached(self):
        scene = tiny_scene([sphere_object(center=(1.2, 0.5, 0.5), radius=0.15)])
        frame = render(scene, robot_at(), "front")
        bbox = bbox_scan_oracle(frame.labels, 1)
        gi = GraspInput(
            frame.labels, frame.label_names, frame.depth, frame.intrinsics, bbox, Pose3.identity()
        )
        cloud = mask_cloud(gi)
        assert set(cloud.labels) == {"ball"}
