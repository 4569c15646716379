"""Grasp pipeline tests.

Oracles: full sort for stage 1, exhaustive scan for stage 2, and an
independent rotation decomposition for the stage-3 manifold projection.
"""

import math

import numpy as np
import pytest

from quadpick.arm import ArmModel, ik
from quadpick.geometry import CameraIntrinsics, PointCloud, Pose3, compose, rot_y, rot_z
from quadpick.grasp import (
    GraspCandidate,
    GraspSet,
    NoCandidates,
    NoFeasibleGrasp,
    OrientationCollapse,
    SamplerConfig,
    estimate_normals,
    filter_stage1_topk,
    filter_stage2_center,
    filter_stage3_orient,
    generate_candidates,
    load_candidates,
    save_candidates,
    select_executable,
)

MODEL = ArmModel()


def box_cloud(size=(0.05, 0.03, 0.02), spacing=0.002, center=(0.0, 0.0, 0.3)):
    """All six faces of a box with analytic outward normals."""
    w, d, h = size
    pts, nrm = [], []
    axes = np.eye(3)
    half = np.array([w, d, h]) / 2.0
    for axis in range(3):
        u_axis, v_axis = (axis + 1) % 3, (axis + 2) % 3
        us = np.arange(-half[u_axis], half[u_axis] + 1e-9, spacing)
        vs = np.arange(-half[v_axis], half[v_axis] + 1e-9, spacing)
        for sign in (-1.0, 1.0):
            for u in us:
                for v in vs:
                    p = np.zeros(3)
                    p[axis] = sign * half[axis]
                    p[u_axis] = u
                    p[v_axis] = v
                    pts.append(p + center)
                    nrm.append(sign * axes[axis])
    return PointCloud(np.array(pts), normals=np.array(nrm))


def parallel_planes_cloud(gap=0.04, extent=0.08, n=40, center=(0.0, 0.0, 0.3)):
    xs = np.linspace(-extent / 2, extent / 2, n)
    ys = np.linspace(-extent / 2, extent / 2, n)
    gx, gy = np.meshgrid(xs, ys)
    plane = np.stack([gx.ravel(), gy.ravel()], axis=1)
    top = np.column_stack([plane, np.full(len(plane), gap / 2)]) + center
    bottom = np.column_stack([plane, np.full(len(plane), -gap / 2)]) + center
    pts = np.vstack([top, bottom])
    normals = np.vstack(
        [np.tile([0, 0, 1.0], (len(plane), 1)), np.tile([0, 0, -1.0], (len(plane), 1))]
    )
    return PointCloud(pts, normals=normals)


def random_grasp_set(rng, n, max_score=1.0):
    cands = []
    for _ in range(n):
        yaw = rng.uniform(-math.pi, math.pi)
        pitch = rng.uniform(0.1, 1.4)
        pose = Pose3(rot_z(yaw) @ rot_y(pitch), rng.uniform(-0.2, 0.2, size=3) + (0, 0, 0.4))
        cands.append(
            GraspCandidate(pose=pose, width=rng.uniform(0.01, 0.07), score=rng.uniform(0, max_score))
        )
    return GraspSet(tuple(cands), "test", rng.uniform(-0.1, 0.1, size=3) + (0, 0, 0.4))


class TestGenerateCandidates:
    def test_sparse_cloud_rejected(self):
        cloud = PointCloud(np.random.default_rng(0).uniform(size=(10, 3)) + (0, 0, 1))
        with pytest.raises(NoCandidates):
            generate_candidates(cloud)

    def test_box_cloud_widths_bounded(self):
        gs = generate_candidates(box_cloud(), SamplerConfig(seed=3))
        assert gs.candidates
        for c in gs.candidates:
            assert c.width <= 0.07 + 1e-12

    def test_centroid_is_cloud_mean(self):
        cloud = box_cloud()
        gs = generate_candidates(cloud, SamplerConfig(seed=3))
        assert np.allclose(gs.object_centroid_camera, cloud.points.mean(axis=0), atol=1e-12)

    def test_parallel_planes_top_candidates_perpendicular(self):
        cloud = parallel_planes_cloud()
        cfg = SamplerConfig(seed=5, max_pairs=20000, max_candidates=4000)
        gs = generate_candidates(cloud, cfg)
        top = filter_stage1_topk(gs, 20)
        for c in top.candidates:
            closing = c.pose.rotation[:, 1]
            angle = math.degrees(math.acos(min(1.0, abs(closing[2]))))
            assert angle < 5.0

    def test_deterministic_given_seed(self):
        cloud = box_cloud()
        a = generate_candidates(cloud, SamplerConfig(seed=11))
        b = generate_candidates(cloud, SamplerConfig(seed=11))
        assert len(a.candidates) == len(b.candidates)
        for ca, cb in zip(a.candidates, b.candidates):
            assert np.array_equal(ca.pose.translation, cb.pose.translation)
            assert np.array_equal(ca.pose.rotation, cb.pose.rotation)
            assert ca.score == cb.score

    def test_candidate_rotations_orthonormal(self):
        gs = generate_candidates(box_cloud(), SamplerConfig(seed=7))
        for c in gs.candidates[:50]:
            r = c.pose.rotation
            assert np.abs(r.T @ r - np.eye(3)).max() < 1e-9
            assert np.linalg.det(r) == pytest.approx(1.0, abs=1e-9)

    def test_estimated_normals_on_sphere(self):
        rng = np.random.default_rng(2)
        dirs = rng.normal(size=(400, 3))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        dirs = dirs[dirs[:, 2] < -0.2]  # camera-facing cap
        center = np.array([0.0, 0.0, 0.5])
        pts = center + 0.03 * dirs
        normals, planarity = estimate_normals(pts, knn=10)
        agreement = np.einsum("ij,ij->i", normals, dirs)
        assert np.median(np.abs(agreement)) > 0.95
        # oriented toward the camera at the origin
        assert np.median(np.einsum("ij,ij->i", normals, pts)) < 0


class TestStage1:
    def test_fewer_than_k_all_kept_sorted(self):
        gs = random_grasp_set(np.random.default_rng(1), 5)
        out = filter_stage1_topk(gs, 20)
        scores = [c.score for c in out.candidates]
        assert len(out.candidates) == 5
        assert scores == sorted(scores, reverse=True)

    def test_exactly_k_and_threshold(self):
        gs = random_grasp_set(np.random.default_rng(2), 25)
        out = filter_stage1_topk(gs, 20)
        assert len(out.candidates) == 20
        kept = {id(c) for c in out.candidates}
        dropped = [c for c in gs.candidates if id(c) not in kept]
        assert min(c.score for c in out.candidates) >= max(c.score for c in dropped)

    def test_stable_on_ties(self):
        rng = np.random.default_rng(3)
        base = random_grasp_set(rng, 6)
        tied = GraspSet(
            tuple(GraspCandidate(c.pose, c.width, 0.5) for c in base.candidates),
            "test",
            base.object_centroid_camera,
        )
        out = filter_stage1_topk(tied, 4)
        for kept, original in zip(out.candidates, tied.candidates):
            assert kept is original

    def test_matches_sort_truncate_oracle(self):
        rng = np.random.default_rng(4)
        for _ in range(200):
            gs = random_grasp_set(rng, int(rng.integers(1, 40)))
            out = filter_stage1_topk(gs, 20)
            oracle = sorted(
                range(len(gs.candidates)), key=lambda i: (-gs.candidates[i].score, i)
            )[:20]
            assert [id(c) for c in out.candidates] == [id(gs.candidates[i]) for i in oracle]


class TestStage2:
    def test_single_candidate(self):
        gs = random_grasp_set(np.random.default_rng(5), 1)
        assert filter_stage2_center(gs) is gs.candidates[0]

    def test_explicit_distances(self):
        centroid = np.array([0.0, 0.0, 0.4])
        cands = []
        for d in (0.03, 0.01, 0.05):
            pose = Pose3(np.eye(3), centroid + (d, 0, 0))
            cands.append(GraspCandidate(pose, 0.04, 0.5))
        gs = GraspSet(tuple(cands), "test", centroid)
        assert filter_stage2_center(gs) is cands[1]

    def test_matches_brute_force_argmin(self):
        rng = np.random.default_rng(6)
        gs = random_grasp_set(rng, 100)
        winner = filter_stage2_center(gs)
        best, best_key = None, None
        for i, c in enumerate(gs.candidates):
            key = (
                float(np.linalg.norm(c.pose.translation - gs.object_centroid_camera)),
                -c.score,
                i,
            )
            if best_key is None or key < best_key:
                best, best_key = c, key
        assert winner is best


class TestStage3:
    def test_on_manifold_unchanged(self):
        t = np.array([0.2, 0.1, 0.05])
        yaw = math.atan2(t[1], t[0])
        pose = Pose3(rot_z(yaw) @ rot_y(0.7), t)
        c = GraspCandidate(pose, 0.04, 0.5)
        out = filter_stage3_orient(c, Pose3.identity(), MODEL)
        assert np.abs(out.pose.rotation - pose.rotation).max() < 1e-12
        assert np.array_equal(out.pose.translation, pose.translation)

    def test_yaw_from_position(self):
        pose = Pose3(rot_y(0.5), (0.2, 0.2, 0.0))
        out = filter_stage3_orient(GraspCandidate(pose, 0.04, 0.5), Pose3.identity(), MODEL)
        yaw = math.atan2(out.pose.rotation[1, 0], out.pose.rotation[0, 0])
        assert yaw == pytest.approx(math.radians(45.0))

    def test_vertical_approach_collapses(self):
        pose = Pose3(rot_y(math.pi / 2 - 0.01), (0.2, 0.0, 0.0))  # approach ~straight down
        with pytest.raises(OrientationCollapse):
            filter_stage3_orient(GraspCandidate(pose, 0.04, 0.5), Pose3.identity(), MODEL)

    def test_projection_matches_decomposition_oracle(self):
        rng = np.random.default_rng(7)
        checked = 0
        while checked < 300:
            yaw_r, pitch_r, roll_r = rng.uniform(-math.pi, math.pi, size=3)
            rot = rot_z(yaw_r) @ rot_y(pitch_r) @ np.array(
                [
                    [1, 0, 0],
                    [0, math.cos(roll_r), -math.sin(roll_r)],
                    [0, math.sin(roll_r), math.cos(roll_r)],
                ]
            )
            t = rng.uniform(-0.4, 0.4, size=3)
            if math.hypot(t[0], t[1]) < 0.02:
                continue
            cam = Pose3(rot_z(rng.uniform(-1, 1)), rng.uniform(-0.1, 0.1, size=3))
            c = GraspCandidate(Pose3(rot, t), 0.04, 0.5)
            try:
                out = filter_stage3_orient(c, cam, MODEL)
            except OrientationCollapse:
                base_approach = (cam.rotation @ rot)[:, 0]
                assert abs(base_approach[2]) > math.cos(math.radians(3.0))
                continue
            pose_base = compose(cam, c.pose)
            # translation preserved exactly
            assert np.array_equal(out.pose.translation, pose_base.translation)
            r = out.pose.rotation
            assert np.abs(r.T @ r - np.eye(3)).max() < 1e-12
            # independent decomposition: yaw from position, zero roll,
            # pitch = clamped elevation of the original approach axis
            tx, ty, _ = pose_base.translation
            expected_yaw = math.atan2(ty, tx)
            approach = pose_base.rotation[:, 0]
            elev = math.atan2(approach[2], math.hypot(approach[0], approach[1]))
            expected_pitch = min(0.0, max(-math.pi / 2, elev))
            expected = rot_z(expected_yaw) @ rot_y(-expected_pitch)
            assert np.abs(r - expected).max() < 1e-9
            roll = math.atan2(r[2, 1], r[2, 2])
            assert abs(roll) < 1e-9
            checked += 1


class TestSelectExecutable:
    def _candidate(self, t, pitch=0.3):
        yaw = math.atan2(t[1], t[0])
        return GraspCandidate(Pose3(rot_z(yaw) @ rot_y(pitch), t), 0.04, 0.5)

    def test_all_reachable_returns_stage2_winner(self):
        centroid = np.array([0.30, 0.0, 0.08])
        near = self._candidate((0.30, 0.0, 0.08))
        far = self._candidate((0.26, 0.10, 0.10))
        gs = GraspSet((far, near), "test", centroid)
        out = select_executable(gs, Pose3.identity(), MODEL)
        assert np.array_equal(out.pose.translation, near.pose.translation)

    def test_fallback_to_second_closest(self):
        centroid = np.array([0.60, 0.0, 0.30])
        unreachable = self._candidate((0.60, 0.0, 0.30))
        reachable = self._candidate((0.30, 0.0, 0.08))
        gs = GraspSet((reachable, unreachable), "test", centroid)
        out = select_executable(gs, Pose3.identity(), MODEL)
        assert np.array_equal(out.pose.translation, reachable.pose.translation)
        ik(MODEL, out.pose)  # must not raise

    def test_all_unreachable(self):
        gs = GraspSet(
            (self._candidate((0.9, 0.0, 0.4)), self._candidate((0.0, 0.95, 0.4))),
            "test",
            np.array([0.9, 0.0, 0.4]),
        )
        with pytest.raises(NoFeasibleGrasp):
            select_executable(gs, Pose3.identity(), MODEL)

    def test_output_always_ik_feasible(self):
        rng = np.random.default_rng(8)
        hits = 0
        for _ in range(100):
            gs = random_grasp_set(rng, 30)
            try:
                out = select_executable(gs, Pose3.identity(), MODEL)
            except NoFeasibleGrasp:
                continue
            ik(MODEL, out.pose)
            hits += 1
        assert hits > 10


class TestScoreScalingInvariance:
    def test_stage1_and_stage2_invariant(self):
        rng = np.random.default_rng(9)
        gs = random_grasp_set(rng, 40, max_score=0.45)
        index_of = {id(c): i for i, c in enumerate(gs.candidates)}
        base_top = filter_stage1_topk(gs, 20)
        base_winner_idx = index_of[id(filter_stage2_center(base_top))]
        for c_scale in (2.0, 0.31):
            scaled = GraspSet(
                tuple(
                    GraspCandidate(c.pose, c.width, c.score * c_scale) for c in gs.candidates
                ),
                "test",
                gs.object_centroid_camera,
            )
            scaled_index_of = {id(c): i for i, c in enumerate(scaled.candidates)}
            scaled_top = filter_stage1_topk(scaled, 20)
            assert [scaled_index_of[id(c)] for c in scaled_top.candidates] == [
                index_of[id(c)] for c in base_top.candidates
            ]
            winner = filter_stage2_center(scaled_top)
            assert scaled_index_of[id(winner)] == base_winner_idx


class TestReplayFiles:
    def test_round_trip_bit_exact(self, tmp_path):
        gs = generate_candidates(box_cloud(), SamplerConfig(seed=13))
        k = CameraIntrinsics(fx=230.0, fy=230.0, cx=159.5, cy=119.5, width=320, height=240)
        first = tmp_path / "grasps_1.jsonl"
        second = tmp_path / "grasps_2.jsonl"
        save_candidates(gs, k, first)
        loaded, k2 = load_candidates(first)
        save_candidates(loaded, k2, second)
        assert first.read_bytes() == second.read_bytes()
        assert len(loaded.candidates) == len(gs.candidates)
        for a, b in zip(loaded.candidates, gs.candidates):
            assert np.array_equal(a.pose.translation, b.pose.translation)
            assert np.array_equal(a.pose.rotation, b.pose.rotation)
            assert a.width == b.width and a.score == b.score
