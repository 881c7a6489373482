import time

import numpy as np
import pytest

from src.config.settings import NmsGrid, NmsParams
from src.models.geometry import Pose
from src.services.nms_service import (
    PoseNmsService,
    h_sim,
    k_sim,
    nms_map,
    oks_nms,
    optimize_params,
    pose_distance,
    pose_nms,
    pose_nms_indices,
    soft_oks_nms,
)
from src.synth.generators import gen_duplicated_validation, random_scene
from src.synth.oracles import brute_force_nms, scalar_pose_distance
from src.utils.exceptions import DimensionMismatchError, InsufficientDataError, ValidationError


def _random_params(rng, joint_count):
    lam = rng.uniform(0.0, 2.0)
    return NmsParams(
        sigma1=rng.uniform(0.05, 1.0),
        sigma2=rng.uniform(1.0, 50.0),
        lambda_=lam,
        eta=rng.uniform(0.1, 0.6) * joint_count * (1.0 + lam),
    )


class TestSimilarity:
    def test_identical_poses(self, make_pose):
        pose = make_pose(10, 10)
        assert k_sim(pose, pose, 1.0) == pytest.approx(pose.joint_count * np.tanh(1.0) ** 2)
        assert h_sim(pose, pose, 1.0) == pytest.approx(pose.joint_count)

    def test_far_apart_poses(self, make_pose):
        a, b = make_pose(0, 0), make_pose(500, 0)
        assert k_sim(a, b, 1.0) == 0.0
        assert h_sim(a, b, 1.0) == pytest.approx(0.0)

    def test_window_uses_first_pose_box(self, body_layout, make_pose):
        small = make_pose(0, 0)
        big_box = small.box.from_xywh([0, 0, 600, 1200])
        big = Pose(body_layout, small.coords + 10.0, small.confidences, box=big_box)
        # 視窗 60 × 120 時位移 10 在內；6 × 12 時在外
        assert k_sim(big, small, 1.0) > 0
        assert k_sim(small, big, 1.0) == 0

    def test_matches_scalar_loop(self, rng, body_layout):
        poses = random_scene(body_layout, 6, rng)
        params = _random_params(rng, body_layout.joint_count)
        for a in poses:
            for b in poses:
                assert pose_distance(a, b, params) == pytest.approx(scalar_pose_distance(a, b, params))

    def test_layout_mismatch(self, make_pose, wholebody_layout):
        with pytest.raises(DimensionMismatchError):
            h_sim(make_pose(), make_pose(layout=wholebody_layout), 1.0)

    def test_missing_box(self, body_layout, make_pose):
        pose = make_pose()
        boxless = Pose(body_layout, pose.coords, pose.confidences)
        with pytest.raises(ValidationError):
            k_sim(boxless, pose, 1.0)


class TestPoseNms:
    def test_empty_input(self):
        assert pose_nms([], NmsParams(1.0, 1.0, 1.0, 1.0)) == []

    def test_matches_brute_force(self, body_layout):
        rng = np.random.default_rng(11)
        for _ in range(200):
            poses = random_scene(body_layout, int(rng.integers(0, 9)), rng)
            params = _random_params(rng, body_layout.joint_count)
            assert pose_nms_indices(poses, params) == brute_force_nms(poses, params)

    def test_idempotent_and_sorted(self, body_layout):
        rng = np.random.default_rng(12)
        for _ in range(50):
            poses = random_scene(body_layout, 8, rng)
            params = _random_params(rng, body_layout.joint_count)
            kept = pose_nms(poses, params)
            assert [p.score for p in kept] == sorted((p.score for p in kept), reverse=True)
            assert pose_nms(kept, params) == kept

    def test_exact_duplicates_collapse(self, make_pose):
        poses = [make_pose(0, 0, score=0.9), make_pose(0, 0, score=0.8), make_pose(300, 0, score=0.7)]
        params = NmsParams.default(poses[0].joint_count)
        assert pose_nms_indices(poses, params) == [0, 2]

    def test_ties_keep_lower_index(self, make_pose):
        poses = [make_pose(0, 0, score=0.5), make_pose(0, 0, score=0.5)]
        assert pose_nms_indices(poses, NmsParams.default(poses[0].joint_count)) == [0]

    def test_service_wraps_indices(self, make_pose):
        poses = [make_pose(0, 0, score=0.4), make_pose(0, 0, score=0.8)]
        service = PoseNmsService(NmsParams.default(poses[0].joint_count))
        assert service.suppress_indices(poses) == [1]
        assert service.suppress(poses) == [poses[1]]


class TestBaselines:
    def test_oks_nms_removes_near_duplicates(self, make_pose):
        poses = [make_pose(0, 0, score=0.6), make_pose(0.5, 0, score=0.9), make_pose(400, 0, score=0.3)]
        kept = oks_nms(poses)
        assert kept == [poses[1], poses[2]]

    def test_soft_oks_nms_decays_scores(self, make_pose):
        poses = [make_pose(0, 0, score=0.9), make_pose(0, 0, score=0.8), make_pose(400, 0, score=0.3)]
        kept = soft_oks_nms(poses, sigma=0.5)
        assert kept[0] is poses[0]
        decayed = [p for p in kept if p.box == poses[1].box and p is not poses[0]]
        assert decayed and decayed[0].score == pytest.approx(0.8 * np.exp(-2.0))
        far = [p for p in kept if p.box == poses[2].box]
        assert len(far) == 1 and far[0].score == pytest.approx(0.3)
        assert len(kept) == 3


class TestOptimization:
    def test_clean_duplicates_already_perfect(self, body_layout, rng):
        validation = gen_duplicated_validation(body_layout, 3, 3, 2, 0.0, rng)
        assert nms_map(validation, NmsParams.default(body_layout.joint_count)) == pytest.approx(1.0)

    def test_empty_validation_set(self, body_layout):
        params = NmsParams.default(body_layout.joint_count)
        with pytest.raises(InsufficientDataError):
            optimize_params([], params, NmsGrid.default(body_layout.joint_count))

    def test_search_recovers_from_no_suppression(self, body_layout, rng):
        joints = body_layout.joint_count
        validation = gen_duplicated_validation(body_layout, 4, 3, 3, 0.0, rng)
        init = NmsParams(sigma1=0.3, sigma2=1.0, lambda_=1.0, eta=1e9)
        tuned = optimize_params(validation, init, NmsGrid.default(joints), iters=2)
        assert tuned.eta < init.eta
        assert nms_map(validation, tuned) == pytest.approx(1.0)
        assert nms_map(validation, tuned) > nms_map(validation, init)

    def test_small_grid_never_gets_worse(self, body_layout, rng):
        validation = gen_duplicated_validation(body_layout, 2, 2, 2, 3.0, rng)
        init = NmsParams(sigma1=0.3, sigma2=1.0, lambda_=1.0, eta=1e6)
        grid = NmsGrid(sigma1=(0.3, 1.0), sigma2=(1.0, 50.0), lambda_=(1.0,), eta=(5.0, 13.0, 1e6))
        tuned = optimize_params(validation, init, grid, iters=2, workers=2)
        assert nms_map(validation, tuned) >= nms_map(validation, init)

    @pytest.mark.slow
    def test_tuning_beats_no_suppression(self, body_layout):
        rng = np.random.default_rng(5)
        joints = body_layout.joint_count
        validation = gen_duplicated_validation(body_layout, 8, 3, 3, 5.0, rng)
        start = time.perf_counter()
        baseline = nms_map(validation, None)
        tuned = optimize_params(validation, NmsParams.default(joints), NmsGrid.default(joints), iters=3)
        elapsed = time.perf_counter() - start
        assert nms_map(validation, tuned) >= baseline + 0.15
        assert elapsed < 60.0
