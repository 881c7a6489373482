import numpy as np
import pytest

from src.data_access.detection_file import DetectionRepository
from src.data_access.feature_file import FeatureRepository
from src.data_access.heatmap_file import HeatmapRepository
from src.data_access.track_file import read_tracks_jsonl
from src.models.geometry import DetectionBox, Pose
from src.synth.generators import (
    OcclusionWindow,
    attention_from_pose,
    gen_duplicated_scene,
    gen_heatmap,
    gen_trajectories,
    identity_map,
    template_pose,
)
from src.synth.scene import write_scene
from src.utils.exceptions import ValidationError


def test_template_pose_stays_in_box(body_layout, wholebody_layout):
    box = DetectionBox(10, 20, 110, 220)
    for layout in (body_layout, wholebody_layout):
        pose = template_pose(layout, box, confidence=0.8)
        assert pose.coords.shape == (layout.joint_count, 2)
        assert all(box.contains(x, y) for x, y in pose.coords)
        assert np.all(pose.confidences == 0.8)


class TestGenHeatmap:
    def test_symmetric_peak_expectation(self):
        result = gen_heatmap((23.5, 31.5), 1.5, 48, 64)
        assert result.heatmap.values.shape == (1, 64, 48)
        assert result.expected == pytest.approx((23.5, 31.5), abs=1e-6)

    @pytest.mark.parametrize("peak", [(-1.0, 3.0), (3.0, 64.0)])
    def test_peak_outside_grid(self, peak):
        with pytest.raises(ValidationError):
            gen_heatmap(peak, 1.5, 48, 64)

    def test_bad_sigma(self):
        with pytest.raises(ValidationError):
            gen_heatmap((3.0, 3.0), 0.0, 48, 64)


def test_duplicated_scene(body_layout, rng):
    candidates, truth = gen_duplicated_scene(body_layout, 3, 4, 0.0, rng)
    assert len(truth) == 3 and len(candidates) == 15
    first = candidates[:5]
    assert all(np.array_equal(p.coords, truth[0].coords) for p in first)
    scores = [p.score for p in first]
    assert scores == sorted(scores, reverse=True)
    assert scores[4] == pytest.approx(scores[0] * 0.88)
    with pytest.raises(ValidationError):
        gen_duplicated_scene(body_layout, 1, -1, 0.0, rng)


class TestTrajectories:
    def test_occlusion_removes_detection_and_truth(self, body_layout, rng):
        window = OcclusionWindow(person=1, start=3, end=6)
        result = gen_trajectories(body_layout, 2, 10, False, [window], emb_noise=0.0, rng=rng)
        counts = [len(b.poses) for b in result.bundles]
        assert counts == [2, 2, 2, 1, 1, 1, 2, 2, 2, 2]
        assert len(result.gt_tracks) == 17
        assert all(r.track_id == 1 for r in result.gt_tracks if 3 <= r.frame < 6)

    def test_identity_map_matches_positions(self, body_layout, rng):
        result = gen_trajectories(body_layout, 3, 5, False, [], emb_noise=0.0, rng=rng)
        ids = identity_map(result)
        for (f, p), ident in ids.items():
            assert result.bundles[f].poses[p].box.y_min == pytest.approx(ident * 200.0)

    def test_crossing_people_swap_sides(self, body_layout, rng):
        result = gen_trajectories(body_layout, 2, 11, True, [], emb_noise=0.0, rng=rng)
        by_frame = {(r.frame, r.track_id): r.box.x_min for r in result.gt_tracks}
        assert by_frame[(0, 1)] < by_frame[(0, 2)]
        assert by_frame[(10, 1)] > by_frame[(10, 2)]

    def test_embeddings(self, body_layout, rng):
        result = gen_trajectories(body_layout, 2, 3, False, [], emb_noise=0.1, rng=rng)
        for bundle in result.bundles:
            assert all(abs(np.linalg.norm(e.vector) - 1.0) < 1e-6 for e in bundle.embeddings)
        shared = gen_trajectories(body_layout, 2, 1, False, [], 0.0, rng, shared_embedding=True)
        a, b = shared.bundles[0].embeddings
        assert a.cosine(b) == pytest.approx(1.0)
        bare = gen_trajectories(body_layout, 2, 1, False, [], 0.0, rng, with_embeddings=False)
        assert bare.bundles[0].embeddings is None


def test_attention_from_pose(make_pose):
    pose = make_pose(0, 0)
    att = attention_from_pose(pose, 120, 60, sigma=2.0)
    assert att.is_attention and att.shape == (1, 120, 60)
    assert att.values.max() == pytest.approx(1.0, abs=0.2)
    blank = make_pose()
    hidden = Pose(blank.layout, blank.coords, np.zeros(blank.joint_count), box=blank.box)
    assert attention_from_pose(hidden, 8, 8, sigma=2.0).values.max() == 0.0


def test_write_scene(tmp_path, body_layout):
    rng = np.random.default_rng(3)
    scene = gen_trajectories(body_layout, 2, 4, False, [], 0.0, rng, with_embeddings=False)
    paths = write_scene(tmp_path, scene, rng, heatmap_shape=(16, 12), distractors=True, feature_channels=3)
    detections = DetectionRepository(paths.detections)
    assert detections.ids() == [0, 1, 2, 3]
    assert all(len(detections.get_by_id(f).detections) == 3 for f in range(4))
    heatmaps = HeatmapRepository(paths.heatmaps)
    assert len(heatmaps) == 12
    assert heatmaps.shape(0) == (body_layout.joint_count, 16, 12)
    assert FeatureRepository(paths.features).get_by_id(2).shape == (3, 16, 12)
    assert len(read_tracks_jsonl(paths.gt_tracks, body_layout)) == 8


def test_write_scene_without_features(tmp_path, body_layout):
    rng = np.random.default_rng(3)
    scene = gen_trajectories(body_layout, 1, 2, False, [], 0.0, rng, with_embeddings=False)
    paths = write_scene(tmp_path, scene, rng, heatmap_shape=(16, 12))
    assert paths.features is None
    assert len(HeatmapRepository(paths.heatmaps)) == 2
