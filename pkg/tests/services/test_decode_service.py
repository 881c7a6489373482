import time

import numpy as np
import pytest
from scipy.special import expit

from src.config.constants import Axis, GradientForm, HeatmapKind
from src.config.settings import AsgConfig
from src.models.geometry import CropTransform, DetectionBox, Heatmap
from src.services.decode_service import (
    DecodeService,
    argmax_decode,
    asg_calibration_probe,
    decode_pose,
    grad_asg,
    grad_integral,
    joint_confidence,
    l1_location_loss,
    lipschitz_probe,
    normalize_softmax,
    normalize_two_step,
    soft_argmax,
    soft_argmax_all,
)
from src.synth.generators import gen_heatmap, gen_pose_heatmaps
from src.synth.oracles import central_difference, scalar_expectation, scalar_two_step
from src.utils.exceptions import DimensionMismatchError, EmptyHeatmapError, ValidationError


class TestNormalization:
    def test_two_step_matches_scalar_loop(self, rng):
        z = rng.normal(0.0, 2.0, size=(6, 7))
        conf, prob = normalize_two_step(Heatmap(z, HeatmapKind.LOGITS))
        c_ref, p_ref = scalar_two_step(z)
        np.testing.assert_allclose(conf.values[0], c_ref, rtol=1e-12)
        np.testing.assert_allclose(prob.values[0], p_ref, rtol=1e-12)
        assert soft_argmax(prob) == pytest.approx(scalar_expectation(p_ref))

    def test_probability_sums_to_one_per_joint(self, rng):
        z = rng.normal(0.0, 5.0, size=(3, 8, 8))
        _, prob = normalize_two_step(Heatmap(z, HeatmapKind.LOGITS))
        np.testing.assert_allclose(prob.values.sum(axis=(1, 2)), 1.0)
        np.testing.assert_allclose(normalize_softmax(Heatmap(z, HeatmapKind.LOGITS)).values.sum(axis=(1, 2)), 1.0)

    def test_extreme_logits_are_clipped(self):
        z = np.full((1, 4, 4), -1e6)
        z[0, 1, 2] = 1e6
        conf, prob = normalize_two_step(Heatmap(z, HeatmapKind.LOGITS))
        assert np.all(np.isfinite(prob.values))
        assert soft_argmax(prob) == pytest.approx((2.0, 1.0), abs=1e-6)
        assert 0 < conf.values.min()

    def test_all_negative_infinity_is_empty(self):
        z = np.zeros((2, 3, 3))
        z[1] = -np.inf
        with pytest.raises(EmptyHeatmapError):
            normalize_two_step(Heatmap(z, HeatmapKind.LOGITS))

    def test_partial_negative_infinity_is_fine(self):
        z = np.zeros((1, 3, 3))
        z[0, 0, :] = -np.inf
        _, prob = normalize_two_step(Heatmap(z, HeatmapKind.LOGITS))
        assert soft_argmax(prob)[1] == pytest.approx(1.5)

    def test_wrong_kind_rejected(self):
        with pytest.raises(ValidationError):
            normalize_two_step(Heatmap(np.full((1, 2, 2), 0.25), HeatmapKind.PROBABILITY))


class TestLocalization:
    def test_sub_pixel_accuracy_beats_argmax(self):
        rng = np.random.default_rng(0)
        peaks = rng.uniform(4.0, 11.0, size=(1000, 2))
        soft_err = []
        arg_err = []
        start = time.perf_counter()
        for px, py in peaks:
            synthetic = gen_heatmap((px, py), 1.0, 16, 16)
            _, prob = normalize_two_step(synthetic.heatmap)
            x, y = soft_argmax(prob)
            soft_err.append(np.hypot(x - px, y - py))
            ax, ay = argmax_decode(synthetic.heatmap)
            arg_err.extend([abs(ax - px), abs(ay - py)])
        elapsed = time.perf_counter() - start
        assert np.mean(soft_err) <= 0.05
        assert 0.2 <= np.mean(arg_err) <= 0.3
        assert elapsed < 5.0

    def test_generator_expectation_matches_decoder(self):
        synthetic = gen_heatmap((5.3, 7.8), 1.5, 16, 12)
        _, prob = normalize_two_step(synthetic.heatmap)
        assert soft_argmax(prob) == pytest.approx(synthetic.expected, abs=1e-12)

    def test_soft_argmax_all_matches_per_joint(self, rng):
        z = rng.normal(size=(4, 6, 9))
        _, prob = normalize_two_step(Heatmap(z, HeatmapKind.LOGITS))
        xy = soft_argmax_all(prob)
        for j in range(4):
            assert tuple(xy[j]) == pytest.approx(soft_argmax(prob, j))


class TestConfidence:
    def test_max_confidence_does_not_depend_on_spread(self):
        peaks = []
        ratios = []
        for sigma in (0.5, 1.0, 2.0, 4.0):
            synthetic = gen_heatmap((16.0, 16.0), sigma, 32, 32)
            conf, _ = normalize_two_step(synthetic.heatmap)
            peaks.append(joint_confidence(conf)[0])
            ratios.append(normalize_softmax(synthetic.heatmap).values.max())
        np.testing.assert_allclose(peaks, expit(3.0), atol=1e-9)
        assert max(ratios) / min(ratios) > 10.0

    def test_joint_confidence_requires_confidence_map(self):
        with pytest.raises(ValidationError):
            joint_confidence(Heatmap(np.zeros((1, 2, 2)), HeatmapKind.LOGITS))


class TestGradients:
    @pytest.mark.parametrize("axis", [Axis.X, Axis.Y])
    def test_logits_gradient_matches_finite_difference(self, axis):
        rng = np.random.default_rng(3)
        for _ in range(100):
            z = rng.standard_normal((8, 8))
            conf, prob = normalize_two_step(Heatmap(z, HeatmapKind.LOGITS))
            mu_hat = soft_argmax(prob)[axis.value]
            analytic = grad_integral(prob, mu_hat, -5.0, axis, GradientForm.LOGITS, conf=conf)
            numeric = central_difference(lambda v: l1_location_loss(v, -5.0, axis, two_step=True), z)
            np.testing.assert_allclose(analytic, numeric, rtol=1e-4, atol=1e-9)

    def test_softmax_gradient_matches_finite_difference(self, rng):
        z = rng.standard_normal((6, 6))
        prob = normalize_softmax(Heatmap(z, HeatmapKind.LOGITS))
        mu_hat = soft_argmax(prob)[0]
        analytic = grad_integral(prob, mu_hat, 20.0, Axis.X, GradientForm.LOGITS)
        numeric = central_difference(lambda v: l1_location_loss(v, 20.0, Axis.X, two_step=False), z)
        np.testing.assert_allclose(analytic, numeric, rtol=1e-4, atol=1e-9)

    def test_probability_gradient_is_signed_coordinate(self):
        prob = Heatmap(np.full((1, 2, 3), 1 / 6), HeatmapKind.PROBABILITY)
        grad = grad_integral(prob, 1.0, 2.0, Axis.X, GradientForm.PROB)
        np.testing.assert_array_equal(grad, -np.tile([0.0, 1.0, 2.0], (2, 1)))

    def test_asg_has_constant_amplitude(self):
        synthetic = gen_heatmap((7.4, 8.0), 1.0, 16, 16)
        _, prob = normalize_two_step(synthetic.heatmap)
        mu_hat = soft_argmax(prob)[0]
        grad = grad_asg(prob, mu_hat, 3.0)
        assert set(np.unique(np.abs(grad))) == {2.0}
        np.testing.assert_array_equal(grad[:, :8], -2.0)
        np.testing.assert_array_equal(grad[:, 8:], 2.0)

    def test_asg_both_axes_and_custom_amplitude(self):
        prob = Heatmap(np.full((1, 4, 4), 1 / 16), HeatmapKind.PROBABILITY)
        grad = grad_asg(prob, (1.5, 1.5), (0.0, 3.0), AsgConfig(a_grad=1.0), axis=None)
        # x 分量 sgn(x − 1.5)，y 分量 −sgn(y − 1.5)
        assert grad[0, 3] == pytest.approx(2.0)
        assert grad[3, 0] == pytest.approx(-2.0)
        assert grad[0, 0] == pytest.approx(0.0)

    def test_asg_zero_when_on_target(self):
        prob = Heatmap(np.full((1, 4, 4), 1 / 16), HeatmapKind.PROBABILITY)
        assert not np.any(grad_asg(prob, 1.5, 1.5))


class TestProbes:
    @pytest.mark.slow
    def test_asg_is_smoother_than_integral(self):
        estimate = lipschitz_probe(1000, shape=(16, 16))
        assert estimate.trials_used > 0
        assert estimate.ratio <= 0.30

    @pytest.mark.slow
    def test_integral_ratio_grows_linearly_with_width(self):
        narrow = lipschitz_probe(200, shape=(8, 16), seed=1)
        wide = lipschitz_probe(200, shape=(8, 32), seed=1)
        slope = np.log2(wide.ratio_integral / narrow.ratio_integral)
        assert 0.5 <= slope <= 1.5
        # A_grad = W / 8 跟著寬度縮放，兩規則的比例不變
        assert wide.ratio == pytest.approx(narrow.ratio, rel=0.5)

    def test_probe_needs_enough_trials(self):
        with pytest.raises(ValidationError):
            lipschitz_probe(10)

    def test_zero_perturbation_is_undefined(self):
        assert np.isnan(lipschitz_probe(100, perturbation_scale=0.0).ratio_asg)

    def test_asg_amplitude_calibration(self):
        estimate = asg_calibration_probe(16, 10_000)
        assert estimate.asg_amplitude == pytest.approx(4.0)
        assert estimate.relative_error <= 0.10
        assert 0.0 < estimate.asg_sampled <= estimate.asg_amplitude


class TestPoseDecoding:
    def test_decode_maps_into_image_space(self, body_layout):
        box = DetectionBox(100.0, 50.0, 148.0, 114.0, score=0.5)
        j = np.arange(body_layout.joint_count)
        peaks = np.column_stack([j % 20 + 2.0, 10.0 + 5.0 * (j // 20)])
        heatmaps = gen_pose_heatmaps(peaks, 1.0, 24, 32)
        transform = CropTransform.from_box(box, 24, 32)
        pose = decode_pose(heatmaps, transform, body_layout, box)
        np.testing.assert_allclose(pose.coords, transform.apply(peaks), atol=0.05)
        assert pose.score == pytest.approx(expit(3.0))

    def test_joint_count_must_match_layout(self, body_layout):
        with pytest.raises(DimensionMismatchError):
            decode_pose(Heatmap(np.zeros((3, 4, 4)), HeatmapKind.LOGITS), CropTransform.identity(), body_layout)

    def test_crop_scores_multiply_detection_score(self, body_layout):
        box = DetectionBox(0.0, 0.0, 24.0, 32.0, score=0.5)
        peaks = np.tile([[12.0, 16.0]], (body_layout.joint_count, 1))
        heatmaps = gen_pose_heatmaps(peaks, 1.0, 24, 32)
        service = DecodeService(body_layout)
        (pose,) = service.decode_crops([heatmaps], [CropTransform.from_box(box, 24, 32)], [box])
        assert pose.score == pytest.approx(0.5 * expit(3.0))
        assert pose.box is box
