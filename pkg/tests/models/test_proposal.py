import numpy as np
import pytest

from src.models.proposal import GaussianMixture, OffsetModel, OffsetSample
from src.utils.exceptions import ValidationError


def _mixture():
    return GaussianMixture(
        weights=[0.25, 0.75],
        means=[[0.0, 0.0], [1.0, -1.0]],
        covariances=[np.eye(2) * 0.01, np.diag([0.04, 0.02])],
    )


def test_weights_must_sum_to_one():
    with pytest.raises(ValidationError):
        GaussianMixture([0.5, 0.6], [[0, 0], [1, 1]], [np.eye(2), np.eye(2)])


def test_covariance_must_be_symmetric():
    with pytest.raises(ValidationError):
        GaussianMixture([1.0], [[0, 0]], [[[1.0, 0.5], [0.0, 1.0]]])


def test_sample_moments(rng):
    mixture = _mixture()
    samples = mixture.sample(200_000, rng)
    np.testing.assert_allclose(samples.mean(axis=0), mixture.mean(), atol=0.01)
    np.testing.assert_allclose(np.cov(samples, rowvar=False), mixture.covariance(), atol=0.01)


def test_point_mass_samples_exactly(rng):
    mixture = GaussianMixture.point_mass([0.1, -0.2])
    samples = mixture.sample(10, rng)
    np.testing.assert_array_equal(samples, np.tile([0.1, -0.2], (10, 1)))
    assert mixture.marginal_cdf(np.array([0.0, 0.1, 0.2]), 0).tolist() == [0.0, 1.0, 1.0]


def test_marginal_cdf_limits():
    mixture = _mixture()
    cdf = mixture.marginal_cdf(np.array([-10.0, 10.0]), 1)
    np.testing.assert_allclose(cdf, [0.0, 1.0], atol=1e-12)


def test_bic_penalizes_parameters(rng):
    mixture = _mixture()
    points = mixture.sample(500, rng)
    assert mixture.parameter_count == 11
    assert mixture.bic(points) == pytest.approx(
        -2 * mixture.log_likelihood(points) + 11 * np.log(500)
    )


def test_offset_model_dict_round_trip():
    model = OffsetModel("foot", _mixture(), GaussianMixture.point_mass([0, 0]), 2, np.zeros((4, 2)))
    restored = OffsetModel.from_dict("foot", model.to_dict())
    np.testing.assert_allclose(restored.x_model.means, model.x_model.means)
    np.testing.assert_allclose(restored.uniform_box, model.uniform_box)
    assert restored.components == 2


def test_unknown_part_rejected():
    with pytest.raises(ValidationError):
        OffsetSample(0, 0, 0, 0, part="tail")
    with pytest.raises(ValidationError):
        OffsetModel("tail", _mixture(), _mixture(), 2)


def test_uniform_box_bounds():
    box = np.zeros((4, 2))
    box[0] = [0.1, -0.1]
    with pytest.raises(ValidationError):
        OffsetModel("body", _mixture(), _mixture(), 2, box)
