import numpy as np
import pytest

from src.models.features import FeatureMap, IdentityEmbedding
from src.utils.exceptions import DimensionMismatchError, ValidationError, ZeroNormEmbeddingError


def test_normalized_embedding_has_unit_norm(rng):
    emb = IdentityEmbedding.normalized(rng.standard_normal(128) * 5)
    assert np.linalg.norm(emb.vector) == pytest.approx(1.0)


def test_zero_norm_embedding():
    with pytest.raises(ZeroNormEmbeddingError):
        IdentityEmbedding.normalized(np.zeros(128))


def test_embedding_requires_unit_norm_and_length():
    with pytest.raises(ValidationError):
        IdentityEmbedding(np.full(128, 0.5))
    with pytest.raises(DimensionMismatchError):
        IdentityEmbedding.normalized(np.ones(64))


def test_blend_is_normalized_and_handles_opposites():
    a = IdentityEmbedding(np.eye(128)[0])
    b = IdentityEmbedding(np.eye(128)[1])
    mixed = a.blend(b, 0.9)
    assert np.linalg.norm(mixed.vector) == pytest.approx(1.0)
    assert mixed.cosine(a) > mixed.cosine(b)

    opposite = IdentityEmbedding(-np.eye(128)[0])
    assert a.blend(opposite, 0.5) is opposite


def test_attention_map_range():
    with pytest.raises(ValidationError):
        FeatureMap(np.full((1, 2, 2), 1.5), is_attention=True)
    FeatureMap(np.full((1, 2, 2), 1.5))


def test_feature_map_shape():
    assert FeatureMap(np.zeros((3, 4))).shape == (1, 3, 4)
    with pytest.raises(DimensionMismatchError):
        FeatureMap(np.zeros((2, 2, 2, 2)))
