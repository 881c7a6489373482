"""特徵資料模型

FeatureMap (re-ID 特徵圖 / 注意力圖) 與 IdentityEmbedding (128 維身分向量)。
"""
from dataclasses import dataclass

import numpy as np

from src.config.constants import TrackingDefaults
from src.utils.exceptions import DimensionMismatchError, ValidationError, ZeroNormEmbeddingError

NORM_TOLERANCE = 1e-6


@dataclass(frozen=True, eq=False)
class FeatureMap:
    """C × H × W 特徵圖

    Attributes:
        values: 特徵值
        is_attention: 注意力圖額外要求數值在 [0, 1]
    """
    values: np.ndarray
    is_attention: bool = False

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim == 2:
            values = values[None]
        if values.ndim != 3:
            raise DimensionMismatchError(f"特徵圖必須為 C × H × W: {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValidationError("特徵圖含有非有限值")
        if self.is_attention and (values.min() < 0 or values.max() > 1):
            raise ValidationError("注意力圖數值必須在 [0, 1]")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def shape(self):
        return self.values.shape

    def flatten(self) -> np.ndarray:
        return self.values.ravel()


@dataclass(frozen=True, eq=False)
class IdentityEmbedding:
    """L2 正規化的身分向量"""
    vector: np.ndarray

    def __post_init__(self):
        vector = np.array(self.vector, dtype=float).ravel()
        if vector.shape != (TrackingDefaults.EMBEDDING_DIM,):
            raise DimensionMismatchError(
                f"embedding 長度必須為 {TrackingDefaults.EMBEDDING_DIM}: {vector.shape}"
            )
        if abs(np.linalg.norm(vector) - 1.0) > NORM_TOLERANCE:
            raise ValidationError(f"embedding 必須為單位向量 (norm={np.linalg.norm(vector):.6g})")
        vector.setflags(write=False)
        object.__setattr__(self, "vector", vector)

    @classmethod
    def normalized(cls, raw: np.ndarray) -> "IdentityEmbedding":
        """把任意向量正規化後建立

        Raises:
            ZeroNormEmbeddingError: 向量範數為零
        """
        raw = np.asarray(raw, dtype=float).ravel()
        norm = np.linalg.norm(raw)
        if not norm > 0 or not np.isfinite(norm):
            raise ZeroNormEmbeddingError("embedding 範數為零 (zero-norm embedding)")
        return cls(raw / norm)

    def cosine(self, other: "IdentityEmbedding") -> float:
        return float(np.dot(self.vector, other.vector))

    def blend(self, other: "IdentityEmbedding", momentum: float) -> "IdentityEmbedding":
        """指數移動平均：momentum · self + (1 − momentum) · other，再正規化

        兩向量互為反向且 momentum = 0.5 時無法正規化，此時保留 other。
        """
        mixed = momentum * self.vector + (1.0 - momentum) * other.vector
        try:
            return IdentityEmbedding.normalized(mixed)
        except ZeroNormEmbeddingError:
            return other
