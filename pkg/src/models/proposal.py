"""PGPG 資料模型

此模組定義：
- OffsetSample: 偵測框相對於 ground-truth 框的正規化偏移
- GaussianMixture: 二維高斯混合分布
- OffsetModel: 每個部位在水平 / 垂直平面各一個混合分布，以及均勻近似範圍
"""
from dataclasses import dataclass
from typing import Any, Dict, Optional

import numpy as np
from scipy.special import logsumexp
from scipy.stats import multivariate_normal, norm

from src.config.constants import PART_NAMES
from src.utils.exceptions import ValidationError

OFFSET_COLUMNS = ("dx_min", "dx_max", "dy_min", "dy_max")


@dataclass(frozen=True)
class OffsetSample:
    """正規化偏移

    dx_min = (x_min^det − x_min^gt) / (x_max^gt − x_min^gt)，其餘三項同理。
    """
    dx_min: float
    dx_max: float
    dy_min: float
    dy_max: float
    part: str

    def __post_init__(self):
        if self.part not in PART_NAMES:
            raise ValidationError(f"未知的部位名稱: {self.part}")

    def as_array(self) -> np.ndarray:
        return np.array([self.dx_min, self.dx_max, self.dy_min, self.dy_max], dtype=float)


@dataclass(frozen=True, eq=False)
class GaussianMixture:
    """二維高斯混合

    Attributes:
        weights: (K,) 權重，總和為 1
        means: (K, 2)
        covariances: (K, 2, 2) 對稱半正定
    """
    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray

    def __post_init__(self):
        weights = np.array(self.weights, dtype=float).ravel()
        means = np.array(self.means, dtype=float).reshape(-1, 2)
        covs = np.array(self.covariances, dtype=float).reshape(-1, 2, 2)
        k = weights.shape[0]
        if k < 1 or means.shape[0] != k or covs.shape[0] != k:
            raise ValidationError(f"混合分布形狀不一致: {weights.shape}, {means.shape}, {covs.shape}")
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-6:
            raise ValidationError("混合權重必須非負且總和為 1")
        if not np.allclose(covs, np.transpose(covs, (0, 2, 1))):
            raise ValidationError("共變異數矩陣必須對稱")
        if np.any(np.linalg.eigvalsh(covs) < -1e-12):
            raise ValidationError("共變異數矩陣必須半正定")
        for arr in (weights, means, covs):
            arr.setflags(write=False)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "covariances", covs)

    @property
    def components(self) -> int:
        return self.weights.shape[0]

    @property
    def parameter_count(self) -> int:
        # K − 1 個權重 + 2K 個平均 + 3K 個共變異數
        return 6 * self.components - 1

    def component_log_pdf(self, points: np.ndarray) -> np.ndarray:
        """(N, K) 的 log π_k + log N(x | μ_k, Σ_k)"""
        points = np.asarray(points, dtype=float).reshape(-1, 2)
        out = np.empty((points.shape[0], self.components))
        for k in range(self.components):
            with np.errstate(divide="ignore"):
                log_w = np.log(self.weights[k])
            out[:, k] = log_w + multivariate_normal.logpdf(
                points, mean=self.means[k], cov=self.covariances[k], allow_singular=True
            )
        return out

    def log_pdf(self, points: np.ndarray) -> np.ndarray:
        return logsumexp(self.component_log_pdf(points), axis=1)

    def log_likelihood(self, points: np.ndarray) -> float:
        return float(np.sum(self.log_pdf(points)))

    def bic(self, points: np.ndarray) -> float:
        n = np.asarray(points).reshape(-1, 2).shape[0]
        return -2.0 * self.log_likelihood(points) + self.parameter_count * np.log(n)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """抽樣 (n, 2)；以特徵分解取平方根，零變異數時回傳平均值本身"""
        labels = rng.choice(self.components, size=n, p=self.weights)
        z = rng.standard_normal((n, 2))
        eigval, eigvec = np.linalg.eigh(self.covariances)
        roots = eigvec * np.sqrt(np.clip(eigval, 0.0, None))[:, None, :]
        return self.means[labels] + np.einsum("nij,nj->ni", roots[labels], z)

    def marginal_cdf(self, values: np.ndarray, dim: int) -> np.ndarray:
        """第 dim 維的邊際 CDF Σ π_k Φ((v − μ_kd) / σ_kd)"""
        values = np.asarray(values, dtype=float)
        out = np.zeros_like(values)
        for k in range(self.components):
            mu = self.means[k, dim]
            sd = np.sqrt(self.covariances[k, dim, dim])
            if sd > 0:
                out += self.weights[k] * norm.cdf(values, loc=mu, scale=sd)
            else:
                out += self.weights[k] * (values >= mu)
        return out

    def mean(self) -> np.ndarray:
        return self.weights @ self.means

    def covariance(self) -> np.ndarray:
        m = self.mean()
        second = np.einsum("k,kij->ij", self.weights, self.covariances + np.einsum("ki,kj->kij", self.means, self.means))
        return second - np.outer(m, m)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "covariances": self.covariances.tolist(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "GaussianMixture":
        try:
            return cls(data["weights"], data["means"], data["covariances"])
        except KeyError as e:
            raise ValidationError(f"混合分布缺少欄位: {e}") from e

    @classmethod
    def point_mass(cls, mean) -> "GaussianMixture":
        """單一零變異數元件"""
        return cls(np.ones(1), np.asarray(mean, dtype=float).reshape(1, 2), np.zeros((1, 2, 2)))


@dataclass(frozen=True, eq=False)
class OffsetModel:
    """部位的偏移模型

    Attributes:
        part: 部位名稱
        x_model: (dx_min, dx_max) 的混合分布
        y_model: (dy_min, dy_max) 的混合分布
        components: 擬合時要求的元件數
        uniform_box: (4, 2) 每個偏移維度的 [low, high]，順序同 OFFSET_COLUMNS
    """
    part: str
    x_model: GaussianMixture
    y_model: GaussianMixture
    components: int
    uniform_box: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.part not in PART_NAMES:
            raise ValidationError(f"未知的部位名稱: {self.part}")
        if self.uniform_box is not None:
            box = np.array(self.uniform_box, dtype=float).reshape(4, 2)
            if np.any(box[:, 0] > box[:, 1]):
                raise ValidationError("uniform_box 下界不可大於上界")
            box.setflags(write=False)
            object.__setattr__(self, "uniform_box", box)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "components": self.components,
            "x_model": self.x_model.to_dict(),
            "y_model": self.y_model.to_dict(),
            "uniform_box": None if self.uniform_box is None else self.uniform_box.tolist(),
        }

    @classmethod
    def from_dict(cls, part: str, data: Dict[str, Any]) -> "OffsetModel":
        try:
            return cls(
                part=part,
                x_model=GaussianMixture.from_dict(data["x_model"]),
                y_model=GaussianMixture.from_dict(data["y_model"]),
                components=int(data["components"]),
                uniform_box=data.get("uniform_box"),
            )
        except KeyError as e:
            raise ValidationError(f"偏移模型缺少欄位: {e}") from e
