"""熱圖解碼服務

此模組實作對稱積分關鍵點回歸：
- 兩步驟正規化 (sigmoid 信心圖 -> 總和為 1 的機率圖) 與一步 soft-max 基準
- soft-argmax 位置讀出與 argmax 基準
- 積分回歸梯度與振幅對稱梯度 (ASG)
- Lipschitz 探測與 ASG 振幅校準的數值驗證

座標慣例：網格索引 i 即連續座標 i。
"""
import logging
from dataclasses import dataclass
from typing import List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import expit, logsumexp

from src.config.constants import Axis, DecodeDefaults, GradientForm, HeatmapKind
from src.config.settings import AsgConfig
from src.models.geometry import CropTransform, DetectionBox, Heatmap, Pose
from src.models.layout import SkeletonLayout
from src.utils.exceptions import DimensionMismatchError, EmptyHeatmapError, ValidationError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DecodedJoint:
    """單一關節的解碼結果 (熱圖座標)"""
    x: float
    y: float
    confidence: float

    @property
    def mu_hat(self) -> Tuple[float, float]:
        return (self.x, self.y)


class LipschitzEstimate(NamedTuple):
    ratio_integral: float
    ratio_asg: float
    trials_used: int

    @property
    def ratio(self) -> float:
        return self.ratio_asg / self.ratio_integral


class CalibrationEstimate(NamedTuple):
    """asg_amplitude 為解析上界 2 · A_grad (常數)；asg_sampled 為取樣熱圖上的實際係數峰值平均"""
    asg_amplitude: float
    integral_amplitude: float
    asg_sampled: float = float("nan")

    @property
    def relative_error(self) -> float:
        return abs(self.asg_amplitude - self.integral_amplitude) / self.integral_amplitude


def _require_kind(heatmap: Heatmap, kind: HeatmapKind) -> None:
    if heatmap.kind is not kind:
        raise ValidationError(f"需要 {kind.name} 熱圖，收到 {heatmap.kind.name}")


def _clipped_logits(logits: Heatmap) -> np.ndarray:
    """檢查並裁切 logits

    Raises:
        EmptyHeatmapError: 某個關節全部為 -inf
    """
    _require_kind(logits, HeatmapKind.LOGITS)
    values = logits.values
    flat = values.reshape(values.shape[0], -1)
    empty = np.all(np.isneginf(flat), axis=1)
    if np.any(empty):
        raise EmptyHeatmapError(f"熱圖為空 (empty heatmap): 關節 {np.flatnonzero(empty).tolist()}")
    return np.clip(values, -DecodeDefaults.LOGIT_CLIP, DecodeDefaults.LOGIT_CLIP)


def _two_step(z: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """對最後兩軸做兩步驟正規化，回傳 (c, p)"""
    c = expit(z)
    p = c / c.sum(axis=(-2, -1), keepdims=True)
    return c, p


def normalize_two_step(logits: Heatmap) -> Tuple[Heatmap, Heatmap]:
    """兩步驟正規化

    c_x = sigmoid(z_x)，p_x = c_x / ΣC。

    Args:
        logits: logits 熱圖

    Returns:
        (信心熱圖, 機率熱圖)

    Raises:
        EmptyHeatmapError: 某個關節全部為 -inf
    """
    c, p = _two_step(_clipped_logits(logits))
    return Heatmap(c, HeatmapKind.CONFIDENCE), Heatmap(p, HeatmapKind.PROBABILITY)


def normalize_softmax(logits: Heatmap) -> Heatmap:
    """一步 soft-max 正規化 (基準)"""
    z = _clipped_logits(logits)
    flat = z.reshape(z.shape[0], -1)
    p = np.exp(flat - logsumexp(flat, axis=1, keepdims=True))
    p /= p.sum(axis=1, keepdims=True)
    return Heatmap(p.reshape(z.shape), HeatmapKind.PROBABILITY)


def joint_confidence(conf: Heatmap) -> np.ndarray:
    """每個關節的信心分數 max(C)"""
    _require_kind(conf, HeatmapKind.CONFIDENCE)
    return conf.values.reshape(conf.joints, -1).max(axis=1)


def soft_argmax(prob: Heatmap, joint: int = 0) -> Tuple[float, float]:
    """機率圖下座標的期望值 (以邊際分布逐軸計算)"""
    _require_kind(prob, HeatmapKind.PROBABILITY)
    p = prob.joint(joint)
    px = p.sum(axis=0)
    py = p.sum(axis=1)
    return float(px @ np.arange(prob.width)), float(py @ np.arange(prob.height))


def soft_argmax_all(prob: Heatmap) -> np.ndarray:
    """所有關節的 soft-argmax，(J, 2)"""
    _require_kind(prob, HeatmapKind.PROBABILITY)
    p = prob.values
    x = p.sum(axis=1) @ np.arange(prob.width)
    y = p.sum(axis=2) @ np.arange(prob.height)
    return np.stack([x, y], axis=1)


def argmax_decode(heatmap: Heatmap, joint: int = 0) -> Tuple[float, float]:
    """整數 argmax 讀出 (量化誤差基準)"""
    grid = heatmap.joint(joint)
    row, col = np.unravel_index(int(np.argmax(grid)), grid.shape)
    return float(col), float(row)


def decode_joints(logits: Heatmap) -> List[DecodedJoint]:
    conf, prob = normalize_two_step(logits)
    xy = soft_argmax_all(prob)
    confidence = joint_confidence(conf)
    return [DecodedJoint(float(x), float(y), float(c)) for (x, y), c in zip(xy, confidence)]


def decode_pose(
    logits: Heatmap,
    crop_transform: CropTransform,
    layout: SkeletonLayout,
    box: Optional[DetectionBox] = None,
) -> Pose:
    """把一個 crop 的 logits 熱圖解碼為影像座標下的姿態

    Args:
        logits: J × H × W logits
        crop_transform: 熱圖到影像的轉換
        layout: 骨架配置
        box: 來源提案框

    Returns:
        Pose，score 為關節信心分數的平均

    Raises:
        DimensionMismatchError: J 與配置關節數不符
    """
    if logits.joints != layout.joint_count:
        raise DimensionMismatchError(
            f"熱圖關節數 {logits.joints} 與配置 {layout.name} ({layout.joint_count}) 不符"
        )
    conf, prob = normalize_two_step(logits)
    confidence = joint_confidence(conf)
    coords = crop_transform.apply(soft_argmax_all(prob))
    return Pose(layout=layout, coords=coords, confidences=confidence, score=float(confidence.mean()), box=box)


def _axis_grid(shape: Tuple[int, int], axis: Axis) -> np.ndarray:
    h, w = shape
    if axis is Axis.X:
        return np.broadcast_to(np.arange(w, dtype=float), (h, w))
    return np.broadcast_to(np.arange(h, dtype=float)[:, None], (h, w))


def grad_integral(
    prob: Heatmap,
    mu_hat: float,
    mu: float,
    axis: Axis = Axis.X,
    form: GradientForm = GradientForm.PROB,
    conf: Optional[Heatmap] = None,
    joint: int = 0,
) -> np.ndarray:
    """積分回歸 ℓ1 位置損失 |μ̂ − μ| 的梯度

    PROB: 對機率圖的梯度 x · sgn(μ̂ − μ)
    LOGITS: 經正規化傳回 logits 的梯度 sgn(μ̂ − μ) · (x − μ̂) · p_x；
        提供兩步驟正規化的信心圖時再乘上 (1 − c_x)

    Returns:
        H × W 梯度網格
    """
    _require_kind(prob, HeatmapKind.PROBABILITY)
    p = prob.joint(joint)
    x = _axis_grid(p.shape, axis)
    sign = np.sign(mu_hat - mu)
    if form is GradientForm.PROB:
        return sign * x
    grad = sign * (x - mu_hat) * p
    if conf is not None:
        _require_kind(conf, HeatmapKind.CONFIDENCE)
        grad = grad * (1.0 - conf.joint(joint))
    return grad


def grad_asg(
    prob: Heatmap,
    mu_hat: Union[float, Sequence[float]],
    mu: Union[float, Sequence[float]],
    cfg: AsgConfig = AsgConfig(),
    axis: Optional[Axis] = Axis.X,
    joint: int = 0,
) -> np.ndarray:
    """振幅對稱梯度 A_grad · sgn(x − μ̂) · sgn(μ̂ − μ)

    axis 為 None 時 mu_hat / mu 為 (x, y)，兩軸各自計算後相加。
    振幅依該軸的熱圖尺寸解析 (預設 size / 8)。
    """
    _require_kind(prob, HeatmapKind.PROBABILITY)
    shape = prob.joint(joint).shape
    if axis is None:
        return sum(
            grad_asg(prob, mu_hat[i], mu[i], cfg, ax, joint) for i, ax in enumerate((Axis.X, Axis.Y))
        )
    size = shape[1] if axis is Axis.X else shape[0]
    amplitude = cfg.resolve(size)
    x = _axis_grid(shape, axis)
    return amplitude * np.sign(x - mu_hat) * np.sign(mu_hat - mu)


def l1_location_loss(z: np.ndarray, mu: float, axis: Axis = Axis.X, two_step: bool = True) -> float:
    """從 H × W logits 到 |μ̂ − μ| 的完整計算 (有限差分用)"""
    z = np.clip(np.asarray(z, dtype=float), -DecodeDefaults.LOGIT_CLIP, DecodeDefaults.LOGIT_CLIP)
    if two_step:
        _, p = _two_step(z)
    else:
        p = np.exp(z - logsumexp(z))
    mu_hat = float(np.sum(_axis_grid(z.shape, axis) * p))
    return abs(mu_hat - mu)


def _jacobians(z: np.ndarray, x: np.ndarray, amplitude: float):
    """logits 梯度對 logits 的解析 Jacobian (兩種梯度規則)

    梯度以 soft-max 鏈式形式寫成 g = a ⊙ p，其中
    積分: a = x − μ̂；ASG: a = A · (sgn(x − μ̂) − Σ sgn · p)。
    ∂p_x / ∂z_y = w_y (δ_xy − p_x)，w = c (1 − c) / S。
    """
    c = expit(z)
    s = c.sum()
    p = c / s
    w = c * (1.0 - c) / s
    mu_hat = float(x @ p)

    def jac(a: np.ndarray) -> np.ndarray:
        return np.diag(a * w) - np.outer(a * p, w) - np.outer(p, w * a)

    u = x - mu_hat
    sigma = np.sign(u)
    v = sigma - sigma @ p
    return p, jac(u), amplitude * jac(v), sigma


def _gradient_maps(z: np.ndarray, x: np.ndarray, amplitude: float, sigma: np.ndarray):
    c = expit(z)
    p = c / c.sum()
    u = x - x @ p
    return p, u * p, amplitude * (sigma - sigma @ p) * p


def _top_direction(jac: np.ndarray, rng: np.random.Generator, iters: int) -> np.ndarray:
    v = rng.standard_normal(jac.shape[1])
    v /= np.linalg.norm(v)
    jtj = jac.T @ jac
    for _ in range(iters):
        v = jtj @ v
        n = np.linalg.norm(v)
        if n == 0:
            break
        v /= n
    return v


def lipschitz_probe(
    n_trials: int = 1000,
    perturbation_scale: float = DecodeDefaults.LIPSCHITZ_PERTURBATION,
    shape: Tuple[int, int] = (16, 16),
    cfg: AsgConfig = AsgConfig(),
    seed: int = 0,
) -> LipschitzEstimate:
    """以數值估計兩種梯度規則的 Lipschitz 常數

    每次試驗：隨機 logits z ~ N(0, 1)，以冪次法找出梯度映射 Jacobian 的最大方向，
    沿該方向施加 perturbation_scale · ‖z‖ 的擾動，量測 ‖Δ∇‖ / ‖Δp‖
    (除以 ‖Δp‖ 以消去正規化本身的 Lipschitz 常數)。擾動改變符號樣式的試驗略過。
    目標 μ 固定為 0，使 sgn(μ̂ − μ) = 1。

    Args:
        n_trials: 試驗次數 (>= 100)
        perturbation_scale: 相對擾動大小；0 時比例無定義，回傳 NaN
        shape: 熱圖尺寸 (H, W)，沿 x 軸計算
        cfg: ASG 設定
        seed: 亂數種子

    Returns:
        LipschitzEstimate，各規則取所有試驗的最大值

    Raises:
        ValidationError: n_trials < 100
    """
    if n_trials < DecodeDefaults.LIPSCHITZ_MIN_TRIALS:
        raise ValidationError(f"n_trials 必須 >= {DecodeDefaults.LIPSCHITZ_MIN_TRIALS}: {n_trials}")
    if perturbation_scale == 0:
        logger.debug("擾動為零，比例無定義")
        return LipschitzEstimate(float("nan"), float("nan"), 0)

    rng = np.random.default_rng(seed)
    h, w = shape
    x = _axis_grid(shape, Axis.X).ravel().copy()
    amplitude = cfg.resolve(w)
    best_int = 0.0
    best_asg = 0.0
    used = 0

    for trial in range(n_trials):
        z = rng.standard_normal(h * w)
        p0, j_int, j_asg, sigma = _jacobians(z, x, amplitude)
        _, g_int0, g_asg0 = _gradient_maps(z, x, amplitude, sigma)
        step = perturbation_scale * np.linalg.norm(z)

        z_int = z + step * _top_direction(j_int, rng, DecodeDefaults.LIPSCHITZ_POWER_ITERS)
        z_asg = z + step * _top_direction(j_asg, rng, DecodeDefaults.LIPSCHITZ_POWER_ITERS)

        p_int, g_int1, _ = _gradient_maps(z_int, x, amplitude, sigma)
        p_asg, _, g_asg1 = _gradient_maps(z_asg, x, amplitude, sigma)
        mu_hat_asg = x @ p_asg
        if not np.array_equal(np.sign(x - mu_hat_asg), sigma):
            logger.debug("試驗 %d 符號樣式改變，略過", trial)
            continue

        dp_int = np.linalg.norm(p_int - p0)
        dp_asg = np.linalg.norm(p_asg - p0)
        if dp_int == 0 or dp_asg == 0:
            continue
        best_int = max(best_int, np.linalg.norm(g_int1 - g_int0) / dp_int)
        best_asg = max(best_asg, np.linalg.norm(g_asg1 - g_asg0) / dp_asg)
        used += 1

    if used == 0:
        return LipschitzEstimate(float("nan"), float("nan"), 0)
    logger.info("Lipschitz 探測: integral=%.4g asg=%.4g (%d 次有效)", best_int, best_asg, used)
    return LipschitzEstimate(float(best_int), float(best_asg), used)


def asg_calibration_probe(
    width: int = 16,
    n_samples: int = 10_000,
    cfg: AsgConfig = AsgConfig(),
    seed: int = 0,
) -> CalibrationEstimate:
    """比較 ASG 的振幅上界 2 · A_grad 與積分梯度的平均振幅 E_x[|x − μ̂|]

    兩者皆為 p_x 的係數；E_x 為對像素位置的平均，μ̂ 來自隨機 logits 的兩步驟正規化。
    上界不依賴取樣，因 |sgn(x − μ̂) − Σ sgn · p| <= 2。另外在同一批熱圖上計算
    ASG 係數 A_grad · |σ_x − Σ σ · p| 的峰值平均，放在 asg_sampled。
    """
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n_samples, width, width))
    _, p = _two_step(z)
    x = np.arange(width, dtype=float)
    px = p.sum(axis=1)
    mu_hat = px @ x
    integral = np.abs(x[None, :] - mu_hat[:, None]).mean(axis=1)
    amplitude = cfg.resolve(width)
    sigma = np.sign(x[None, :] - mu_hat[:, None])
    coeff = amplitude * np.abs(sigma - (sigma * px).sum(axis=1, keepdims=True))
    return CalibrationEstimate(2.0 * amplitude, float(integral.mean()), float(coeff.max(axis=1).mean()))


class DecodeService:
    """綁定骨架配置與 ASG 設定的解碼服務"""

    def __init__(self, layout: SkeletonLayout, asg: AsgConfig = AsgConfig()):
        """初始化

        Args:
            layout: 骨架配置
            asg: ASG 設定
        """
        self.layout = layout
        self.asg = asg

    def decode(self, logits: Heatmap, transform: CropTransform, box: Optional[DetectionBox] = None) -> Pose:
        return decode_pose(logits, transform, self.layout, box)

    def decode_crops(
        self,
        heatmaps: Sequence[Heatmap],
        transforms: Sequence[CropTransform],
        boxes: Sequence[DetectionBox],
    ) -> List[Pose]:
        """解碼一個 frame 的所有 crop，姿態分數乘上偵測分數"""
        poses = []
        for logits, transform, box in zip(heatmaps, transforms, boxes):
            pose = self.decode(logits, transform, box)
            poses.append(pose.with_score(pose.score * box.score))
        return poses
