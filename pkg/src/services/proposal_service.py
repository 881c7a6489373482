"""部位導向提案產生器 (PGPG) 服務

此模組處理：
- 偵測框與 ground-truth 框之間的正規化偏移
- 每個部位、水平 / 垂直平面各自的高斯混合擬合 (EM)
- 依擬合模型或均勻近似取樣擴增提案框

EM 的目標函數為 Σ_n log Σ_k π_k N(x_n | μ_k, Σ_k) · exp(−r/2 · tr Σ_k⁻¹)，
r 為共變異數下限；M-step 的解為 Σ_k = S_k + r · I，目標函數每次迭代單調不減。
"""
import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.cluster.vq import kmeans2
from scipy.special import logsumexp

from src.config.constants import OffsetMode, ProposalDefaults
from src.config.settings import ProposalConfig
from src.models.geometry import DetectionBox
from src.models.proposal import OFFSET_COLUMNS, GaussianMixture, OffsetModel, OffsetSample
from src.utils.exceptions import DegenerateProposalError, InsufficientDataError, ValidationError

logger = logging.getLogger(__name__)


def compute_offsets(gt: DetectionBox, det: DetectionBox, part: str = "body") -> OffsetSample:
    """偵測框相對 ground-truth 框的正規化偏移

    Raises:
        ValidationError: ground-truth 框寬或高為零
    """
    w, h = gt.width, gt.height
    if not (w > 0 and h > 0):
        raise ValidationError(f"ground-truth 框退化: {gt}")
    return OffsetSample(
        dx_min=(det.x_min - gt.x_min) / w,
        dx_max=(det.x_max - gt.x_max) / w,
        dy_min=(det.y_min - gt.y_min) / h,
        dy_max=(det.y_max - gt.y_max) / h,
        part=part,
    )


def denormalize(gt: DetectionBox, offsets: np.ndarray) -> np.ndarray:
    """把 (..., 4) 偏移套回 gt，回傳 (..., 4) 的 [x_min, y_min, x_max, y_max]"""
    offsets = np.asarray(offsets, dtype=float)
    w, h = gt.width, gt.height
    return np.stack([
        gt.x_min + offsets[..., 0] * w,
        gt.y_min + offsets[..., 2] * h,
        gt.x_max + offsets[..., 1] * w,
        gt.y_max + offsets[..., 3] * h,
    ], axis=-1)


def apply_offsets(gt: DetectionBox, sample: OffsetSample) -> DetectionBox:
    """compute_offsets 的反運算"""
    x0, y0, x1, y1 = denormalize(gt, sample.as_array())
    return DetectionBox(float(x0), float(y0), float(x1), float(y1), score=gt.score, category=gt.category)


@dataclass(frozen=True)
class MixtureFit:
    """EM 結果

    Attributes:
        mixture: 擬合的混合分布
        history: 每次迭代的目標函數值 (總和)
        converged: 是否在 max_iter 內達到容許誤差
    """
    mixture: GaussianMixture
    history: Tuple[float, ...]
    converged: bool


def _penalized_log_density(points: np.ndarray, mixture: GaussianMixture, reg: float) -> np.ndarray:
    inv_traces = np.trace(np.linalg.inv(mixture.covariances), axis1=1, axis2=2)
    return mixture.component_log_pdf(points) - 0.5 * reg * inv_traces[None, :]


def _kmeans_init(points: np.ndarray, components: int, reg: float, rng: np.random.Generator) -> GaussianMixture:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        centroids, labels = kmeans2(points, components, minit="++", seed=rng)
    n = points.shape[0]
    global_cov = np.cov(points, rowvar=False, bias=True) + reg * np.eye(2)
    weights, covs = [], []
    for k in range(components):
        members = points[labels == k]
        weights.append(max(len(members), 1) / n)
        if len(members) >= 2:
            covs.append(np.cov(members, rowvar=False, bias=True) + reg * np.eye(2))
        else:
            covs.append(global_cov)
    weights = np.asarray(weights)
    return GaussianMixture(weights / weights.sum(), centroids, np.asarray(covs))


def fit_mixture(
    points: np.ndarray,
    components: int,
    cfg: ProposalConfig = ProposalConfig(),
    rng: Optional[np.random.Generator] = None,
) -> MixtureFit:
    """以 EM 擬合二維高斯混合 (k-means++ 初始化)

    資料散佈小於共變異數下限時視為退化，回傳單一元件。

    Args:
        points: (N, 2) 樣本
        components: 元件數
        cfg: EM 設定
        rng: 亂數產生器 (k-means++ 初始化)

    Returns:
        MixtureFit

    Raises:
        InsufficientDataError: 樣本數少於 components
    """
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    n = points.shape[0]
    if n < components:
        raise InsufficientDataError(f"樣本數 {n} 少於元件數 {components}")
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    reg = cfg.covariance_floor

    spread = np.trace(np.cov(points, rowvar=False, bias=True)) if n > 1 else 0.0
    if spread <= reg:
        logger.warning("偏移樣本幾乎沒有散佈 (trace=%.3g)，以單一元件處理", spread)
        mixture = GaussianMixture(np.ones(1), points.mean(axis=0)[None], reg * np.eye(2)[None])
        value = float(np.sum(logsumexp(_penalized_log_density(points, mixture, reg), axis=1)))
        return MixtureFit(mixture, (value,), True)

    mixture = _kmeans_init(points, components, reg, rng)
    history: List[float] = []
    converged = False
    for _ in range(cfg.max_iter):
        log_dens = _penalized_log_density(points, mixture, reg)
        log_norm = logsumexp(log_dens, axis=1)
        history.append(float(log_norm.sum()))
        if len(history) > 1 and abs(history[-1] - history[-2]) < cfg.tol * n:
            converged = True
            break

        resp = np.exp(log_dens - log_norm[:, None])
        nk = resp.sum(axis=0)
        alive = nk > 1e-10 * n
        resp, nk = resp[:, alive], nk[alive]
        means = (resp.T @ points) / nk[:, None]
        diff = points[None, :, :] - means[:, None, :]
        scatter = np.einsum("kn,kni,knj->kij", resp.T, diff, diff) / nk[:, None, None]
        mixture = GaussianMixture(nk / nk.sum(), means, scatter + reg * np.eye(2)[None])

    return MixtureFit(mixture, tuple(history), converged)


def _planes(samples: Sequence[OffsetSample]) -> Tuple[np.ndarray, np.ndarray]:
    arr = np.stack([s.as_array() for s in samples])
    return arr[:, :2], arr[:, 2:]


def _part_samples(samples: Sequence[OffsetSample], part: str, components: int) -> List[OffsetSample]:
    selected = [s for s in samples if s.part == part]
    need = ProposalDefaults.MIN_SAMPLES_PER_COMPONENT * components
    if len(selected) < need:
        raise InsufficientDataError(f"部位 {part} 只有 {len(selected)} 個樣本，至少需要 {need}")
    return selected


def fit_offset_model(
    samples: Sequence[OffsetSample],
    part: str,
    components: int = ProposalDefaults.COMPONENTS,
    cfg: ProposalConfig = ProposalConfig(),
) -> OffsetModel:
    """擬合單一部位的偏移模型

    水平與垂直平面各自擬合，並記錄每個偏移維度的百分位範圍作為均勻近似。

    Raises:
        InsufficientDataError: 樣本數少於 10 · components
    """
    selected = _part_samples(samples, part, components)
    x_plane, y_plane = _planes(selected)
    rng = np.random.default_rng(cfg.seed)
    x_fit = fit_mixture(x_plane, components, cfg, rng)
    y_fit = fit_mixture(y_plane, components, cfg, rng)
    for name, fit in (("x", x_fit), ("y", y_fit)):
        if not fit.converged:
            logger.warning("部位 %s 的 %s 平面 EM 在 %d 次迭代內未收斂", part, name, cfg.max_iter)

    lo, hi = cfg.percentiles
    arr = np.hstack([x_plane, y_plane])
    uniform_box = np.stack([np.percentile(arr, lo, axis=0), np.percentile(arr, hi, axis=0)], axis=1)
    logger.info(
        "部位 %s 擬合完成: %d 樣本, x 元件 %d, y 元件 %d",
        part, len(selected), x_fit.mixture.components, y_fit.mixture.components,
    )
    return OffsetModel(part, x_fit.mixture, y_fit.mixture, components, uniform_box)


def fit_offset_models(
    samples: Sequence[OffsetSample],
    components: int = ProposalDefaults.COMPONENTS,
    cfg: ProposalConfig = ProposalConfig(),
    workers: Optional[int] = None,
) -> Dict[str, OffsetModel]:
    """平行擬合所有部位；樣本不足的部位略過"""
    parts = sorted({s.part for s in samples})

    def fit(part: str) -> Optional[OffsetModel]:
        try:
            return fit_offset_model(samples, part, components, cfg)
        except InsufficientDataError as e:
            logger.warning("略過部位 %s: %s", part, e)
            return None

    with ThreadPoolExecutor(max_workers=workers) as pool:
        models = list(pool.map(fit, parts))
    return {m.part: m for m in models if m is not None}


def bic_sweep(
    samples: Sequence[OffsetSample],
    part: str,
    ks: Sequence[int] = ProposalDefaults.BIC_COMPONENTS,
    cfg: ProposalConfig = ProposalConfig(),
) -> pd.DataFrame:
    """對不同元件數計算 BIC

    Returns:
        DataFrame，欄位 components / plane / log_likelihood / bic
    """
    selected = _part_samples(samples, part, max(ks))
    planes = dict(zip(("x", "y"), _planes(selected)))
    rows = []
    for k in ks:
        for plane, points in planes.items():
            fit = fit_mixture(points, k, cfg, np.random.default_rng(cfg.seed))
            rows.append({
                "components": k,
                "plane": plane,
                "log_likelihood": fit.mixture.log_likelihood(points),
                "bic": fit.mixture.bic(points),
            })
    return pd.DataFrame(rows)


def sample_offsets(model: OffsetModel, n: int, mode: OffsetMode, rng: np.random.Generator) -> np.ndarray:
    """抽樣 (n, 4) 偏移，欄位順序同 OFFSET_COLUMNS"""
    if mode is OffsetMode.GMM:
        x = model.x_model.sample(n, rng)
        y = model.y_model.sample(n, rng)
        return np.hstack([x, y])
    if model.uniform_box is None:
        raise ValidationError(f"部位 {model.part} 沒有均勻近似範圍")
    low, high = model.uniform_box[:, 0], model.uniform_box[:, 1]
    return rng.uniform(low, high, size=(n, len(OFFSET_COLUMNS)))


def _valid_rows(boxes: np.ndarray) -> np.ndarray:
    return np.all(np.isfinite(boxes), axis=1) & (boxes[:, 0] < boxes[:, 2]) & (boxes[:, 1] < boxes[:, 3])


def sample_proposals(
    gt: DetectionBox,
    model: OffsetModel,
    n: int,
    mode: OffsetMode,
    rng: np.random.Generator,
    max_tries: int = ProposalDefaults.MAX_RESAMPLE,
) -> List[DetectionBox]:
    """批次抽樣 n 個提案框，退化的框重新抽樣

    Raises:
        DegenerateProposalError: 某個位置連續 max_tries 次皆退化
    """
    boxes = denormalize(gt, sample_offsets(model, n, mode, rng))
    bad = ~_valid_rows(boxes)
    tries = 1
    while np.any(bad):
        if tries >= max_tries:
            raise DegenerateProposalError(f"連續 {max_tries} 次取樣皆得到退化的提案框")
        logger.debug("重新抽樣 %d 個退化提案框", int(bad.sum()))
        boxes[bad] = denormalize(gt, sample_offsets(model, int(bad.sum()), mode, rng))
        bad = ~_valid_rows(boxes)
        tries += 1
    return [DetectionBox(*map(float, row), score=gt.score, category=gt.category) for row in boxes]


def sample_proposal(
    gt: DetectionBox,
    model: OffsetModel,
    mode: OffsetMode,
    rng: np.random.Generator,
    max_tries: int = ProposalDefaults.MAX_RESAMPLE,
) -> DetectionBox:
    """抽樣一個提案框"""
    return sample_proposals(gt, model, 1, mode, rng, max_tries)[0]
