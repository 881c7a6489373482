"""參數化 Pose NMS 服務

此模組處理：
- 姿態相似度 k_sim / h_sim / pose_distance
- 貪婪淘汰流程 pose_nms
- 以驗證集 mAP 為目標的參數交替網格搜尋 optimize_params
- OKS-NMS 與 soft OKS-NMS 基準

d(P_i, P_ref) 為相似度形式的量，d >= η 即淘汰 P_i。
匹配視窗以被比較的候選 P_i 的框 B_i 為準。
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.config.constants import NmsDefaults
from src.config.settings import NmsGrid, NmsParams
from src.models.geometry import Pose, check_same_layout
from src.services.evaluation_service import map_eval, oks
from src.utils.exceptions import InsufficientDataError, ValidationError

logger = logging.getLogger(__name__)

ValidationItem = Tuple[Sequence[Pose], Sequence[Pose]]


def _box_of(pose: Pose):
    if pose.box is None:
        raise ValidationError("姿態缺少來源提案框")
    return pose.box


def k_sim(a: Pose, b: Pose, sigma1: float) -> float:
    """信心分數軟計數

    只計入 b 的關節落在以 a 關節為中心、尺寸為 B_a 十分之一的視窗內者。

    Raises:
        DimensionMismatchError: 骨架配置不同
        ValidationError: a 缺少提案框
    """
    check_same_layout(a, b)
    box = _box_of(a)
    inside = _window_mask(
        a.coords[None], b.coords[None], np.array([[box.width, box.height]])
    )[0]
    terms = np.tanh(a.confidences / sigma1) * np.tanh(b.confidences / sigma1)
    return float(np.sum(terms[inside]))


def h_sim(a: Pose, b: Pose, sigma2: float) -> float:
    """空間距離相似度 Σ exp(−‖k_a − k_b‖² / σ2)"""
    check_same_layout(a, b)
    sq = np.sum((a.coords - b.coords) ** 2, axis=1)
    return float(np.sum(np.exp(-sq / sigma2)))


def pose_distance(a: Pose, b: Pose, params: NmsParams) -> float:
    """d(a, b | Λ) = k_sim + λ · h_sim"""
    return k_sim(a, b, params.sigma1) + params.lambda_ * h_sim(a, b, params.sigma2)


def _window_mask(candidate: np.ndarray, reference: np.ndarray, box_wh: np.ndarray) -> np.ndarray:
    """(N, J) 布林矩陣：reference 關節是否落在 candidate 關節的視窗內 (含邊界)

    box_wh 為每個 candidate 的框寬高 (N, 2)。
    """
    size = NmsDefaults.WINDOW_FRACTION * box_wh[:, None, :]
    low = candidate - size / 2
    high = candidate + size / 2
    return np.all((reference >= low) & (reference <= high), axis=2)


class _PoseStack:
    """把姿態列表堆疊成陣列以便批次計算距離"""

    def __init__(self, poses: Sequence[Pose]):
        for pose in poses[1:]:
            check_same_layout(poses[0], pose)
        self.coords = np.stack([p.coords for p in poses])
        self.conf = np.stack([p.confidences for p in poses])
        self.box_wh = np.array([[_box_of(p).width, _box_of(p).height] for p in poses])
        self.scores = np.array([p.score for p in poses])

    def distances_to(self, ref: int, candidates: np.ndarray, params: NmsParams) -> np.ndarray:
        """d(P_i, P_ref)，i 屬於 candidates"""
        coords = self.coords[candidates]
        ref_coords = self.coords[ref][None]
        inside = _window_mask(coords, ref_coords, self.box_wh[candidates])
        terms = np.tanh(self.conf[candidates] / params.sigma1) * np.tanh(self.conf[ref][None] / params.sigma1)
        k = np.sum(np.where(inside, terms, 0.0), axis=1)
        sq = np.sum((coords - ref_coords) ** 2, axis=2)
        h = np.sum(np.exp(-sq / params.sigma2), axis=1)
        return k + params.lambda_ * h


def pose_nms_indices(poses: Sequence[Pose], params: NmsParams) -> List[int]:
    """pose_nms 保留下來的原始索引，依選取順序排列"""
    if not poses:
        return []
    stack = _PoseStack(poses)
    remaining = np.arange(len(poses))
    kept: List[int] = []
    while remaining.size:
        # argmax 取第一個最大值，remaining 保持索引遞增，平手時選索引較小者
        ref = int(remaining[np.argmax(stack.scores[remaining])])
        kept.append(ref)
        others = remaining[remaining != ref]
        if others.size == 0:
            break
        d = stack.distances_to(ref, others, params)
        remaining = others[d < params.eta]
    return kept


def pose_nms(poses: Sequence[Pose], params: NmsParams) -> List[Pose]:
    """貪婪 Pose NMS

    每輪選出分數最高的姿態作為參考，淘汰所有 d(P_i, P_ref) >= η 的 P_i，
    直到沒有剩餘姿態。

    Args:
        poses: 同一張影像的候選姿態
        params: Λ 與 η

    Returns:
        保留的姿態，依分數遞減排列
    """
    return [poses[i] for i in pose_nms_indices(poses, params)]


def oks_nms(poses: Sequence[Pose], threshold: float = NmsDefaults.OKS_NMS_THRESHOLD) -> List[Pose]:
    """OKS-NMS 基準：與參考姿態 OKS > threshold 者淘汰，面積取參考姿態的框"""
    order = sorted(range(len(poses)), key=lambda i: (-poses[i].score, i))
    kept: List[Pose] = []
    suppressed = set()
    for pos, i in enumerate(order):
        if i in suppressed:
            continue
        ref = poses[i]
        kept.append(ref)
        area = _box_of(ref).area
        for j in order[pos + 1:]:
            if j not in suppressed and oks(poses[j], ref, area) > threshold:
                suppressed.add(j)
    return kept


def soft_oks_nms(
    poses: Sequence[Pose],
    sigma: float = 0.5,
    score_floor: float = 1e-3,
) -> List[Pose]:
    """soft OKS-NMS 基準：以 exp(−OKS² / σ) 衰減分數，低於 score_floor 者移除"""
    pending = list(poses)
    kept: List[Pose] = []
    while pending:
        best = max(range(len(pending)), key=lambda i: (pending[i].score, -i))
        ref = pending.pop(best)
        kept.append(ref)
        area = _box_of(ref).area
        rescored = []
        for pose in pending:
            score = pose.score * np.exp(-oks(pose, ref, area) ** 2 / sigma)
            if score >= score_floor:
                rescored.append(pose.with_score(score))
        pending = rescored
    return kept


def nms_map(validation: Sequence[ValidationItem], params: Optional[NmsParams]) -> float:
    """驗證集經 pose_nms 後的 mAP；params 為 None 時不做 NMS"""
    preds: Dict[int, List[Pose]] = {}
    gts: Dict[int, List[Pose]] = {}
    for image_id, (candidates, truth) in enumerate(validation):
        preds[image_id] = list(candidates) if params is None else pose_nms(candidates, params)
        gts[image_id] = list(truth)
    return map_eval(preds, gts).ap


def optimize_params(
    validation: Sequence[ValidationItem],
    init: NmsParams,
    grid: NmsGrid,
    iters: int = 5,
    workers: Optional[int] = None,
) -> NmsParams:
    """交替二維網格搜尋 NMS 參數

    每次迭代先固定 (λ, η) 搜尋 (σ1, σ2)，再固定 (σ1, σ2) 搜尋 (λ, η)，
    只在 mAP 嚴格提升時更新；一次迭代沒有提升或達到 iters 即停止。

    Args:
        validation: [(候選姿態, ground truth 姿態)]，每項為一張影像
        init: 起始參數
        grid: 搜尋網格
        iters: 最大迭代次數
        workers: 平行評估的執行緒數

    Returns:
        最佳參數

    Raises:
        InsufficientDataError: 驗證集為空
    """
    if not validation:
        raise InsufficientDataError("驗證集為空")

    best = init
    best_map = nms_map(validation, best)
    logger.info("NMS 參數起始 mAP=%.4f", best_map)

    def score(params: NmsParams) -> float:
        return nms_map(validation, params)

    with ThreadPoolExecutor(max_workers=workers) as pool:
        for it in range(iters):
            improved = False
            for axis_pair in (("sigma1", "sigma2"), ("lambda_", "eta")):
                first, second = axis_pair
                candidates = [
                    replace(best, **{first: u, second: v})
                    for u in getattr(grid, first)
                    for v in getattr(grid, second)
                ]
                scores = list(pool.map(score, candidates))
                top = int(np.argmax(scores))
                if scores[top] > best_map:
                    best, best_map = candidates[top], scores[top]
                    improved = True
                    logger.info("迭代 %d 搜尋 %s/%s: mAP=%.4f %s", it, first, second, best_map, best.to_dict())
            if not improved:
                break
    return best


class PoseNmsService:
    """綁定 NMS 參數的服務"""

    def __init__(self, params: NmsParams):
        self.params = params

    def suppress(self, poses: Sequence[Pose]) -> List[Pose]:
        return [poses[i] for i in self.suppress_indices(poses)]

    def suppress_indices(self, poses: Sequence[Pose]) -> List[int]:
        """保留的輸入索引，依分數由高到低"""
        keep = pose_nms_indices(poses, self.params)
        logger.debug("NMS: %d -> %d", len(poses), len(keep))
        return keep
