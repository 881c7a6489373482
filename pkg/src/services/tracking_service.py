"""多階段身分匹配 (MSIM) 追蹤服務

此模組處理姿態追蹤的所有邏輯：
- 姿態導向注意力融合與身分向量投影
- embedding 親和矩陣與第一階段匹配
- 正規化姿態距離與 IoU 融合距離矩陣
- 三階段級聯匹配 (embedding -> 融合距離 -> 放寬門檻重試) 與新 id 指派
- 卡爾曼平滑與軌跡池管理
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Set, Tuple, Union

import numpy as np

from src.config.constants import TrackingDefaults, TrackStatus
from src.config.settings import KalmanConfig, MsimConfig, NmsParams
from src.models.bundle import FrameBundle
from src.models.features import FeatureMap, IdentityEmbedding
from src.models.geometry import DetectionBox, Pose, check_same_layout, iou_matrix
from src.models.track import Track, TrackRecord
from src.services.kalman_filter import KalmanBoxFilter
from src.services.nms_service import h_sim, k_sim
from src.utils.exceptions import DimensionMismatchError, ValidationError

logger = logging.getLogger(__name__)

Link = Tuple[int, int]
UNIT_BOX = DetectionBox(-0.5, -0.5, 0.5, 0.5)


def pga_fuse(m_id: FeatureMap, m_a: FeatureMap) -> FeatureMap:
    """m_wid = m_id ⊙ m_A + m_id

    單通道的注意力圖會套用到每個特徵通道。

    Raises:
        DimensionMismatchError: 形狀不同
    """
    same = m_id.shape == m_a.shape
    broadcast = m_a.shape[0] == 1 and m_id.shape[1:] == m_a.shape[1:]
    if not (same or broadcast):
        raise DimensionMismatchError(f"特徵圖形狀不同: {m_id.shape} vs {m_a.shape}")
    return FeatureMap(m_id.values * m_a.values + m_id.values)


class EmbeddingProjector:
    """固定的線性投影 (128 × D)，取代全連接層"""

    def __init__(self, weights: np.ndarray):
        weights = np.asarray(weights, dtype=float)
        if weights.ndim != 2 or weights.shape[0] != TrackingDefaults.EMBEDDING_DIM:
            raise DimensionMismatchError(
                f"投影矩陣必須為 {TrackingDefaults.EMBEDDING_DIM} × D: {weights.shape}"
            )
        self.weights = weights

    @classmethod
    def seeded(cls, input_dim: int, seed: int = 0) -> "EmbeddingProjector":
        rng = np.random.default_rng(seed)
        return cls(rng.standard_normal((TrackingDefaults.EMBEDDING_DIM, input_dim)) / np.sqrt(input_dim))

    @classmethod
    def load(cls, path: Union[str, Path]) -> "EmbeddingProjector":
        return cls(np.load(path))

    @property
    def input_dim(self) -> int:
        return self.weights.shape[1]


def embed(m_wid: FeatureMap, projector: EmbeddingProjector) -> IdentityEmbedding:
    """攤平特徵圖 -> 線性投影 -> L2 正規化

    Raises:
        DimensionMismatchError: 特徵大小與投影矩陣不符
        ZeroNormEmbeddingError: 投影結果為零向量
    """
    flat = m_wid.flatten()
    if flat.size != projector.input_dim:
        raise DimensionMismatchError(f"特徵大小 {flat.size} 與投影矩陣 {projector.input_dim} 不符")
    return IdentityEmbedding.normalized(projector.weights @ flat)


def embed_with_attention(m_id: FeatureMap, attention: FeatureMap, projector: EmbeddingProjector) -> IdentityEmbedding:
    return embed(pga_fuse(m_id, attention), projector)


def embedding_affinity(
    detections: Sequence[Optional[IdentityEmbedding]],
    pool: Sequence[Track],
) -> np.ndarray:
    """M_emb[p][q] = (1 − cos) / 2；任一方沒有 embedding 時為 inf"""
    out = np.full((len(detections), len(pool)), np.inf)
    for q, track in enumerate(pool):
        if track.embedding is None:
            continue
        for p, emb in enumerate(detections):
            if emb is not None:
                out[p, q] = (1.0 - emb.cosine(track.embedding)) / 2.0
    return np.clip(out, 0.0, None)


def _row_min_links(
    matrix: np.ndarray,
    rows: Sequence[int],
    cols: Sequence[int],
    threshold: float,
    margin: Optional[float] = None,
) -> List[Link]:
    """每列取最小值且 <= threshold 的欄；多列搶同一欄時距離小者勝 (平手取列索引小者)

    margin 不為 None 時只接受明確的選擇：列最小值必須比該列次小值小超過 margin，
    搶同一欄的提名者中最小者也必須比次小者小超過 margin，否則留給下一階段。
    """
    if not rows or not cols:
        return []
    sub = matrix[np.ix_(rows, cols)]
    best_col = np.argmin(sub, axis=1)
    best_val = sub[np.arange(len(rows)), best_col]
    clear = np.ones(len(rows), dtype=bool)
    if margin is not None and len(cols) > 1:
        runner_up = np.partition(sub, 1, axis=1)[:, 1]
        with np.errstate(invalid="ignore"):
            clear = runner_up - best_val > margin

    nominees: Dict[int, List[Tuple[float, int]]] = {}
    for i, (c, v) in enumerate(zip(best_col, best_val)):
        if v <= threshold and clear[i]:
            nominees.setdefault(int(c), []).append((float(v), i))
    links: List[Link] = []
    for c, noms in nominees.items():
        noms.sort()
        if margin is not None and len(noms) > 1 and not noms[1][0] - noms[0][0] > margin:
            continue
        links.append((rows[noms[0][1]], cols[c]))
    return sorted(links)


def stage1_match(
    m_emb: np.ndarray,
    mu_emb: float,
    margin: float = TrackingDefaults.EMB_MARGIN,
) -> Tuple[Set[Link], Set[int]]:
    """embedding 階段

    embedding 無法區分的偵測 (列或欄上的最小值不夠突出) 不在此階段連結。

    Returns:
        (links, untracked)
    """
    if not 0 < mu_emb <= 1:
        raise ValidationError(f"mu_emb 必須在 (0, 1]: {mu_emb}")
    n_det, n_trk = m_emb.shape
    links = set(_row_min_links(m_emb, list(range(n_det)), list(range(n_trk)), mu_emb, margin))
    linked = {p for p, _ in links}
    return links, set(range(n_det)) - linked


@dataclass(frozen=True)
class CascadeResult:
    """級聯匹配結果

    Attributes:
        links: (偵測索引, 軌跡索引)，依偵測索引排序
        unmatched: 需要新 id 的偵測索引
        stages: 偵測索引 -> 匹配成功的階段 (1, 2, 3)
    """
    links: Tuple[Link, ...]
    unmatched: Tuple[int, ...]
    stages: Dict[int, int] = field(default_factory=dict)


def cascade_match(
    m_emb: Optional[np.ndarray],
    m_f: np.ndarray,
    mu_emb: float,
    mu_f: float,
    relaxed_mu_f: float,
    emb_margin: float = TrackingDefaults.EMB_MARGIN,
) -> CascadeResult:
    """三階段級聯匹配規則 (純函式)

    1. m_emb 上的列最小值規則，只接受比其他選擇小超過 emb_margin 者 (m_emb 為 None 時略過)
    2. 未追蹤的偵測對尚未連結的軌跡，m_f 上同樣規則，門檻 mu_f
    3. 剩餘者以 relaxed_mu_f 重試
    """
    n_det, n_trk = m_f.shape
    links: List[Link] = []
    stages: Dict[int, int] = {}
    if m_emb is not None:
        first, _ = stage1_match(m_emb, mu_emb, emb_margin)
        links.extend(sorted(first))
        stages.update({p: 1 for p, _ in first})

    for stage, threshold in ((2, mu_f), (3, relaxed_mu_f)):
        used_p = {p for p, _ in links}
        used_q = {q for _, q in links}
        rows = [p for p in range(n_det) if p not in used_p]
        cols = [q for q in range(n_trk) if q not in used_q]
        found = _row_min_links(m_f, rows, cols, threshold)
        links.extend(found)
        stages.update({p: stage for p, _ in found})

    used_p = {p for p, _ in links}
    return CascadeResult(
        links=tuple(sorted(links)),
        unmatched=tuple(p for p in range(n_det) if p not in used_p),
        stages=stages,
    )


def normalize_pose(pose: Pose) -> Pose:
    """把姿態縮放到框為單位正方形並以框中心為原點

    Raises:
        ValidationError: 姿態缺少框
    """
    if pose.box is None:
        raise ValidationError("姿態缺少框，無法正規化")
    cx, cy = pose.box.center
    scale = np.array([pose.box.width, pose.box.height])
    coords = (pose.coords - np.array([cx, cy])) / scale
    return Pose(pose.layout, coords, pose.confidences, pose.score, UNIT_BOX)


def normalized_pose_distance(a: Pose, b: Pose, params: NmsParams) -> float:
    """正規化姿態距離 dist_np ∈ [0, 1]

    兩個姿態各自正規化後計算 d = k_sim + λ · h_sim，
    dist = 1 − d / d_max，d_max = m · (tanh²(1/σ1) + λ)。
    """
    check_same_layout(a, b)
    na, nb = normalize_pose(a), normalize_pose(b)
    d = k_sim(na, nb, params.sigma1) + params.lambda_ * h_sim(na, nb, params.sigma2)
    d_max = a.joint_count * (np.tanh(1.0 / params.sigma1) ** 2 + params.lambda_)
    return float(np.clip(1.0 - d / d_max, 0.0, 1.0))


def fusion_matrix(
    detections: Sequence[Pose],
    pool: Sequence[Track],
    lambda_np: float,
    params: NmsParams,
) -> np.ndarray:
    """M_f = (1 − IoU) + λ_np · dist_np，IoU 使用卡爾曼預測的軌跡框"""
    if not detections or not pool:
        return np.zeros((len(detections), len(pool)))
    det_boxes = [d.box for d in detections]
    if any(b is None for b in det_boxes):
        raise ValidationError("偵測姿態缺少框")
    ious = iou_matrix(det_boxes, [t.predicted_box for t in pool])
    dist = np.array([[normalized_pose_distance(d, t.last_pose, params) for t in pool] for d in detections])
    return (1.0 - ious) + lambda_np * dist


class TrackPool:
    """軌跡池

    id 由 1 開始遞增，同一次執行中不重複使用。
    """

    def __init__(self, kalman: KalmanConfig = KalmanConfig()):
        self.kalman = kalman
        self.tracks: Dict[int, Track] = {}
        self._next_id = 1

    def candidates(self) -> List[Track]:
        """可匹配的軌跡 (active 與 lost)，依 id 排序"""
        return [t for _, t in sorted(self.tracks.items()) if t.status is not TrackStatus.REMOVED]

    def create(self, pose: Pose, embedding: Optional[IdentityEmbedding], frame: int) -> Track:
        track = Track(
            track_id=self._next_id,
            kalman=KalmanBoxFilter(pose.box, self.kalman),
            last_pose=pose,
            embedding=embedding,
            last_seen=frame,
            history=[frame],
        )
        self.tracks[track.track_id] = track
        self._next_id += 1
        logger.info("frame %d 建立新軌跡 %d", frame, track.track_id)
        return track

    def age(self, frame: int, max_lost: int) -> None:
        for track_id, track in list(self.tracks.items()):
            if track.last_seen == frame:
                continue
            track.status = TrackStatus.LOST
            if track.frames_lost(frame) > max_lost:
                track.status = TrackStatus.REMOVED
                del self.tracks[track_id]
                logger.debug("移除軌跡 %d (遺失 %d frame)", track_id, track.frames_lost(frame))

    def __len__(self) -> int:
        return len(self.tracks)


def msim_step(frame: FrameBundle, pool: TrackPool, cfg: MsimConfig = MsimConfig()) -> List[Link]:
    """處理一個 frame 的多階段身分匹配

    Args:
        frame: 已填入 poses (與可選 embeddings) 的 FrameBundle
        pool: 軌跡池 (就地更新)
        cfg: MSIM 設定

    Returns:
        [(姿態索引, track id)]，依姿態索引排序
    """
    poses = frame.poses or []
    embeddings = frame.embeddings
    tracks = pool.candidates()
    for track in tracks:
        track.kalman.predict()

    use_emb = (
        embeddings is not None
        and len(embeddings) == len(poses)
        and all(e is not None for e in embeddings)
    )
    m_emb = embedding_affinity(embeddings, tracks) if use_emb else None
    m_f = fusion_matrix(poses, tracks, cfg.lambda_np, cfg.pose_params)
    result = cascade_match(m_emb, m_f, cfg.mu_emb, cfg.mu_f, cfg.relaxed_mu_f, cfg.emb_margin)

    links: List[Link] = []
    for p, q in result.links:
        track = tracks[q]
        pose = poses[p]
        track.kalman.update(pose.box)
        track.last_pose = pose
        if use_emb:
            emb = embeddings[p]
            track.embedding = emb if track.embedding is None else track.embedding.blend(emb, cfg.embedding_momentum)
        track.last_seen = frame.frame_index
        track.status = TrackStatus.ACTIVE
        track.hits += 1
        track.history.append(frame.frame_index)
        links.append((p, track.track_id))
        logger.debug("frame %d: 姿態 %d -> 軌跡 %d (階段 %d)", frame.frame_index, p, track.track_id, result.stages[p])

    for p in result.unmatched:
        emb = embeddings[p] if use_emb else None
        track = pool.create(poses[p], emb, frame.frame_index)
        links.append((p, track.track_id))

    pool.age(frame.frame_index, cfg.max_lost)
    return sorted(links)


class TrackingService:
    """單一影片串流的追蹤器"""

    def __init__(self, cfg: MsimConfig = MsimConfig()):
        """初始化

        Args:
            cfg: MSIM 設定
        """
        self.cfg = cfg
        self.pool = TrackPool(cfg.kalman)

    def step(self, bundle: FrameBundle) -> FrameBundle:
        """追蹤一個 frame，填入 track_links 與 records"""
        links = msim_step(bundle, self.pool, self.cfg)
        poses = bundle.poses or []
        bundle.track_links = links
        bundle.records = [TrackRecord(bundle.frame_index, tid, poses[p].box, poses[p]) for p, tid in links]
        return bundle

    def run(self, bundles: Sequence[FrameBundle]) -> List[TrackRecord]:
        records: List[TrackRecord] = []
        for bundle in bundles:
            records.extend(self.step(bundle).records)
        return records
