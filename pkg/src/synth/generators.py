"""合成資料產生器

此模組產生：
- 已知次像素峰值的高斯熱圖
- 含重複偵測的姿態候選集合
- 含交錯、遮擋與 embedding 雜訊的多人軌跡
- 由關鍵點高斯組成的注意力圖

所有產生器在固定亂數種子下皆為決定性。
"""
from dataclasses import dataclass
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit, logit

from src.config.constants import DecodeDefaults, HeatmapKind, TrackingDefaults
from src.models.bundle import FrameBundle
from src.models.features import FeatureMap, IdentityEmbedding
from src.models.geometry import CropTransform, DetectionBox, Heatmap, Pose
from src.models.layout import SkeletonLayout
from src.models.track import TrackRecord
from src.utils.exceptions import ValidationError

# 身體與腳在框內的正規化位置 (x 向右、y 向下)
_TEMPLATE = {
    "nose": (0.50, 0.12), "left_eye": (0.54, 0.10), "right_eye": (0.46, 0.10),
    "left_ear": (0.58, 0.11), "right_ear": (0.42, 0.11),
    "left_shoulder": (0.65, 0.25), "right_shoulder": (0.35, 0.25),
    "left_elbow": (0.72, 0.40), "right_elbow": (0.28, 0.40),
    "left_wrist": (0.75, 0.52), "right_wrist": (0.25, 0.52),
    "left_hip": (0.60, 0.55), "right_hip": (0.40, 0.55),
    "left_knee": (0.61, 0.74), "right_knee": (0.39, 0.74),
    "left_ankle": (0.62, 0.92), "right_ankle": (0.38, 0.92),
    "head": (0.50, 0.04), "neck": (0.50, 0.20), "hip": (0.50, 0.55),
    "left_big_toe": (0.66, 0.98), "right_big_toe": (0.34, 0.98),
    "left_small_toe": (0.70, 0.97), "right_small_toe": (0.30, 0.97),
    "left_heel": (0.61, 0.96), "right_heel": (0.39, 0.96),
}


def _template_point(name: str, index: int, joint_count: int) -> Tuple[float, float]:
    if name in _TEMPLATE:
        return _TEMPLATE[name]
    prefix, _, suffix = name.rpartition("_")
    if suffix.isdigit():
        i = int(suffix)
        if prefix == "face":
            angle = 2 * np.pi * i / 68
            return (0.50 + 0.06 * np.cos(angle), 0.12 + 0.07 * np.sin(angle))
        if prefix in ("left_hand", "right_hand"):
            wx, wy = _TEMPLATE["left_wrist" if prefix == "left_hand" else "right_wrist"]
            if i == 0:
                return (wx, wy)
            finger, seg = divmod(i - 1, 4)
            angle = np.pi / 2 + (finger - 2) * 0.25 * (1 if prefix == "left_hand" else -1)
            r = 0.012 * (seg + 1)
            return (wx + r * np.cos(angle), wy + r * np.sin(angle))
    cols = 8
    rows = max((joint_count + cols - 1) // cols, 2)
    return (0.1 + 0.8 * (index % cols) / (cols - 1), 0.1 + 0.8 * (index // cols) / (rows - 1))


def template_pose(
    layout: SkeletonLayout,
    box: DetectionBox,
    confidence: float = 1.0,
    score: float = 1.0,
) -> Pose:
    """直立人形的決定性姿態，關節位置相對於 box"""
    unit = np.array([
        _template_point(name, i, layout.joint_count) for i, name in enumerate(layout.joint_names)
    ])
    coords = np.column_stack([box.x_min + unit[:, 0] * box.width, box.y_min + unit[:, 1] * box.height])
    return Pose(layout, coords, np.full(layout.joint_count, confidence), score=score, box=box)


class SyntheticHeatmap(NamedTuple):
    heatmap: Heatmap
    expected: Tuple[float, float]


def _bump_logits(peaks: np.ndarray, sigma: float, width: int, height: int, amplitude: float) -> np.ndarray:
    ys, xs = np.mgrid[0:height, 0:width]
    d2 = (xs[None] - peaks[:, 0, None, None]) ** 2 + (ys[None] - peaks[:, 1, None, None]) ** 2
    c = expit(amplitude) * np.exp(-d2 / (2.0 * sigma ** 2))
    with np.errstate(divide="ignore"):
        z = logit(c)
    return np.clip(z, -DecodeDefaults.LOGIT_CLIP, DecodeDefaults.LOGIT_CLIP)


def gen_heatmap(
    peak: Tuple[float, float],
    sigma: float,
    width: int,
    height: int,
    amplitude: float = 3.0,
) -> SyntheticHeatmap:
    """離散高斯峰的 logits 熱圖

    c_x = sigmoid(amplitude) · exp(−d² / 2σ²)，logits 為 logit(c_x)。
    同時記錄對應機率圖的期望座標。

    Raises:
        ValidationError: 峰值不在網格內
    """
    x, y = peak
    if not (0 <= x <= width - 1 and 0 <= y <= height - 1):
        raise ValidationError(f"峰值 {peak} 不在 {width} × {height} 網格內")
    if not sigma > 0:
        raise ValidationError(f"sigma 必須為正數: {sigma}")
    z = _bump_logits(np.array([[x, y]], dtype=float), sigma, width, height, amplitude)
    c = expit(z[0])
    p = c / c.sum()
    expected = (float(np.sum(p * np.arange(width)[None, :])), float(np.sum(p * np.arange(height)[:, None])))
    return SyntheticHeatmap(Heatmap(z, HeatmapKind.LOGITS), expected)


def gen_pose_heatmaps(
    peaks: np.ndarray,
    sigma: float,
    width: int,
    height: int,
    amplitude: float = 3.0,
) -> Heatmap:
    """每個關節一個高斯峰的 J × H × W logits 熱圖 (峰值可超出網格)"""
    peaks = np.asarray(peaks, dtype=float).reshape(-1, 2)
    return Heatmap(_bump_logits(peaks, sigma, width, height, amplitude), HeatmapKind.LOGITS)


def gen_duplicated_scene(
    layout: SkeletonLayout,
    n_people: int,
    dup_per_person: int,
    jitter: float,
    rng: np.random.Generator,
    box_size: Tuple[float, float] = (100.0, 200.0),
    spacing: float = 150.0,
) -> Tuple[List[Pose], List[Pose]]:
    """含重複偵測的候選姿態

    每個人產生一個與 ground truth 相同的主要候選 (分數 U(0.3, 1))，
    以及 dup_per_person 個關節加上 N(0, jitter²) 雜訊的複本，
    第 k 個複本分數為主要分數 · (1 − 0.03k)。

    Returns:
        (候選姿態, ground truth 姿態)
    """
    if n_people < 0 or dup_per_person < 0 or jitter < 0:
        raise ValidationError("n_people / dup_per_person / jitter 不可為負")
    w, h = box_size
    candidates: List[Pose] = []
    truth: List[Pose] = []
    for i in range(n_people):
        box = DetectionBox(i * spacing, 0.0, i * spacing + w, h)
        gt = template_pose(layout, box)
        truth.append(gt)
        base = float(rng.uniform(0.3, 1.0))
        candidates.append(Pose(layout, gt.coords, gt.confidences, score=base, box=box))
        for k in range(1, dup_per_person + 1):
            coords = gt.coords + rng.normal(0.0, jitter, size=gt.coords.shape) if jitter > 0 else gt.coords
            candidates.append(Pose(layout, coords, gt.confidences, score=base * (1.0 - 0.03 * k), box=box))
    return candidates, truth


def gen_duplicated_validation(
    layout: SkeletonLayout,
    n_images: int,
    n_people: int,
    dup_per_person: int,
    jitter: float,
    rng: np.random.Generator,
) -> List[Tuple[List[Pose], List[Pose]]]:
    """多張影像的重複偵測驗證集"""
    return [gen_duplicated_scene(layout, n_people, dup_per_person, jitter, rng) for _ in range(n_images)]


@dataclass(frozen=True)
class OcclusionWindow:
    """person 在 [start, end) frame 內不可見"""
    person: int
    start: int
    end: int

    def covers(self, person: int, frame: int) -> bool:
        return person == self.person and self.start <= frame < self.end


class SyntheticTrajectories(NamedTuple):
    bundles: List[FrameBundle]
    gt_tracks: List[TrackRecord]
    identities: List[List[int]]


def _true_embeddings(n_people: int, shared: bool) -> np.ndarray:
    dim = TrackingDefaults.EMBEDDING_DIM
    if shared:
        return np.tile(np.eye(dim)[0], (n_people, 1))
    if n_people > dim:
        raise ValidationError(f"正交 embedding 最多 {dim} 人")
    return np.eye(dim)[:n_people]


def gen_trajectories(
    layout: SkeletonLayout,
    n_people: int,
    n_frames: int,
    crossing: bool,
    occlusion_windows: Sequence[OcclusionWindow],
    emb_noise: float,
    rng: np.random.Generator,
    shared_embedding: bool = False,
    with_embeddings: bool = True,
    box_size: Tuple[float, float] = (60.0, 120.0),
    lane_gap: float = 200.0,
    vertical_separation: float = 0.0,
    speed: float = 4.0,
) -> SyntheticTrajectories:
    """多人等速直線軌跡

    crossing 時偶數編號的人向右、奇數編號的人向左，兩兩在中間交錯；
    否則每個人在自己的水平車道上向右移動。每個人有固定的真實 embedding
    (正交基底，shared_embedding 時全部相同)，每個 frame 加上 N(0, emb_noise²) 雜訊。
    遮擋期間偵測與 ground truth 皆移除。

    Returns:
        SyntheticTrajectories(bundles, gt_tracks, identities)，
        identities[f][p] 為 bundles[f].poses[p] 的真實身分
    """
    w, h = box_size
    travel = speed * (n_frames - 1)
    starts, velocities = [], []
    for i in range(n_people):
        if crossing:
            pair, side = divmod(i, 2)
            y = pair * lane_gap + side * vertical_separation
            x = 0.0 if side == 0 else travel
            starts.append((x, y))
            velocities.append((speed if side == 0 else -speed, 0.0))
        else:
            starts.append((0.0, i * lane_gap))
            velocities.append((speed, 0.0))
    starts = np.asarray(starts)
    velocities = np.asarray(velocities)
    true_emb = _true_embeddings(n_people, shared_embedding)

    bundles: List[FrameBundle] = []
    gt_tracks: List[TrackRecord] = []
    identities: List[List[int]] = []
    for f in range(n_frames):
        visible = [
            i for i in range(n_people)
            if not any(win.covers(i, f) for win in occlusion_windows)
        ]
        order = list(rng.permutation(visible)) if visible else []
        poses: List[Pose] = []
        embeddings: List[Optional[IdentityEmbedding]] = []
        for i in order:
            x, y = starts[i] + f * velocities[i]
            box = DetectionBox(float(x), float(y), float(x) + w, float(y) + h, score=0.9)
            pose = template_pose(layout, box, confidence=0.9, score=0.9)
            poses.append(pose)
            noisy = true_emb[i] + rng.normal(0.0, emb_noise, size=true_emb.shape[1]) if emb_noise > 0 else true_emb[i]
            embeddings.append(IdentityEmbedding.normalized(noisy))
            gt = template_pose(layout, box)
            gt_tracks.append(TrackRecord(f, int(i) + 1, box, gt))
        bundles.append(FrameBundle(
            frame_index=f,
            detections=[p.box for p in poses],
            poses=poses,
            embeddings=embeddings if with_embeddings else None,
        ))
        identities.append([int(i) for i in order])
    return SyntheticTrajectories(bundles, gt_tracks, identities)


def attention_from_pose(
    pose: Pose,
    height: int,
    width: int,
    sigma: float,
    transform: Optional[CropTransform] = None,
) -> FeatureMap:
    """由關鍵點高斯取最大值組成的注意力圖

    transform 不為 None 時先把影像座標轉回網格座標；只使用 confidence > 0 的關節。
    """
    coords = pose.coords if transform is None else transform.invert(pose.coords)
    coords = coords[pose.confidences > 0]
    if coords.size == 0:
        return FeatureMap(np.zeros((1, height, width)), is_attention=True)
    ys, xs = np.mgrid[0:height, 0:width]
    d2 = (xs[None] - coords[:, 0, None, None]) ** 2 + (ys[None] - coords[:, 1, None, None]) ** 2
    att = np.exp(-d2 / (2.0 * sigma ** 2)).max(axis=0)
    return FeatureMap(np.clip(att, 0.0, 1.0)[None], is_attention=True)


def random_scene(
    layout: SkeletonLayout,
    n_poses: int,
    rng: np.random.Generator,
    clusters: int = 3,
    spread: float = 3.0,
) -> List[Pose]:
    """隨機姿態集合，姿態圍繞少數幾個群中心 (NMS 等價性測試用)"""
    centers = [
        DetectionBox(x, y, x + 80.0, y + 160.0)
        for x, y in rng.uniform(0.0, 120.0, size=(clusters, 2))
    ]
    poses = []
    for _ in range(n_poses):
        box = centers[int(rng.integers(clusters))]
        base = template_pose(layout, box)
        coords = base.coords + rng.normal(0.0, spread, size=base.coords.shape)
        conf = rng.uniform(0.05, 1.0, size=layout.joint_count)
        scale = rng.uniform(0.8, 1.2)
        jittered = DetectionBox(box.x_min, box.y_min, box.x_min + box.width * scale, box.y_min + box.height * scale)
        poses.append(Pose(layout, coords, conf, score=float(rng.uniform(0.1, 1.0)), box=jittered))
    return poses


def embeddings_matrix(embeddings: Sequence[IdentityEmbedding]) -> np.ndarray:
    return np.stack([e.vector for e in embeddings]) if embeddings else np.zeros((0, TrackingDefaults.EMBEDDING_DIM))


def identity_map(result: SyntheticTrajectories) -> Dict[Tuple[int, int], int]:
    """(frame, 姿態索引) -> 真實身分"""
    return {(f, p): ident for f, ids in enumerate(result.identities) for p, ident in enumerate(ids)}
