"""把合成軌跡寫成管線輸入檔

產生的檔案：
- detections.jsonl  偵測 (含可選的低分干擾偵測)
- heatmaps.hmap     每個偵測一筆 logits 熱圖
- gt.json           COCO ground truth (image id = frame)
- gt_tracks.jsonl   ground-truth 軌跡
- features.npz      每個偵測的 re-ID 特徵圖 (可選)
"""
import logging
from pathlib import Path
from typing import Dict, List, NamedTuple, Optional, Tuple, Union

import numpy as np

from src.config.constants import PipelineDefaults
from src.data_access.coco_format import write_coco_ground_truth
from src.data_access.detection_file import write_detections
from src.data_access.feature_file import write_features
from src.data_access.heatmap_file import write_heatmaps
from src.data_access.track_file import write_tracks_jsonl
from src.models.bundle import DetectionFrame
from src.models.features import FeatureMap
from src.models.geometry import CropTransform, DetectionBox, Heatmap, Pose
from src.synth.generators import SyntheticTrajectories, gen_pose_heatmaps

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


class ScenePaths(NamedTuple):
    detections: Path
    heatmaps: Path
    ground_truth: Path
    gt_tracks: Path
    features: Optional[Path]


def _distractor(frame: int) -> DetectionBox:
    return DetectionBox(-500.0 - frame, -500.0, -440.0 - frame, -380.0, score=0.05)


def write_scene(
    out_dir: PathLike,
    scene: SyntheticTrajectories,
    rng: np.random.Generator,
    heatmap_shape: Tuple[int, int] = PipelineDefaults.HEATMAP_SHAPE,
    sigma: float = 1.5,
    distractors: bool = False,
    feature_channels: int = 0,
    feature_noise: float = 0.05,
) -> ScenePaths:
    """寫出一個合成場景

    Args:
        out_dir: 輸出目錄 (不存在時建立)
        scene: gen_trajectories 的結果
        rng: 特徵圖雜訊的亂數來源
        heatmap_shape: 熱圖 (H, W)
        sigma: 熱圖高斯峰寬度 (熱圖像素)
        distractors: 每個 frame 加入一個分數 0.05 的偵測
        feature_channels: > 0 時為每個偵測寫出 C × H × W 的特徵圖，
            同一身分共用固定圖樣並加上 N(0, feature_noise²) 雜訊

    Returns:
        ScenePaths
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    h, w = heatmap_shape
    frames: List[DetectionFrame] = []
    heatmaps: List[Heatmap] = []
    features: Dict[int, FeatureMap] = {}
    patterns: Dict[int, np.ndarray] = {}

    for bundle, identities in zip(scene.bundles, scene.identities):
        boxes: List[DetectionBox] = []
        crop_ids: List[int] = []
        poses: List[Pose] = bundle.poses or []
        for pose, ident in zip(poses, identities):
            transform = CropTransform.from_box(pose.box, w, h)
            crop_id = len(heatmaps)
            heatmaps.append(gen_pose_heatmaps(transform.invert(pose.coords), sigma, w, h))
            boxes.append(pose.box)
            crop_ids.append(crop_id)
            if feature_channels > 0:
                if ident not in patterns:
                    patterns[ident] = np.random.default_rng(ident).standard_normal((feature_channels, h, w))
                noisy = patterns[ident] + rng.normal(0.0, feature_noise, size=(feature_channels, h, w))
                features[crop_id] = FeatureMap(noisy)
        if distractors:
            crop_id = len(heatmaps)
            joints = poses[0].joint_count if poses else scene.gt_tracks[0].pose.joint_count
            heatmaps.append(gen_pose_heatmaps(np.full((joints, 2), [w / 2, h / 2]), sigma, w, h))
            boxes.append(_distractor(bundle.frame_index))
            crop_ids.append(crop_id)
            if feature_channels > 0:
                features[crop_id] = FeatureMap(rng.standard_normal((feature_channels, h, w)))
        frames.append(DetectionFrame(
            frame_index=bundle.frame_index,
            image=f"{bundle.frame_index:06d}.jpg",
            detections=tuple(boxes),
            crop_ids=tuple(crop_ids),
        ))

    paths = ScenePaths(
        detections=out / "detections.jsonl",
        heatmaps=out / "heatmaps.hmap",
        ground_truth=out / "gt.json",
        gt_tracks=out / "gt_tracks.jsonl",
        features=out / "features.npz" if feature_channels > 0 else None,
    )
    write_detections(paths.detections, frames)
    write_heatmaps(paths.heatmaps, heatmaps)

    gts: Dict[int, List[Pose]] = {b.frame_index: [] for b in scene.bundles}
    track_ids: Dict[int, List[int]] = {b.frame_index: [] for b in scene.bundles}
    for record in scene.gt_tracks:
        gts[record.frame].append(record.pose)
        track_ids[record.frame].append(record.track_id)
    write_coco_ground_truth(paths.ground_truth, gts, track_ids)
    write_tracks_jsonl(paths.gt_tracks, scene.gt_tracks)
    if paths.features is not None:
        write_features(paths.features, features)
    logger.info("合成場景寫入 %s: %d frame, %d 筆熱圖", out, len(frames), len(heatmaps))
    return paths
