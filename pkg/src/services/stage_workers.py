"""預設的五個管線階段

load      讀取 frame 描述 (來源、影像 id)
detect    重播偵測檔，濾除低分偵測
transform 依熱圖大小建立 crop 轉換，讀取 re-ID 特徵圖
pose      重播熱圖 -> 解碼 -> Pose NMS -> (可選) embedding 與 MSIM 追蹤
post      轉成 COCO 或 OpenPose 輸出結構

ResultSink 依輸入順序收集 post 的輸出並寫檔。
"""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from src.config.constants import OutputFormat, StageName
from src.config.settings import AppSettings, NmsParams
from src.data_access.coco_format import pose_to_coco, write_coco_predictions
from src.data_access.detection_file import DetectionRepository, file_detector
from src.data_access.feature_file import FeatureRepository
from src.data_access.heatmap_file import HeatmapRepository, file_pose_backend
from src.data_access.openpose_format import openpose_frame, write_openpose_frame
from src.data_access.track_file import write_tracks_jsonl
from src.models.bundle import FrameBundle, StageSpec
from src.models.features import FeatureMap
from src.models.geometry import CropTransform, Heatmap
from src.models.layout import SkeletonLayout
from src.models.track import TrackRecord
from src.services.decode_service import DecodeService, normalize_two_step
from src.services.nms_service import pose_nms_indices
from src.services.tracking_service import EmbeddingProjector, TrackingService, embed_with_attention

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


@dataclass
class PipelineInputs:
    """管線讀取的檔案"""
    detections: DetectionRepository
    heatmaps: HeatmapRepository
    features: Optional[FeatureRepository] = None


def heatmap_attention(logits: Heatmap) -> FeatureMap:
    """以所有關節信心圖的最大值作為單通道注意力圖"""
    conf, _ = normalize_two_step(logits)
    return FeatureMap(conf.values.max(axis=0)[None], is_attention=True)


class StageWorkers:
    """持有各階段共用的服務；每個方法是一個階段的 worker

    pose 階段持有追蹤狀態，因此一次執行只能使用一組 StageWorkers。
    """

    def __init__(
        self,
        layout: SkeletonLayout,
        inputs: PipelineInputs,
        settings: AppSettings = AppSettings(),
        nms_params: Optional[NmsParams] = None,
        output_format: OutputFormat = OutputFormat.COCO,
    ):
        """初始化

        Args:
            layout: 骨架配置
            inputs: 偵測、熱圖與 (可選) 特徵檔
            settings: 整體設定 (pipeline.track 決定是否追蹤)
            nms_params: Pose NMS 參數；None 時依序使用 settings.nms 與 NmsParams.default
            output_format: post 階段的輸出格式
        """
        self.layout = layout
        self.inputs = inputs
        self.settings = settings
        self.nms_params = nms_params or settings.nms or NmsParams.default(layout.joint_count)
        self.output_format = output_format
        self.decoder = DecodeService(layout, settings.decode)
        self.tracker = TrackingService(settings.tracking) if settings.pipeline.track else None
        self._projector: Optional[EmbeddingProjector] = None
        self.dropped_detections = 0

    def load(self, bundle: FrameBundle) -> FrameBundle:
        frame = self.inputs.detections.get_by_id(bundle.frame_index)
        bundle.source = frame.source
        bundle.image = frame.image
        return bundle

    def detect(self, bundle: FrameBundle) -> FrameBundle:
        frame, dropped = file_detector(self.inputs.detections, bundle.frame_index, self.settings.pipeline.score_floor)
        self.dropped_detections += dropped
        bundle.detections = list(frame.detections)
        bundle.crop_ids = list(frame.crop_ids)
        return bundle

    def transform(self, bundle: FrameBundle) -> FrameBundle:
        crops: List[CropTransform] = []
        for box, crop_id in zip(bundle.detections, bundle.crop_ids):
            _, h, w = self.inputs.heatmaps.shape(crop_id)
            crops.append(CropTransform.from_box(box, w, h))
        bundle.crops = crops
        if self.inputs.features is not None:
            bundle.features = [self.inputs.features.get_by_id(c) for c in bundle.crop_ids]
        return bundle

    def _projector_for(self, feature: FeatureMap) -> EmbeddingProjector:
        if self._projector is None:
            self._projector = EmbeddingProjector.seeded(feature.flatten().size, self.settings.pipeline.seed)
        return self._projector

    def pose(self, bundle: FrameBundle) -> FrameBundle:
        bundle.heatmaps = [file_pose_backend(self.inputs.heatmaps, c) for c in bundle.crop_ids]
        poses = self.decoder.decode_crops(bundle.heatmaps, bundle.crops, bundle.detections)
        keep = pose_nms_indices(poses, self.nms_params)
        bundle.poses = [poses[i] for i in keep]

        if bundle.features is not None:
            bundle.attention = [heatmap_attention(bundle.heatmaps[i]) for i in keep]
            bundle.embeddings = [
                embed_with_attention(bundle.features[i], att, self._projector_for(bundle.features[i]))
                for i, att in zip(keep, bundle.attention)
            ]
        if self.tracker is not None:
            self.tracker.step(bundle)
        return bundle

    def post(self, bundle: FrameBundle) -> FrameBundle:
        poses = bundle.poses or []
        track_ids: Optional[List[int]] = None
        if bundle.track_links is not None:
            by_pose = dict(bundle.track_links)
            track_ids = [by_pose[i] for i in range(len(poses))]
        if self.output_format is OutputFormat.OPENPOSE:
            bundle.output = openpose_frame(poses, track_ids)
        else:
            bundle.output = [
                pose_to_coco(pose, bundle.frame_index, None if track_ids is None else track_ids[i])
                for i, pose in enumerate(poses)
            ]
        return bundle


def build_default_stages(workers: StageWorkers, capacity: int) -> List[StageSpec]:
    """把 StageWorkers 的五個方法組成標準順序的 StageSpec"""
    return [
        StageSpec(StageName.LOAD, workers.load, capacity),
        StageSpec(StageName.DETECT, workers.detect, capacity),
        StageSpec(StageName.TRANSFORM, workers.transform, capacity),
        StageSpec(StageName.POSE, workers.pose, capacity),
        StageSpec(StageName.POST, workers.post, capacity),
    ]


class ResultSink:
    """依 frame 順序收集輸出

    COCO 格式在 close 時寫成單一 JSON 檔；OpenPose 格式每個 frame 立即寫一個檔案到 out 目錄。
    """

    def __init__(self, out: PathLike, output_format: OutputFormat = OutputFormat.COCO):
        self.out = Path(out)
        self.output_format = output_format
        self.entries: List[Dict[str, Any]] = []
        self.records: List[TrackRecord] = []
        self.frames = 0
        if output_format is OutputFormat.OPENPOSE:
            self.out.mkdir(parents=True, exist_ok=True)

    def __call__(self, bundle: FrameBundle) -> None:
        self.frames += 1
        if bundle.records:
            self.records.extend(bundle.records)
        if self.output_format is OutputFormat.OPENPOSE:
            write_openpose_frame(self.out, bundle.frame_index, bundle.output)
        else:
            self.entries.extend(bundle.output or [])

    def close(self, tracks_out: Optional[PathLike] = None) -> None:
        if self.output_format is OutputFormat.COCO:
            write_coco_predictions(self.out, self.entries)
        if tracks_out is not None:
            write_tracks_jsonl(tracks_out, self.records)
        logger.info("輸出 %d 個 frame 至 %s", self.frames, self.out)


def frame_source(detections: DetectionRepository):
    """依 frame 編號產生空的 FrameBundle"""
    return (FrameBundle(frame_index=i) for i in detections.ids())
