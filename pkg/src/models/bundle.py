"""管線資料模型

FrameBundle 是在各階段之間傳遞的單一 frame 產物；
StageSpec 描述一個階段 (名稱、下游佇列容量、worker 函式)；
DetectionFrame 是偵測檔中的一個 frame。
"""
from dataclasses import dataclass, field, replace
from typing import Any, Callable, List, Optional, Tuple

from src.config.constants import StageName
from src.models.features import FeatureMap, IdentityEmbedding
from src.models.geometry import CropTransform, DetectionBox, Heatmap, Pose
from src.models.track import TrackRecord
from src.utils.exceptions import ConfigurationError, ValidationError


@dataclass
class FrameBundle:
    """單一 frame 的所有產物

    欄位隨 bundle 往下游移動而逐步填入；同一時間只屬於一個階段。

    Attributes:
        frame_index: frame 編號 (同一來源內嚴格遞增)
        source: 來源 id
        image: 影像路徑或 id (不讀取像素)
        detections: 偵測框
        crop_ids: 每個偵測框對應的熱圖 / 特徵記錄編號
        crops: 熱圖到影像的轉換
        heatmaps: 每個 crop 的 logits 熱圖
        features: 每個 crop 的 re-ID 特徵圖 (可選)
        attention: 每個 crop 的注意力圖 (可選)
        embeddings: 每個姿態的身分向量 (可選)
        poses: NMS 後的姿態
        track_links: (姿態索引, track id)
        records: 追蹤輸出列
        output: 後處理產生的可序列化結果
        sequence: 管線內部的序號
    """
    frame_index: int
    source: str = "0"
    image: Optional[str] = None
    detections: List[DetectionBox] = field(default_factory=list)
    crop_ids: List[int] = field(default_factory=list)
    crops: List[CropTransform] = field(default_factory=list)
    heatmaps: List[Heatmap] = field(default_factory=list)
    features: Optional[List[FeatureMap]] = None
    attention: Optional[List[FeatureMap]] = None
    embeddings: Optional[List[Optional[IdentityEmbedding]]] = None
    poses: Optional[List[Pose]] = None
    track_links: Optional[List[Tuple[int, int]]] = None
    records: Optional[List[TrackRecord]] = None
    output: Optional[Any] = None
    sequence: int = -1


Worker = Callable[[FrameBundle], FrameBundle]


@dataclass(frozen=True)
class StageSpec:
    """階段描述

    Attributes:
        name: 階段名稱
        capacity: 此階段輸出佇列的容量
        worker: 處理一個 bundle 並回傳 (同一個或新的) bundle
    """
    name: StageName
    worker: Worker
    capacity: int = 64

    def __post_init__(self):
        if self.capacity < 1:
            raise ConfigurationError(f"佇列容量必須 >= 1: {self.capacity}")


@dataclass(frozen=True)
class DetectionFrame:
    """偵測檔中的一個 frame

    Attributes:
        frame_index: frame 編號
        source: 來源 id
        image: 影像路徑或 id
        detections: 偵測框
        crop_ids: 每個偵測框對應的熱圖記錄編號
    """
    frame_index: int
    source: str = "0"
    image: Optional[str] = None
    detections: Tuple[DetectionBox, ...] = ()
    crop_ids: Tuple[int, ...] = ()

    def __post_init__(self):
        if len(self.detections) != len(self.crop_ids):
            raise ValidationError("偵測框與 crop id 數量不同")

    def above(self, score_floor: float) -> "DetectionFrame":
        """只保留分數 >= score_floor 的偵測"""
        kept = [(d, c) for d, c in zip(self.detections, self.crop_ids) if d.score >= score_floor]
        return replace(
            self,
            detections=tuple(d for d, _ in kept),
            crop_ids=tuple(c for _, c in kept),
        )
