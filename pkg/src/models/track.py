"""追蹤資料模型

Track (軌跡池中的一個身分) 與 TrackRecord (輸出列)。
"""
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Dict, List, Optional

import numpy as np

from src.config.constants import FileFormats, TrackStatus
from src.models.features import IdentityEmbedding
from src.models.geometry import DetectionBox, Pose

if TYPE_CHECKING:
    from src.services.kalman_filter import KalmanBoxFilter

_DIGITS = FileFormats.JSON_FLOAT_DIGITS


def _round(values) -> List[float]:
    return [round(float(v), _DIGITS) for v in values]


@dataclass
class Track:
    """軌跡

    只由擁有它的 TrackPool 修改。

    Attributes:
        track_id: 在同一次執行中唯一的編號
        kalman: 卡爾曼濾波器
        last_pose: 最後一次匹配的姿態
        embedding: EMA 平滑後的身分向量
        last_seen: 最後匹配的 frame
        status: active / lost / removed
        hits: 累計匹配次數
    """
    track_id: int
    kalman: "KalmanBoxFilter"
    last_pose: Pose
    embedding: Optional[IdentityEmbedding]
    last_seen: int
    status: TrackStatus = TrackStatus.ACTIVE
    hits: int = 1
    history: List[int] = field(default_factory=list)

    @property
    def predicted_box(self) -> DetectionBox:
        return self.kalman.box()

    def frames_lost(self, frame: int) -> int:
        return frame - self.last_seen


@dataclass(frozen=True)
class TrackRecord:
    """追蹤輸出列 {frame, track_id, box, keypoints, score}"""
    frame: int
    track_id: int
    box: DetectionBox
    pose: Pose

    @property
    def score(self) -> float:
        return self.pose.score

    def to_dict(self) -> Dict[str, Any]:
        return {
            "frame": self.frame,
            "track_id": self.track_id,
            "box": _round(self.box.as_array()),
            "keypoints": _round(self.pose.flat_keypoints()),
            "score": round(self.score, _DIGITS),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any], layout) -> "TrackRecord":
        x0, y0, x1, y1 = (float(v) for v in data["box"])
        box = DetectionBox(x0, y0, x1, y1, score=min(max(float(data.get("score", 1.0)), 0.0), 1.0))
        kp = np.asarray(data["keypoints"], dtype=float).reshape(-1, 3)
        pose = Pose(
            layout=layout,
            coords=kp[:, :2],
            confidences=np.clip(kp[:, 2], 0.0, 1.0),
            score=float(data.get("score", 1.0)),
            box=box,
        )
        return cls(frame=int(data["frame"]), track_id=int(data["track_id"]), box=box, pose=pose)
