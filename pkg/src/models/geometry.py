"""幾何資料模型

此模組定義所有模組共用的資料模型：關鍵點、偵測框、姿態、熱圖與
熱圖到影像座標的仿射轉換。所有型別建立後皆不可變更。

座標慣例：網格索引 i 代表連續座標 i 的像素中心。
"""
import math
from dataclasses import dataclass, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.config.constants import HeatmapKind
from src.models.layout import SkeletonLayout
from src.utils.exceptions import DimensionMismatchError, ValidationError


def _readonly(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class Keypoint:
    """單一關鍵點 (像素座標 + 信心分數)"""
    x: float
    y: float
    confidence: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValidationError(f"關鍵點座標必須為有限值: ({self.x}, {self.y})")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValidationError(f"信心分數必須在 [0, 1]: {self.confidence}")


@dataclass(frozen=True)
class DetectionBox:
    """軸對齊偵測框

    Attributes:
        x_min, y_min, x_max, y_max: 像素座標，允許超出影像範圍
        score: 偵測分數 [0, 1]
        category: 類別 (人 = 0)
    """
    x_min: float
    y_min: float
    x_max: float
    y_max: float
    score: float = 1.0
    category: int = 0

    def __post_init__(self):
        coords = (self.x_min, self.y_min, self.x_max, self.y_max)
        if not all(math.isfinite(v) for v in coords):
            raise ValidationError(f"偵測框座標必須為有限值: {coords}")
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValidationError(f"偵測框退化: {coords}")
        if not 0.0 <= self.score <= 1.0:
            raise ValidationError(f"偵測分數必須在 [0, 1]: {self.score}")

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> Tuple[float, float]:
        return (0.5 * (self.x_min + self.x_max), 0.5 * (self.y_min + self.y_max))

    def contains(self, x: float, y: float) -> bool:
        """點是否落在框內 (含邊界)"""
        return self.x_min <= x <= self.x_max and self.y_min <= y <= self.y_max

    def as_array(self) -> np.ndarray:
        return np.array([self.x_min, self.y_min, self.x_max, self.y_max], dtype=float)

    def to_xywh(self) -> List[float]:
        return [self.x_min, self.y_min, self.width, self.height]

    @classmethod
    def from_xywh(cls, xywh: Sequence[float], score: float = 1.0, category: int = 0) -> "DetectionBox":
        x, y, w, h = (float(v) for v in xywh)
        return cls(x, y, x + w, y + h, score=score, category=category)

    @classmethod
    def from_center(cls, cx: float, cy: float, width: float, height: float, score: float = 1.0) -> "DetectionBox":
        return cls(cx - width / 2, cy - height / 2, cx + width / 2, cy + height / 2, score=score)

    def clamp(self, image_width: float, image_height: float) -> "DetectionBox":
        """裁切到影像範圍，只在繪圖或裁切影像時使用"""
        return replace(
            self,
            x_min=max(0.0, self.x_min),
            y_min=max(0.0, self.y_min),
            x_max=min(float(image_width), self.x_max),
            y_max=min(float(image_height), self.y_max),
        )


def iou(a: DetectionBox, b: DetectionBox) -> float:
    """兩框的 intersection-over-union，交集面積為零時回傳 0"""
    iw = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    ih = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


def iou_matrix(boxes_a: Sequence[DetectionBox], boxes_b: Sequence[DetectionBox]) -> np.ndarray:
    """批次 IoU，回傳 len(a) × len(b) 矩陣"""
    if not boxes_a or not boxes_b:
        return np.zeros((len(boxes_a), len(boxes_b)))
    a = np.stack([box.as_array() for box in boxes_a])[:, None, :]
    b = np.stack([box.as_array() for box in boxes_b])[None, :, :]
    iw = np.clip(np.minimum(a[..., 2], b[..., 2]) - np.maximum(a[..., 0], b[..., 0]), 0, None)
    ih = np.clip(np.minimum(a[..., 3], b[..., 3]) - np.maximum(a[..., 1], b[..., 1]), 0, None)
    inter = iw * ih
    area_a = (a[..., 2] - a[..., 0]) * (a[..., 3] - a[..., 1])
    area_b = (b[..., 2] - b[..., 0]) * (b[..., 3] - b[..., 1])
    return inter / (area_a + area_b - inter)


def crop_box_around(k: Keypoint, reference: DetectionBox, fraction: float) -> DetectionBox:
    """以關鍵點為中心、尺寸為參考框 fraction 倍的框

    Raises:
        ValidationError: fraction 不在 (0, 1]
    """
    if not 0.0 < fraction <= 1.0:
        raise ValidationError(f"fraction 必須在 (0, 1]: {fraction}")
    return DetectionBox.from_center(
        k.x, k.y, fraction * reference.width, fraction * reference.height, score=reference.score
    )


@dataclass(frozen=True)
class CropTransform:
    """熱圖座標到影像座標的仿射轉換：x_img = scale_x · x + offset_x"""
    scale_x: float
    scale_y: float
    offset_x: float
    offset_y: float

    def __post_init__(self):
        if not (self.scale_x > 0 and self.scale_y > 0):
            raise ValidationError(f"縮放必須為正數: ({self.scale_x}, {self.scale_y})")

    @classmethod
    def identity(cls) -> "CropTransform":
        return cls(1.0, 1.0, 0.0, 0.0)

    @classmethod
    def from_box(cls, box: DetectionBox, width: int, height: int) -> "CropTransform":
        """把 width × height 的熱圖鋪滿 box

        熱圖像素 i 覆蓋 [x_min + i·s, x_min + (i+1)·s]，其中心對應 x_min + (i + 0.5)·s。
        """
        sx = box.width / width
        sy = box.height / height
        return cls(sx, sy, box.x_min + 0.5 * sx, box.y_min + 0.5 * sy)

    def apply(self, xy: np.ndarray) -> np.ndarray:
        """(N, 2) 熱圖座標 -> 影像座標"""
        xy = np.asarray(xy, dtype=float)
        return np.stack([xy[..., 0] * self.scale_x + self.offset_x, xy[..., 1] * self.scale_y + self.offset_y], axis=-1)

    def invert(self, xy: np.ndarray) -> np.ndarray:
        """(N, 2) 影像座標 -> 熱圖座標"""
        xy = np.asarray(xy, dtype=float)
        return np.stack([(xy[..., 0] - self.offset_x) / self.scale_x, (xy[..., 1] - self.offset_y) / self.scale_y], axis=-1)

    def to_dict(self) -> Dict[str, float]:
        return {"scale_x": self.scale_x, "scale_y": self.scale_y, "offset_x": self.offset_x, "offset_y": self.offset_y}


@dataclass(frozen=True, eq=False)
class Pose:
    """姿態

    關鍵點以陣列形式保存 (coords: J × 2, confidences: J)，
    keypoints 屬性提供 Keypoint 物件檢視。
    ground truth 以 confidence > 0 表示已標註關節。

    Attributes:
        layout: 骨架配置
        coords: 影像座標
        confidences: 每個關節的信心分數 [0, 1]
        score: 姿態分數
        box: 解碼來源的提案框
    """
    layout: SkeletonLayout
    coords: np.ndarray
    confidences: np.ndarray
    score: float = 1.0
    box: Optional[DetectionBox] = None

    def __post_init__(self):
        coords = np.array(self.coords, dtype=float)
        confidences = np.array(self.confidences, dtype=float)
        m = self.layout.joint_count
        if coords.shape != (m, 2) or confidences.shape != (m,):
            raise DimensionMismatchError(
                f"姿態形狀 {coords.shape}/{confidences.shape} 與配置 {self.layout.name} ({m} 關節) 不符"
            )
        if not np.all(np.isfinite(coords)):
            raise ValidationError("關鍵點座標必須為有限值")
        if np.any(confidences < 0) or np.any(confidences > 1):
            raise ValidationError("關節信心分數必須在 [0, 1]")
        object.__setattr__(self, "coords", _readonly(coords))
        object.__setattr__(self, "confidences", _readonly(confidences))
        object.__setattr__(self, "score", float(self.score))

    @classmethod
    def from_keypoints(
        cls,
        layout: SkeletonLayout,
        keypoints: Sequence[Keypoint],
        score: float = 1.0,
        box: Optional[DetectionBox] = None,
    ) -> "Pose":
        return cls(
            layout=layout,
            coords=np.array([[k.x, k.y] for k in keypoints], dtype=float).reshape(-1, 2),
            confidences=np.array([k.confidence for k in keypoints], dtype=float),
            score=score,
            box=box,
        )

    @property
    def keypoints(self) -> Tuple[Keypoint, ...]:
        return tuple(
            Keypoint(float(x), float(y), float(c))
            for (x, y), c in zip(self.coords, self.confidences)
        )

    @property
    def joint_count(self) -> int:
        return self.layout.joint_count

    def keypoint(self, index: int) -> Keypoint:
        x, y = self.coords[index]
        return Keypoint(float(x), float(y), float(self.confidences[index]))

    def with_score(self, score: float) -> "Pose":
        return replace(self, score=score)

    def enclosing_box(self) -> DetectionBox:
        """已標註關節的外接框 (至少 1 像素)"""
        labeled = self.coords[self.confidences > 0]
        if labeled.size == 0:
            labeled = self.coords
        x0, y0 = labeled.min(axis=0)
        x1, y1 = labeled.max(axis=0)
        return DetectionBox(x0, y0, max(x1, x0 + 1.0), max(y1, y0 + 1.0))

    def flat_keypoints(self) -> List[float]:
        """COCO 格式的 [x1, y1, c1, x2, y2, c2, ...]"""
        return np.column_stack([self.coords, self.confidences]).ravel().tolist()


def same_layout(a: SkeletonLayout, b: SkeletonLayout) -> bool:
    return a is b or (a.name == b.name and a.joint_count == b.joint_count)


def check_same_layout(a: Pose, b: Pose) -> None:
    """Raises:
        DimensionMismatchError: 兩個姿態的骨架配置不同
    """
    if not same_layout(a.layout, b.layout):
        raise DimensionMismatchError(f"骨架配置不同: {a.layout.name} vs {b.layout.name}")


@dataclass(frozen=True, eq=False)
class Heatmap:
    """J × H × W 熱圖

    Attributes:
        values: 熱圖數值
        kind: logits / confidence / probability
    """
    values: np.ndarray
    kind: HeatmapKind

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim == 2:
            values = values[None]
        if values.ndim != 3 or min(values.shape) < 1:
            raise DimensionMismatchError(f"熱圖必須為 J × H × W: {values.shape}")
        if np.any(np.isnan(values)):
            raise ValidationError("熱圖含有 NaN")

        if self.kind is HeatmapKind.LOGITS:
            if np.any(values == np.inf):
                raise ValidationError("logits 不可為 +inf")
        elif self.kind is HeatmapKind.CONFIDENCE:
            if np.any(values <= 0) or np.any(values >= 1):
                raise ValidationError("信心熱圖數值必須在 (0, 1)")
        else:
            sums = values.reshape(values.shape[0], -1).sum(axis=1)
            if np.any(values < 0) or np.any(np.abs(sums - 1.0) > 1e-6):
                raise ValidationError("機率熱圖每個關節必須非負且總和為 1")
        object.__setattr__(self, "values", _readonly(values))

    @property
    def joints(self) -> int:
        return self.values.shape[0]

    @property
    def height(self) -> int:
        return self.values.shape[1]

    @property
    def width(self) -> int:
        return self.values.shape[2]

    def joint(self, index: int) -> np.ndarray:
        """單一關節的 H × W 網格"""
        return self.values[index]


def to_json_dict(box: DetectionBox) -> Dict[str, Any]:
    return {"box": box.as_array().tolist(), "score": box.score, "category": box.category}
