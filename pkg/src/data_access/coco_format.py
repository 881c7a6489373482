"""COCO 關鍵點格式存取

預測檔為列表 [{image_id, category_id, keypoints[3J], score, bbox[x, y, w, h], track_id?}]；
ground truth 為 COCO dict，含 images 與 annotations。
ground truth 的 visibility > 0 轉為 confidence 1.0，其餘為 0。
"""
import json
import logging
from collections import defaultdict
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, NamedTuple, Optional, Sequence, Union

import numpy as np

from src.config.constants import FileFormats
from src.models.geometry import DetectionBox, Pose
from src.models.layout import SkeletonLayout
from src.utils.exceptions import DimensionMismatchError, DuplicateRecordError, FileFormatError, ValidationError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
PERSON_CATEGORY = 1
_DIGITS = FileFormats.JSON_FLOAT_DIGITS


class CocoEntry(NamedTuple):
    image_id: int
    pose: Pose
    track_id: Optional[int] = None


def _round(values: Iterable[float]) -> List[float]:
    return [round(float(v), _DIGITS) for v in values]


def _load_json(path: PathLike) -> Any:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise FileFormatError(f"無法讀取 JSON 檔 {path}: {e}") from e


def _keypoint_array(values: Sequence[float], layout: SkeletonLayout) -> np.ndarray:
    kp = np.asarray(values, dtype=float)
    if kp.size != 3 * layout.joint_count:
        raise DimensionMismatchError(
            f"keypoints 長度 {kp.size} 與配置 {layout.name} ({layout.joint_count} 關節) 不符"
        )
    return kp.reshape(-1, 3)


def pose_to_coco(pose: Pose, image_id: int, track_id: Optional[int] = None) -> Dict[str, Any]:
    """姿態 -> COCO 預測項目，浮點數四捨五入到固定位數"""
    box = pose.box if pose.box is not None else pose.enclosing_box()
    entry: Dict[str, Any] = {
        "image_id": int(image_id),
        "category_id": PERSON_CATEGORY,
        "keypoints": _round(pose.flat_keypoints()),
        "score": round(pose.score, _DIGITS),
        "bbox": _round(box.to_xywh()),
    }
    if track_id is not None:
        entry["track_id"] = int(track_id)
    return entry


def pose_from_coco(entry: Mapping[str, Any], layout: SkeletonLayout) -> Pose:
    kp = _keypoint_array(entry["keypoints"], layout)
    score = float(entry.get("score", 1.0))
    box = None
    if "bbox" in entry:
        box = DetectionBox.from_xywh(entry["bbox"], score=min(max(score, 0.0), 1.0))
    return Pose(layout, kp[:, :2], np.clip(kp[:, 2], 0.0, 1.0), score=score, box=box)


def dumps(data: Any) -> str:
    """固定鍵順序的 JSON 輸出"""
    return json.dumps(data, sort_keys=True, separators=(",", ":"))


def write_coco_predictions(path: PathLike, entries: Iterable[Dict[str, Any]]) -> None:
    Path(path).write_text(dumps(list(entries)) + "\n", encoding="utf-8")


def read_coco_predictions(path: PathLike, layout: SkeletonLayout) -> List[CocoEntry]:
    """讀取預測檔

    Raises:
        FileFormatError: 檔案不是 COCO 預測列表
        DimensionMismatchError: keypoints 長度與配置不符
    """
    data = _load_json(path)
    if not isinstance(data, list):
        raise FileFormatError(f"{path} 不是 COCO 預測列表")
    entries = []
    try:
        for item in data:
            track = item.get("track_id")
            entries.append(CocoEntry(int(item["image_id"]), pose_from_coco(item, layout), track))
    except (KeyError, TypeError, ValueError) as e:
        raise FileFormatError(f"{path} 含有無法解析的預測: {e}") from e
    return entries


def group_by_image(entries: Iterable[CocoEntry]) -> Dict[int, List[Pose]]:
    grouped: Dict[int, List[Pose]] = defaultdict(list)
    for entry in entries:
        grouped[entry.image_id].append(entry.pose)
    return dict(grouped)


def _gt_pose(ann: Mapping[str, Any], layout: SkeletonLayout) -> Pose:
    kp = _keypoint_array(ann["keypoints"], layout)
    box = DetectionBox.from_xywh(ann["bbox"]) if "bbox" in ann else None
    return Pose(layout, kp[:, :2], (kp[:, 2] > 0).astype(float), score=1.0, box=box)


def read_coco_ground_truth(path: PathLike, layout: SkeletonLayout) -> Dict[int, List[Pose]]:
    """讀取 ground truth，沒有標註的影像對應空列表

    Raises:
        DuplicateRecordError: images 中 id 重複
        FileFormatError: 標註指向不存在的影像或欄位缺失
    """
    data = _load_json(path)
    try:
        gts: Dict[int, List[Pose]] = {}
        for image in data["images"]:
            image_id = int(image["id"])
            if image_id in gts:
                raise DuplicateRecordError(f"{path} 中 image id 重複: {image_id}")
            gts[image_id] = []
        for ann in data.get("annotations", []):
            image_id = int(ann["image_id"])
            if image_id not in gts:
                raise FileFormatError(f"{path} 的標註指向不存在的影像 {image_id}")
            gts[image_id].append(_gt_pose(ann, layout))
    except (KeyError, TypeError, ValueError) as e:
        raise FileFormatError(f"{path} 不是合法的 COCO ground truth: {e}") from e
    logger.info("ground truth %s: %d 張影像", path, len(gts))
    return gts


def ground_truth_dict(
    gts: Mapping[int, Sequence[Pose]],
    track_ids: Optional[Mapping[int, Sequence[int]]] = None,
) -> Dict[str, Any]:
    """image id -> 姿態 的對應轉成 COCO ground truth dict"""
    images = []
    annotations = []
    for image_id in sorted(gts):
        images.append({"id": int(image_id)})
        for i, pose in enumerate(gts[image_id]):
            kp = np.column_stack([pose.coords, np.where(pose.confidences > 0, 2.0, 0.0)]).ravel()
            box = pose.box if pose.box is not None else pose.enclosing_box()
            ann: Dict[str, Any] = {
                "id": len(annotations) + 1,
                "image_id": int(image_id),
                "category_id": PERSON_CATEGORY,
                "keypoints": _round(kp),
                "num_keypoints": int(np.sum(pose.confidences > 0)),
                "bbox": _round(box.to_xywh()),
                "area": round(box.area, _DIGITS),
                "iscrowd": 0,
            }
            if track_ids is not None:
                ann["track_id"] = int(track_ids[image_id][i])
            annotations.append(ann)
    if not images and not annotations:
        raise ValidationError("ground truth 為空")
    return {
        "images": images,
        "annotations": annotations,
        "categories": [{"id": PERSON_CATEGORY, "name": "person"}],
    }


def write_coco_ground_truth(
    path: PathLike,
    gts: Mapping[int, Sequence[Pose]],
    track_ids: Optional[Mapping[int, Sequence[int]]] = None,
) -> None:
    Path(path).write_text(dumps(ground_truth_dict(gts, track_ids)) + "\n", encoding="utf-8")
