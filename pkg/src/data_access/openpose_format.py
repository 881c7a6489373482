"""OpenPose 式逐 frame JSON 輸出

每個 frame 一個 <frame:012d>_keypoints.json，people[] 內的每個人依部位分開存放關鍵點。
只保證結構相容，配置中沒有的部位輸出空列表。
"""
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

from src.config.constants import FileFormats
from src.data_access.coco_format import dumps
from src.models.geometry import Pose

PathLike = Union[str, Path]

PART_KEYS = {
    "body": "pose_keypoints_2d",
    "foot": "foot_keypoints_2d",
    "face": "face_keypoints_2d",
    "left_hand": "hand_left_keypoints_2d",
    "right_hand": "hand_right_keypoints_2d",
}


def _part_flat(pose: Pose, part: str) -> List[float]:
    if part not in pose.layout.part_ranges:
        return []
    start, stop = pose.layout.part_ranges[part]
    flat = pose.flat_keypoints()[3 * start:3 * stop]
    return [round(float(v), FileFormats.JSON_FLOAT_DIGITS) for v in flat]


def openpose_frame(poses: Sequence[Pose], track_ids: Optional[Sequence[int]] = None) -> Dict[str, Any]:
    """一個 frame 的 OpenPose 結構；沒有追蹤時 person_id 為 [-1]"""
    people = []
    for i, pose in enumerate(poses):
        person: Dict[str, Any] = {key: _part_flat(pose, part) for part, key in PART_KEYS.items()}
        person["person_id"] = [int(track_ids[i])] if track_ids is not None else [-1]
        people.append(person)
    return {"version": FileFormats.OPENPOSE_VERSION, "people": people}


def openpose_filename(frame_index: int) -> str:
    return f"{frame_index:012d}_keypoints.json"


def write_openpose_frame(directory: PathLike, frame_index: int, data: Dict[str, Any]) -> Path:
    path = Path(directory) / openpose_filename(frame_index)
    path.write_text(dumps(data) + "\n", encoding="utf-8")
    return path
