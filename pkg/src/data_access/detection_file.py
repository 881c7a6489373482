"""偵測 JSONL 檔存取

每行一個 frame：
    {"frame": int, "source": str?, "image": str?,
     "detections": [{"box": [x0, y0, x1, y1], "score": s, "crop_id": int?}]}
crop_id 省略時為該偵測在整個檔案中的流水號。
"""
import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, List, Tuple, Union

from src.config.constants import FileFormats, NmsDefaults
from src.data_access.base import BaseRepository
from src.models.bundle import DetectionFrame
from src.models.geometry import DetectionBox
from src.utils.exceptions import FileFormatError, RecordNotFoundError, ValidationError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def _parse_frame(data: Dict[str, Any], running: int) -> DetectionFrame:
    detections = []
    crop_ids = []
    for i, det in enumerate(data.get("detections", [])):
        x0, y0, x1, y1 = (float(v) for v in det["box"])
        detections.append(DetectionBox(x0, y0, x1, y1, score=float(det.get("score", 1.0))))
        crop_ids.append(int(det.get("crop_id", running + i)))
    return DetectionFrame(
        frame_index=int(data["frame"]),
        source=str(data.get("source", "0")),
        image=data.get("image"),
        detections=tuple(detections),
        crop_ids=tuple(crop_ids),
    )


class DetectionRepository(BaseRepository[DetectionFrame]):
    """以 frame 編號查詢偵測結果

    Raises:
        FileFormatError: 檔案無法解析，或同一來源的 frame 編號沒有嚴格遞增
    """

    def __init__(self, path: PathLike):
        self.path = Path(path)
        self._frames: Dict[int, DetectionFrame] = {}
        self._load()

    def _load(self) -> None:
        running = 0
        last: Dict[str, int] = {}
        try:
            lines = self.path.read_text(encoding="utf-8").splitlines()
        except OSError as e:
            raise FileFormatError(f"無法讀取偵測檔 {self.path}: {e}") from e
        for lineno, line in enumerate(lines, start=1):
            if not line.strip():
                continue
            try:
                frame = _parse_frame(json.loads(line), running)
            except (json.JSONDecodeError, KeyError, TypeError, ValueError, ValidationError) as e:
                raise FileFormatError(f"{self.path}:{lineno} 無法解析: {e}") from e
            if frame.source in last and frame.frame_index <= last[frame.source]:
                raise FileFormatError(f"{self.path}:{lineno} frame 編號沒有遞增: {frame.frame_index}")
            if frame.frame_index in self._frames:
                raise FileFormatError(f"{self.path}:{lineno} frame 編號重複: {frame.frame_index}")
            last[frame.source] = frame.frame_index
            self._frames[frame.frame_index] = frame
            running += len(frame.detections)
        logger.info("偵測檔 %s: %d 個 frame、%d 個偵測", self.path, len(self._frames), running)

    def ids(self) -> List[int]:
        return sorted(self._frames)

    def get_by_id(self, record_id: int) -> DetectionFrame:
        try:
            return self._frames[record_id]
        except KeyError:
            raise RecordNotFoundError(f"偵測檔沒有 frame {record_id}") from None

    def __contains__(self, record_id: int) -> bool:
        return record_id in self._frames


def file_detector(
    repository: DetectionRepository,
    frame_index: int,
    score_floor: float = NmsDefaults.DETECTION_SCORE_FLOOR,
) -> Tuple[DetectionFrame, int]:
    """重播預先計算的偵測，並濾除分數低於 score_floor 者

    Returns:
        (保留的偵測, 濾除的數量)

    Raises:
        RecordNotFoundError: frame 不存在
    """
    frame = repository.get_by_id(frame_index)
    kept = frame.above(score_floor)
    dropped = len(frame.detections) - len(kept.detections)
    if dropped:
        logger.debug("frame %d 濾除 %d 個低分偵測 (< %.2f)", frame_index, dropped, score_floor)
    return kept, dropped


def frame_to_dict(frame: DetectionFrame) -> Dict[str, Any]:
    digits = FileFormats.JSON_FLOAT_DIGITS
    data: Dict[str, Any] = {
        "frame": frame.frame_index,
        "source": frame.source,
        "detections": [
            {
                "box": [round(float(v), digits) for v in det.as_array()],
                "score": round(det.score, digits),
                "crop_id": crop_id,
            }
            for det, crop_id in zip(frame.detections, frame.crop_ids)
        ],
    }
    if frame.image is not None:
        data["image"] = frame.image
    return data


def write_detections(path: PathLike, frames: Iterable[DetectionFrame]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for frame in frames:
            fh.write(json.dumps(frame_to_dict(frame), sort_keys=True) + "\n")
