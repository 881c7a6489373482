"""追蹤結果檔存取

JSONL：每行一個 TrackRecord {frame, track_id, box, keypoints, score}。
MOT CSV：frame,id,x,y,w,h,score,-1,-1,-1 (無標題列)，以 pandas 讀寫。
"""
import json
import logging
from pathlib import Path
from typing import Iterable, List, Union

import pandas as pd

from src.config.constants import FileFormats
from src.models.layout import SkeletonLayout
from src.models.track import TrackRecord
from src.utils.exceptions import FileFormatError, ValidationError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
MOT_COLUMNS = ["frame", "id", "x", "y", "w", "h", "score", "wx", "wy", "wz"]


def write_tracks_jsonl(path: PathLike, records: Iterable[TrackRecord]) -> int:
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record.to_dict(), sort_keys=True) + "\n")
            count += 1
    return count


def read_tracks_jsonl(path: PathLike, layout: SkeletonLayout) -> List[TrackRecord]:
    """Raises:
        FileFormatError: 任一行無法解析
    """
    records = []
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise FileFormatError(f"無法讀取追蹤檔 {path}: {e}") from e
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            records.append(TrackRecord.from_dict(json.loads(line), layout))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError, ValidationError) as e:
            raise FileFormatError(f"{path}:{lineno} 無法解析: {e}") from e
    return records


def tracks_to_frame(records: Iterable[TrackRecord]) -> pd.DataFrame:
    """TrackRecord -> MOT 表格"""
    rows = [
        [r.frame, r.track_id, *r.box.to_xywh(), r.score, -1, -1, -1]
        for r in records
    ]
    frame = pd.DataFrame(rows, columns=MOT_COLUMNS)
    return frame.round(FileFormats.JSON_FLOAT_DIGITS)


def write_mot_csv(path: PathLike, records: Iterable[TrackRecord]) -> None:
    tracks_to_frame(records).to_csv(path, header=False, index=False)


def read_mot_csv(path: PathLike) -> pd.DataFrame:
    try:
        frame = pd.read_csv(path, header=None, names=MOT_COLUMNS)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise FileFormatError(f"無法讀取 MOT CSV {path}: {e}") from e
    return frame.astype({"frame": int, "id": int})
