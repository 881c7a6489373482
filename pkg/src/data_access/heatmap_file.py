"""HMAP 熱圖檔存取

檔案為連續的記錄，每筆記錄：
    b"HMAP" + <u32 J, u32 H, u32 W, u8 kind> (little-endian)
    + J·H·W 個 little-endian float32，row-major
第 i 筆記錄即 crop id i。
"""
import logging
import struct
import threading
from pathlib import Path
from typing import BinaryIO, Dict, Iterable, List, Tuple, Union

import numpy as np

from src.config.constants import FileFormats, HeatmapKind
from src.data_access.base import BaseRepository
from src.models.geometry import Heatmap
from src.utils.exceptions import FileFormatError, RecordNotFoundError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
_HEADER = struct.Struct(FileFormats.HMAP_HEADER)


def _read_header(fh: BinaryIO, position: int) -> Tuple[int, int, int, HeatmapKind]:
    raw = fh.read(_HEADER.size)
    if len(raw) != _HEADER.size:
        raise FileFormatError(f"HMAP 記錄標頭不完整 (offset {position})")
    magic, j, h, w, kind = _HEADER.unpack(raw)
    if magic != FileFormats.HMAP_MAGIC:
        raise FileFormatError(f"HMAP magic 錯誤 (offset {position}): {magic!r}")
    try:
        return j, h, w, HeatmapKind(kind)
    except ValueError as e:
        raise FileFormatError(f"未知的熱圖種類 {kind} (offset {position})") from e


class HeatmapRepository(BaseRepository[Heatmap]):
    """以 crop id 查詢 HMAP 檔內的熱圖

    建構時掃描一次標頭建立索引，查詢時才讀取數值。
    """

    def __init__(self, path: PathLike):
        self.path = Path(path)
        self._index: Dict[int, Tuple[int, int, int, int, HeatmapKind]] = {}
        self._lock = threading.Lock()
        self._scan()

    def _scan(self) -> None:
        try:
            size = self.path.stat().st_size
            with open(self.path, "rb") as fh:
                position = 0
                crop_id = 0
                while position < size:
                    j, h, w, kind = _read_header(fh, position)
                    data_offset = position + _HEADER.size
                    self._index[crop_id] = (data_offset, j, h, w, kind)
                    position = data_offset + 4 * j * h * w
                    if position > size:
                        raise FileFormatError(f"HMAP 記錄 {crop_id} 資料被截斷")
                    fh.seek(position)
                    crop_id += 1
        except OSError as e:
            raise FileFormatError(f"無法讀取熱圖檔 {self.path}: {e}") from e
        logger.info("熱圖檔 %s: %d 筆記錄", self.path, len(self._index))

    def ids(self) -> List[int]:
        return sorted(self._index)

    def shape(self, record_id: int) -> Tuple[int, int, int]:
        """(J, H, W)，不讀取數值

        Raises:
            RecordNotFoundError: crop id 不存在
        """
        try:
            _, j, h, w, _ = self._index[record_id]
        except KeyError:
            raise RecordNotFoundError(f"熱圖檔沒有 crop {record_id}") from None
        return j, h, w

    def get_by_id(self, record_id: int) -> Heatmap:
        try:
            offset, j, h, w, kind = self._index[record_id]
        except KeyError:
            raise RecordNotFoundError(f"熱圖檔沒有 crop {record_id}") from None
        with self._lock, open(self.path, "rb") as fh:
            fh.seek(offset)
            values = np.frombuffer(fh.read(4 * j * h * w), dtype="<f4")
        return Heatmap(values.astype(float).reshape(j, h, w), kind)

    def __contains__(self, record_id: int) -> bool:
        return record_id in self._index


def file_pose_backend(repository: HeatmapRepository, crop_id: int) -> Heatmap:
    """重播預先計算的熱圖

    Raises:
        RecordNotFoundError: crop id 不存在
    """
    return repository.get_by_id(crop_id)


def write_heatmaps(path: PathLike, heatmaps: Iterable[Heatmap]) -> int:
    """依序寫入熱圖記錄，回傳寫入筆數"""
    count = 0
    with open(path, "wb") as fh:
        for heatmap in heatmaps:
            fh.write(_HEADER.pack(
                FileFormats.HMAP_MAGIC, heatmap.joints, heatmap.height, heatmap.width, heatmap.kind.value
            ))
            fh.write(np.ascontiguousarray(heatmap.values, dtype="<f4").tobytes())
            count += 1
    return count
