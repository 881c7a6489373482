"""re-ID 特徵圖 NPZ 檔存取

每個 crop 一個陣列 crop_<id>，形狀 C × H × W。
"""
import logging
from pathlib import Path
from typing import Dict, List, Mapping, Union

import numpy as np

from src.data_access.base import BaseRepository
from src.models.features import FeatureMap
from src.utils.exceptions import FileFormatError, RecordNotFoundError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
_PREFIX = "crop_"


class FeatureRepository(BaseRepository[FeatureMap]):
    """以 crop id 查詢特徵圖；整個檔案在建構時載入"""

    def __init__(self, path: PathLike):
        self.path = Path(path)
        try:
            with np.load(self.path) as archive:
                self._maps: Dict[int, np.ndarray] = {
                    int(key[len(_PREFIX):]): archive[key]
                    for key in archive.files
                    if key.startswith(_PREFIX)
                }
        except (OSError, ValueError) as e:
            raise FileFormatError(f"無法讀取特徵檔 {self.path}: {e}") from e
        logger.info("特徵檔 %s: %d 個 crop", self.path, len(self._maps))

    def ids(self) -> List[int]:
        return sorted(self._maps)

    def get_by_id(self, record_id: int) -> FeatureMap:
        try:
            return FeatureMap(self._maps[record_id])
        except KeyError:
            raise RecordNotFoundError(f"特徵檔沒有 crop {record_id}") from None

    def __contains__(self, record_id: int) -> bool:
        return record_id in self._maps


def write_features(path: PathLike, features: Mapping[int, FeatureMap]) -> None:
    np.savez(path, **{f"{_PREFIX}{crop_id}": fm.values for crop_id, fm in features.items()})
