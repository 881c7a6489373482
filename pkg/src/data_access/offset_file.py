"""PGPG 偏移樣本與模型檔存取

偏移樣本 JSONL：每行 {part, gt: [4], det: [4]}，以 pandas 讀取。
模型 JSON：{part: {components, x_model, y_model, uniform_box}}。
"""
import json
import logging
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Tuple, Union

import pandas as pd

from src.models.geometry import DetectionBox
from src.models.proposal import OffsetModel
from src.utils.exceptions import FileFormatError, RecordNotFoundError, ValidationError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
BoxPair = Tuple[str, DetectionBox, DetectionBox]


def read_box_pairs(path: PathLike) -> List[BoxPair]:
    """讀取 (part, gt, det) 列

    Raises:
        FileFormatError: 檔案無法解析或缺少欄位
    """
    try:
        frame = pd.read_json(path, lines=True)
    except (OSError, ValueError) as e:
        raise FileFormatError(f"無法讀取偏移檔 {path}: {e}") from e
    if frame.empty:
        return []
    missing = {"part", "gt", "det"} - set(frame.columns)
    if missing:
        raise FileFormatError(f"{path} 缺少欄位: {sorted(missing)}")
    pairs = []
    try:
        for row in frame.itertuples(index=False):
            pairs.append((str(row.part), DetectionBox(*map(float, row.gt)), DetectionBox(*map(float, row.det))))
    except (TypeError, ValueError, ValidationError) as e:
        raise FileFormatError(f"{path} 含有不合法的框: {e}") from e
    return pairs


def write_box_pairs(path: PathLike, pairs: Iterable[BoxPair]) -> None:
    rows = [
        {"part": part, "gt": gt.as_array().tolist(), "det": det.as_array().tolist()}
        for part, gt, det in pairs
    ]
    pd.DataFrame(rows, columns=["part", "gt", "det"]).to_json(path, orient="records", lines=True)


def write_models(path: PathLike, models: Mapping[str, OffsetModel]) -> None:
    data = {part: model.to_dict() for part, model in models.items()}
    Path(path).write_text(json.dumps(data, sort_keys=True, indent=2), encoding="utf-8")


def read_models(path: PathLike) -> Dict[str, OffsetModel]:
    """Raises:
        FileFormatError: 檔案無法解析
    """
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return {part: OffsetModel.from_dict(part, block) for part, block in data.items()}
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError, ValidationError) as e:
        raise FileFormatError(f"無法讀取模型檔 {path}: {e}") from e


def read_model(path: PathLike, part: str) -> OffsetModel:
    """Raises:
        RecordNotFoundError: 模型檔沒有該部位
    """
    models = read_models(path)
    try:
        return models[part]
    except KeyError:
        raise RecordNotFoundError(f"模型檔 {path} 沒有部位 {part}") from None
