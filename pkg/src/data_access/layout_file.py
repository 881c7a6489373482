"""骨架配置檔存取

--layout 參數可以是內建名稱 (halpe136 / halpe26) 或 JSON 檔路徑：
    {name, joint_names, part_ranges: {part: [start, stop]}, oks_k, head_segment?}
"""
import json
from pathlib import Path
from typing import Union

from src.models.layout import BUILTIN_LAYOUTS, SkeletonLayout, builtin_layout
from src.utils.exceptions import FileFormatError, RecordNotFoundError

PathLike = Union[str, Path]


def read_layout(path: PathLike) -> SkeletonLayout:
    """Raises:
        FileFormatError: 非合法 JSON
        ValidationError: 配置內容不合法
    """
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise FileFormatError(f"無法讀取骨架配置檔 {path}: {e}") from e
    return SkeletonLayout.from_dict(data)


def write_layout(path: PathLike, layout: SkeletonLayout) -> None:
    Path(path).write_text(json.dumps(layout.to_dict(), sort_keys=True, indent=2), encoding="utf-8")


def resolve_layout(name_or_path: str) -> SkeletonLayout:
    """內建名稱優先，否則當作檔案路徑

    Raises:
        RecordNotFoundError: 既不是內建名稱也不是存在的檔案
    """
    if name_or_path in BUILTIN_LAYOUTS:
        return builtin_layout(name_or_path)
    if Path(name_or_path).is_file():
        return read_layout(name_or_path)
    raise RecordNotFoundError(f"找不到骨架配置: {name_or_path}")
