"""骨架配置模型

此模組定義 SkeletonLayout 以及內建的 halpe136 / halpe26 配置。
"""
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Dict, Mapping, Optional, Tuple

import numpy as np

from src.config.constants import COCO_BODY_K, EvalDefaults, PART_NAMES
from src.utils.exceptions import RecordNotFoundError, ValidationError

COCO_BODY_NAMES = (
    "nose", "left_eye", "right_eye", "left_ear", "right_ear",
    "left_shoulder", "right_shoulder", "left_elbow", "right_elbow",
    "left_wrist", "right_wrist", "left_hip", "right_hip",
    "left_knee", "right_knee", "left_ankle", "right_ankle",
)
HALPE_BODY_EXTRA = ("head", "neck", "hip")
HALPE_FOOT_NAMES = (
    "left_big_toe", "right_big_toe", "left_small_toe",
    "right_small_toe", "left_heel", "right_heel",
)


@dataclass(frozen=True, eq=False)
class SkeletonLayout:
    """骨架配置

    Attributes:
        name: 配置名稱
        joint_names: 關節名稱 (長度即關節數)
        part_ranges: 部位名稱 -> [start, stop) 連續索引範圍
        oks_k: 每個關節的 OKS 常數 k
        head_segment: PCKh 使用的 (head, neck) 關節索引
    """
    name: str
    joint_names: Tuple[str, ...]
    part_ranges: Mapping[str, Tuple[int, int]]
    oks_k: Tuple[float, ...]
    head_segment: Optional[Tuple[int, int]] = None
    _k: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        m = len(self.joint_names)
        if m == 0:
            raise ValidationError("骨架配置至少需要一個關節")
        if len(self.oks_k) != m:
            raise ValidationError(f"oks_k 長度 {len(self.oks_k)} 與關節數 {m} 不符")
        if any(not k > 0 for k in self.oks_k):
            raise ValidationError("oks_k 必須全部為正數")

        covered = np.zeros(m, dtype=int)
        for part, (start, stop) in self.part_ranges.items():
            if part not in PART_NAMES:
                raise ValidationError(f"未知的部位名稱: {part}")
            if not 0 <= start < stop <= m:
                raise ValidationError(f"部位 {part} 範圍不合法: [{start}, {stop})")
            covered[start:stop] += 1
        if not np.all(covered == 1):
            raise ValidationError("part_ranges 必須互斥且恰好涵蓋所有關節")

        if self.head_segment is not None:
            head, neck = self.head_segment
            if not (0 <= head < m and 0 <= neck < m and head != neck):
                raise ValidationError(f"head_segment 不合法: {self.head_segment}")

        k = np.asarray(self.oks_k, dtype=float)
        k.setflags(write=False)
        object.__setattr__(self, "_k", k)

    @property
    def joint_count(self) -> int:
        return len(self.joint_names)

    @property
    def k(self) -> np.ndarray:
        """OKS 常數 (唯讀陣列)"""
        return self._k

    def part_indices(self, part: str) -> np.ndarray:
        """取得部位的關節索引

        "hand" 代表左右手的聯集。

        Raises:
            RecordNotFoundError: 此配置沒有該部位
        """
        if part == "hand":
            parts = [p for p in ("left_hand", "right_hand") if p in self.part_ranges]
        else:
            parts = [part] if part in self.part_ranges else []
        if not parts:
            raise RecordNotFoundError(f"配置 {self.name} 沒有部位 {part}")
        return np.concatenate([np.arange(*self.part_ranges[p]) for p in parts])

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {
            "name": self.name,
            "joint_names": list(self.joint_names),
            "part_ranges": {p: [int(a), int(b)] for p, (a, b) in self.part_ranges.items()},
            "oks_k": [float(v) for v in self.oks_k],
        }
        if self.head_segment is not None:
            data["head_segment"] = list(self.head_segment)
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SkeletonLayout":
        """從 JSON 描述建立

        Raises:
            ValidationError: 欄位缺失或不合法
        """
        try:
            head = data.get("head_segment")
            return cls(
                name=str(data["name"]),
                joint_names=tuple(str(n) for n in data["joint_names"]),
                part_ranges={p: (int(r[0]), int(r[1])) for p, r in data["part_ranges"].items()},
                oks_k=tuple(float(v) for v in data["oks_k"]),
                head_segment=(int(head[0]), int(head[1])) if head is not None else None,
            )
        except (KeyError, TypeError, IndexError) as e:
            raise ValidationError(f"無法解析骨架配置: {e}") from e

    def __repr__(self) -> str:
        return f"SkeletonLayout(name='{self.name}', joints={self.joint_count})"


def _halpe_body_foot_k() -> Tuple[float, ...]:
    # COCO 的 17 個常數 + 其餘新增關節一律 0.015
    extra = len(HALPE_BODY_EXTRA) + len(HALPE_FOOT_NAMES)
    return tuple(COCO_BODY_K) + (EvalDefaults.ADDED_JOINT_K,) * extra


@lru_cache(maxsize=None)
def halpe136() -> SkeletonLayout:
    """Halpe 全身 136 關節配置：20 身體、6 腳、68 臉、42 手"""
    names = (
        COCO_BODY_NAMES + HALPE_BODY_EXTRA + HALPE_FOOT_NAMES
        + tuple(f"face_{i}" for i in range(68))
        + tuple(f"left_hand_{i}" for i in range(21))
        + tuple(f"right_hand_{i}" for i in range(21))
    )
    k = _halpe_body_foot_k() + (EvalDefaults.ADDED_JOINT_K,) * (68 + 42)
    return SkeletonLayout(
        name="halpe136",
        joint_names=names,
        part_ranges={
            "body": (0, 20),
            "foot": (20, 26),
            "face": (26, 94),
            "left_hand": (94, 115),
            "right_hand": (115, 136),
        },
        oks_k=k,
        head_segment=(17, 18),
    )


@lru_cache(maxsize=None)
def halpe26() -> SkeletonLayout:
    """Halpe 身體 + 腳 26 關節配置"""
    return SkeletonLayout(
        name="halpe26",
        joint_names=COCO_BODY_NAMES + HALPE_BODY_EXTRA + HALPE_FOOT_NAMES,
        part_ranges={"body": (0, 20), "foot": (20, 26)},
        oks_k=_halpe_body_foot_k(),
        head_segment=(17, 18),
    )


BUILTIN_LAYOUTS = {
    "halpe136": halpe136,
    "halpe26": halpe26,
}


def builtin_layout(name: str) -> SkeletonLayout:
    """依名稱取得內建配置

    Raises:
        RecordNotFoundError: 名稱不存在
    """
    try:
        return BUILTIN_LAYOUTS[name]()
    except KeyError:
        raise RecordNotFoundError(f"沒有內建骨架配置: {name}") from None
