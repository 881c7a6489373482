"""子命令基礎類別

每個子命令一個類別：add_arguments 宣告參數，建構子接收解析後的參數與設定，
execute 執行並回傳結束碼。
"""
import argparse
from abc import ABC, abstractmethod
from typing import Sequence

import numpy as np

from src.config.settings import AppSettings
from src.data_access.layout_file import resolve_layout
from src.models.geometry import DetectionBox
from src.models.layout import SkeletonLayout
from src.utils.exceptions import ValidationError


class Command(ABC):
    """子命令

    Attributes:
        name: 子命令名稱
        help: 說明文字
    """
    name: str = ""
    help: str = ""

    def __init__(self, args: argparse.Namespace, settings: AppSettings):
        """初始化

        Args:
            args: 解析後的命令列參數
            settings: 設定檔內容 (命令列參數優先)
        """
        self.args = args
        self.settings = settings

    @classmethod
    @abstractmethod
    def add_arguments(cls, parser: argparse.ArgumentParser) -> None:
        pass

    @abstractmethod
    def execute(self) -> int:
        pass

    def layout(self) -> SkeletonLayout:
        return resolve_layout(self.args.layout)


def parse_box(text: str) -> DetectionBox:
    """"x0,y0,x1,y1" -> DetectionBox

    Raises:
        ValidationError: 格式錯誤
    """
    try:
        values: Sequence[float] = [float(v) for v in text.split(",")]
    except ValueError as e:
        raise ValidationError(f"無法解析框 '{text}': {e}") from e
    if len(values) != 4:
        raise ValidationError(f"框必須是 x0,y0,x1,y1: '{text}'")
    return DetectionBox(*values)


def rng_from(seed: int) -> np.random.Generator:
    return np.random.default_rng(seed)
