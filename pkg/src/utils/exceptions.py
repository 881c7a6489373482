"""自訂例外類別模組

此模組定義系統中所有的自訂例外，
提供更精確的錯誤處理機制。
"""
from typing import Optional


class PosePipeError(Exception):
    """應用程式基礎例外"""
    pass


class ValidationError(PosePipeError):
    """驗證錯誤

    當輸入資料驗證失敗時拋出
    """
    pass


class ConfigurationError(ValidationError):
    """設定錯誤

    當設定區塊的數值不合法時拋出
    """
    pass


class DimensionMismatchError(ValidationError):
    """維度不符

    熱圖、特徵圖或骨架配置的形狀不一致時拋出
    """
    pass


class EmptyHeatmapError(ValidationError):
    """熱圖為空 (empty heatmap)

    某個關節的 logits 全部為 -inf，無法正規化
    """
    pass


class ZeroNormEmbeddingError(ValidationError):
    """零範數嵌入 (zero-norm embedding)"""
    pass


class InsufficientDataError(PosePipeError):
    """資料量不足

    擬合或最佳化所需的樣本數不足時拋出
    """
    pass


class DegenerateProposalError(PosePipeError):
    """連續取樣皆得到退化的提案框"""
    pass


class RecordNotFoundError(PosePipeError):
    """找不到記錄

    當查詢的 frame / crop 不存在時拋出
    """
    pass


class MissingAnnotationError(PosePipeError):
    """缺少標註

    PCKh 需要的頭部線段或 OKS 需要的標註關節不存在時拋出
    """
    pass


class DuplicateRecordError(PosePipeError):
    """重複的記錄 (例如重複的 image id)"""
    pass


class FileFormatError(PosePipeError):
    """檔案格式錯誤"""
    pass


class PipelineStageError(PosePipeError):
    """管線階段失敗

    保留失敗的階段名稱與 frame index，原始例外以 __cause__ 串接。
    """

    def __init__(self, stage: str, frame_index: Optional[int], message: str):
        self.stage = stage
        self.frame_index = frame_index
        super().__init__(f"階段 {stage} 於 frame {frame_index} 失敗: {message}")
