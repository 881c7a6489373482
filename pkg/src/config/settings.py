"""設定檔載入模組

此模組負責從 TOML 設定檔載入所有設定，
並提供型別安全的設定物件。缺少的區塊使用預設值。
"""
import json
import math
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np

from src.config.constants import (
    DecodeDefaults,
    NmsDefaults,
    PipelineDefaults,
    ProposalDefaults,
    TrackingDefaults,
)
from src.utils.exceptions import ConfigurationError, FileFormatError

PathLike = Union[str, Path]


@dataclass(frozen=True)
class AsgConfig:
    """ASG (振幅對稱梯度) 設定

    Attributes:
        a_grad: 梯度振幅；None 表示依熱圖寬度取 W / 8
    """
    a_grad: Optional[float] = None

    def __post_init__(self):
        if self.a_grad is not None and not self.a_grad > 0:
            raise ConfigurationError(f"a_grad 必須為正數: {self.a_grad}")

    def resolve(self, width: int) -> float:
        """取得實際振幅"""
        if self.a_grad is not None:
            return float(self.a_grad)
        return width / DecodeDefaults.ASG_AMPLITUDE_DIVISOR


@dataclass(frozen=True)
class NmsParams:
    """參數化 Pose NMS 的參數 Λ 與門檻 η

    Attributes:
        sigma1: 信心分數的柔和度
        sigma2: 空間距離的柔和度
        lambda_: 兩種相似度的權重 (JSON 鍵名為 "lambda")
        eta: 淘汰門檻
    """
    sigma1: float
    sigma2: float
    lambda_: float
    eta: float

    def __post_init__(self):
        if not (self.sigma1 > 0 and self.sigma2 > 0):
            raise ConfigurationError(f"sigma1 / sigma2 必須為正數: {self.sigma1}, {self.sigma2}")
        if not self.lambda_ >= 0:
            raise ConfigurationError(f"lambda 不可為負: {self.lambda_}")
        if not math.isfinite(self.eta):
            raise ConfigurationError(f"eta 必須為有限值: {self.eta}")

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "NmsParams":
        """從 JSON 區塊 {sigma1, sigma2, lambda, eta} 建立

        Raises:
            ConfigurationError: 缺少欄位
        """
        try:
            return cls(
                sigma1=float(data["sigma1"]),
                sigma2=float(data["sigma2"]),
                lambda_=float(data["lambda"]),
                eta=float(data["eta"]),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigurationError(f"無法解析 NMS 參數: {e}") from e

    def to_dict(self) -> Dict[str, float]:
        return {
            "sigma1": self.sigma1,
            "sigma2": self.sigma2,
            "lambda": self.lambda_,
            "eta": self.eta,
        }

    @classmethod
    def default(cls, joint_count: int) -> "NmsParams":
        """實驗用的起始參數 (η 取網格中間值)"""
        return cls(sigma1=0.3, sigma2=1.0, lambda_=1.0, eta=0.5 * joint_count)


@dataclass(frozen=True)
class NmsGrid:
    """optimize_params 的搜尋網格"""
    sigma1: Tuple[float, ...]
    sigma2: Tuple[float, ...]
    lambda_: Tuple[float, ...]
    eta: Tuple[float, ...]

    def __post_init__(self):
        for f in fields(self):
            if len(getattr(self, f.name)) == 0:
                raise ConfigurationError(f"網格 {f.name} 不可為空")

    @classmethod
    def default(cls, joint_count: int) -> "NmsGrid":
        """預設網格：σ 對數間距、λ 線性、η 與關節數成比例"""
        lo, hi = NmsDefaults.SIGMA_GRID_RANGE
        sigmas = tuple(float(v) for v in np.logspace(np.log10(lo), np.log10(hi), NmsDefaults.SIGMA_GRID_POINTS))
        lam_lo, lam_hi = NmsDefaults.LAMBDA_GRID_RANGE
        lambdas = tuple(float(v) for v in np.linspace(lam_lo, lam_hi, NmsDefaults.LAMBDA_GRID_POINTS))
        eta_lo, eta_hi = NmsDefaults.ETA_GRID_FRACTIONS
        etas = tuple(
            float(v) for v in np.linspace(eta_lo * joint_count, eta_hi * joint_count, NmsDefaults.ETA_GRID_POINTS)
        )
        return cls(sigma1=sigmas, sigma2=sigmas, lambda_=lambdas, eta=etas)


@dataclass(frozen=True)
class ProposalConfig:
    """PGPG 擬合與取樣設定"""
    components: int = ProposalDefaults.COMPONENTS
    max_iter: int = ProposalDefaults.EM_MAX_ITER
    tol: float = ProposalDefaults.EM_TOL
    covariance_floor: float = ProposalDefaults.COVARIANCE_FLOOR
    percentiles: Tuple[float, float] = ProposalDefaults.UNIFORM_PERCENTILES
    max_resample: int = ProposalDefaults.MAX_RESAMPLE
    seed: int = 0

    def __post_init__(self):
        if self.components < 1:
            raise ConfigurationError(f"components 必須 >= 1: {self.components}")
        if self.max_iter < 1 or self.tol <= 0 or self.covariance_floor <= 0:
            raise ConfigurationError("EM 參數不合法")
        lo, hi = self.percentiles
        if not 0 <= lo < hi <= 100:
            raise ConfigurationError(f"百分位範圍不合法: {self.percentiles}")


@dataclass(frozen=True)
class KalmanConfig:
    """卡爾曼濾波雜訊設定 (相對於 SORT 慣用值的倍率)

    process_noise = measurement_noise = 0 表示無雜訊的理想模型。
    """
    process_noise: float = 1.0
    measurement_noise: float = 1.0
    initial_position_var: float = 10.0
    initial_velocity_var: float = 1000.0

    def __post_init__(self):
        if self.process_noise < 0 or self.measurement_noise < 0:
            raise ConfigurationError("雜訊倍率不可為負")
        if self.initial_position_var <= 0 or self.initial_velocity_var <= 0:
            raise ConfigurationError("初始變異數必須為正")


@dataclass(frozen=True)
class MsimConfig:
    """多階段身分匹配 (MSIM) 設定

    Attributes:
        mu_emb: 第一階段 (embedding) 門檻
        mu_f: 第二階段 (IoU + 姿態形狀) 門檻
        lambda_np: 形狀距離的權重
        relax_factor: 重試階段門檻為 mu_f / relax_factor
        emb_margin: embedding 階段的明確度門檻；無法區分的偵測交給融合距離階段
        max_lost: 遺失多少 frame 後移除軌跡
        embedding_momentum: embedding 指數移動平均係數
        pose_params: 正規化姿態距離使用的 Λ (與 NMS 參數分開)
        kalman: 卡爾曼濾波雜訊設定
    """
    mu_emb: float = TrackingDefaults.MU_EMB
    mu_f: float = TrackingDefaults.MU_F
    lambda_np: float = TrackingDefaults.LAMBDA_NP
    relax_factor: float = TrackingDefaults.RELAX_FACTOR
    emb_margin: float = TrackingDefaults.EMB_MARGIN
    max_lost: int = TrackingDefaults.MAX_LOST
    embedding_momentum: float = TrackingDefaults.EMBEDDING_MOMENTUM
    pose_params: NmsParams = field(default_factory=lambda: NmsParams(
        sigma1=TrackingDefaults.POSE_SIGMA1,
        sigma2=TrackingDefaults.POSE_SIGMA2,
        lambda_=TrackingDefaults.POSE_LAMBDA,
        eta=0.0,
    ))
    kalman: KalmanConfig = field(default_factory=KalmanConfig)

    def __post_init__(self):
        if not (0 < self.mu_emb <= 1 and 0 < self.mu_f <= 1):
            raise ConfigurationError(f"門檻必須在 (0, 1]: {self.mu_emb}, {self.mu_f}")
        if not 0 < self.relax_factor < 1:
            raise ConfigurationError(f"relax_factor 必須在 (0, 1): {self.relax_factor}")
        if self.lambda_np < 0 or self.max_lost < 0 or self.emb_margin < 0:
            raise ConfigurationError("lambda_np、max_lost 與 emb_margin 不可為負")
        if not 0 <= self.embedding_momentum < 1:
            raise ConfigurationError(f"embedding_momentum 必須在 [0, 1): {self.embedding_momentum}")

    @property
    def relaxed_mu_f(self) -> float:
        return self.mu_f / self.relax_factor


@dataclass(frozen=True)
class PipelineConfig:
    """管線設定"""
    queue_capacity: int = PipelineDefaults.QUEUE_CAPACITY
    sequential: bool = False
    score_floor: float = NmsDefaults.DETECTION_SCORE_FLOOR
    track: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.queue_capacity < 1:
            raise ConfigurationError(f"queue_capacity 必須 >= 1: {self.queue_capacity}")
        if not 0 <= self.score_floor <= 1:
            raise ConfigurationError(f"score_floor 必須在 [0, 1]: {self.score_floor}")


@dataclass(frozen=True)
class AppSettings:
    """整體設定"""
    decode: AsgConfig = field(default_factory=AsgConfig)
    nms: Optional[NmsParams] = None
    proposal: ProposalConfig = field(default_factory=ProposalConfig)
    tracking: MsimConfig = field(default_factory=MsimConfig)
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)


class Settings:
    """應用程式設定管理器"""

    @staticmethod
    def load(path: Optional[PathLike] = None) -> AppSettings:
        """載入設定檔

        Args:
            path: TOML 設定檔路徑；None 時回傳全部預設值

        Returns:
            AppSettings 物件

        Raises:
            ConfigurationError: 數值不合法
            FileFormatError: 檔案無法解析
        """
        if path is None:
            return AppSettings()
        try:
            with open(path, "rb") as fh:
                raw = tomllib.load(fh)
        except (OSError, tomllib.TOMLDecodeError) as e:
            raise FileFormatError(f"無法讀取設定檔 {path}: {e}") from e

        tracking_raw = dict(raw.get("tracking", {}))
        pose_params = tracking_raw.pop("pose_params", None)
        proposal_raw = dict(raw.get("proposal", {}))
        if "percentiles" in proposal_raw:
            proposal_raw["percentiles"] = tuple(proposal_raw["percentiles"])

        try:
            tracking = MsimConfig(**tracking_raw, kalman=KalmanConfig(**raw.get("kalman", {})))
            if pose_params is not None:
                tracking = replace(tracking, pose_params=NmsParams.from_dict(pose_params))
            return AppSettings(
                decode=AsgConfig(**raw.get("decode", {})),
                nms=NmsParams.from_dict(raw["nms"]) if "nms" in raw else None,
                proposal=ProposalConfig(**proposal_raw),
                tracking=tracking,
                pipeline=PipelineConfig(**raw.get("pipeline", {})),
            )
        except TypeError as e:
            raise ConfigurationError(f"設定檔含有未知欄位: {e}") from e

    @staticmethod
    def load_nms_params(path: PathLike) -> NmsParams:
        """載入 NMS 參數 JSON

        Raises:
            FileFormatError: 非合法 JSON
        """
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise FileFormatError(f"無法讀取 NMS 參數檔 {path}: {e}") from e
        return NmsParams.from_dict(data)

    @staticmethod
    def save_nms_params(params: NmsParams, path: PathLike) -> None:
        Path(path).write_text(json.dumps(params.to_dict(), sort_keys=True, indent=2), encoding="utf-8")
