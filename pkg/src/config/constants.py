"""常數定義模組

此模組定義系統中所有的常數，包括：
- 列舉型別 (Enum)
- 各模組的預設參數
- 檔案格式常數

座標慣例：網格索引 i 代表連續座標 i 的像素中心 (不是 i + 0.5)，
所有模組共用此慣例。
"""
from enum import Enum
from typing import Final


class HeatmapKind(Enum):
    """熱圖種類列舉"""
    LOGITS = 0
    CONFIDENCE = 1
    PROBABILITY = 2


class GradientForm(Enum):
    """積分回歸梯度的形式"""
    PROB = "prob"        # 對機率圖的梯度 x·sgn(μ̂ − μ)
    LOGITS = "logits"    # 經正規化傳回 logits 的梯度


class Axis(Enum):
    """座標軸"""
    X = 0
    Y = 1


class OffsetMode(Enum):
    """PGPG 取樣模式"""
    GMM = "gmm"
    UNIFORM = "uniform"


class TrackStatus(Enum):
    """軌跡狀態列舉"""
    ACTIVE = "active"
    LOST = "lost"
    REMOVED = "removed"


class StageName(Enum):
    """管線五個階段，依標準順序排列"""
    LOAD = "load"
    DETECT = "detect"
    TRANSFORM = "transform"
    POSE = "pose"
    POST = "post"


class OutputFormat(Enum):
    """結果輸出格式"""
    COCO = "coco"
    OPENPOSE = "openpose"


PART_NAMES: Final = ("body", "foot", "face", "left_hand", "right_hand")

# COCO 公開的 17 個身體關節常數 (sigma / 10 後即為 k)
COCO_BODY_K: Final = (
    0.026, 0.025, 0.025, 0.035, 0.035, 0.079, 0.079, 0.072, 0.072,
    0.062, 0.062, 0.107, 0.107, 0.087, 0.087, 0.089, 0.089,
)


class DecodeDefaults:
    """解碼相關常數"""

    LOGIT_CLIP: Final = 30.0
    # A_grad = W / 8
    ASG_AMPLITUDE_DIVISOR: Final = 8.0
    LIPSCHITZ_MIN_TRIALS: Final = 100
    LIPSCHITZ_PERTURBATION: Final = 1e-3
    LIPSCHITZ_POWER_ITERS: Final = 30


class NmsDefaults:
    """Pose NMS 相關常數"""

    WINDOW_FRACTION: Final = 0.1
    DETECTION_SCORE_FLOOR: Final = 0.1
    SIGMA_GRID_RANGE: Final = (0.01, 10.0)
    SIGMA_GRID_POINTS: Final = 10
    LAMBDA_GRID_RANGE: Final = (0.0, 5.0)
    LAMBDA_GRID_POINTS: Final = 11
    ETA_GRID_FRACTIONS: Final = (0.1, 2.0)
    ETA_GRID_POINTS: Final = 20
    OKS_NMS_THRESHOLD: Final = 0.9


class ProposalDefaults:
    """PGPG 相關常數"""

    COMPONENTS: Final = 3
    MIN_SAMPLES_PER_COMPONENT: Final = 10
    EM_MAX_ITER: Final = 200
    EM_TOL: Final = 1e-6
    COVARIANCE_FLOOR: Final = 1e-6
    UNIFORM_PERCENTILES: Final = (5.0, 95.0)
    MAX_RESAMPLE: Final = 100
    BIC_COMPONENTS: Final = (1, 2, 3, 4, 5)


class TrackingDefaults:
    """MSIM 追蹤相關常數"""

    EMBEDDING_DIM: Final = 128
    MU_EMB: Final = 0.7
    MU_F: Final = 0.5
    # embedding 階段：最小值須比次小值小超過此值才連結
    EMB_MARGIN: Final = 0.05
    LAMBDA_NP: Final = 1.0
    # 放寬後門檻 = mu_f / relax_factor = 1.5 · mu_f
    RELAX_FACTOR: Final = 2.0 / 3.0
    MAX_LOST: Final = 30
    EMBEDDING_MOMENTUM: Final = 0.9
    POSE_SIGMA1: Final = 1.0
    POSE_SIGMA2: Final = 0.01
    POSE_LAMBDA: Final = 1.0


class EvalDefaults:
    """評估相關常數"""

    OKS_THRESHOLDS: Final = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))
    RECALL_POINTS: Final = 101
    MAX_DETECTIONS: Final = 20
    MEDIUM_AREA: Final = (32.0 ** 2, 96.0 ** 2)
    LARGE_AREA: Final = (96.0 ** 2, 1e10)
    PCKH_THRESHOLD: Final = 0.5
    ADDED_JOINT_K: Final = 0.015


class PipelineDefaults:
    """管線相關常數"""

    QUEUE_CAPACITY: Final = 64
    POLL_SECONDS: Final = 0.05
    HEATMAP_SHAPE: Final = (64, 48)


class FileFormats:
    """檔案格式常數"""

    HMAP_MAGIC: Final = b"HMAP"
    HMAP_HEADER: Final = "<4sIIIB"
    JSON_FLOAT_DIGITS: Final = 6
    OPENPOSE_VERSION: Final = 1.3
