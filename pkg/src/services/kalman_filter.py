"""偵測框卡爾曼濾波

狀態為 (cx, cy, a, r) 與其速度，a 為面積、r 為寬高比，等速模型。
創新共變異數以虛反矩陣求逆，零雜訊設定也能運作。
"""
import numpy as np
from filterpy.kalman import KalmanFilter

from src.config.settings import KalmanConfig
from src.models.geometry import DetectionBox

_MIN_EXTENT = 1e-6


def box_to_measurement(box: DetectionBox) -> np.ndarray:
    """[x0, y0, x1, y1] -> [cx, cy, a, r]ᵀ"""
    w, h = box.width, box.height
    cx, cy = box.center
    return np.array([[cx], [cy], [w * h], [w / h]])


def state_to_box(state: np.ndarray, score: float = 1.0) -> DetectionBox:
    cx, cy, a, r = (float(v) for v in np.ravel(state)[:4])
    a = max(a, _MIN_EXTENT)
    r = max(r, _MIN_EXTENT)
    w = np.sqrt(a * r)
    h = a / w
    return DetectionBox(cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2, score=score)


class KalmanBoxFilter:
    """單一軌跡的卡爾曼濾波器"""

    def __init__(self, box: DetectionBox, cfg: KalmanConfig = KalmanConfig()):
        kf = KalmanFilter(dim_x=8, dim_z=4)
        kf.F = np.eye(8)
        kf.F[:4, 4:] = np.eye(4)
        kf.H = np.zeros((4, 8))
        kf.H[:4, :4] = np.eye(4)

        kf.R = np.diag([1.0, 1.0, 10.0, 10.0]) * cfg.measurement_noise
        kf.P = np.diag([cfg.initial_position_var] * 4 + [cfg.initial_velocity_var] * 4)
        kf.Q = np.diag([1.0, 1.0, 1.0, 1.0, 0.01, 0.01, 0.01, 1e-4]) * cfg.process_noise
        kf.inv = np.linalg.pinv
        kf.x[:4] = box_to_measurement(box)
        self.kf = kf
        self.score = box.score

    def predict(self) -> DetectionBox:
        # 面積不可預測為負
        if self.kf.x[2, 0] + self.kf.x[6, 0] <= 0:
            self.kf.x[6, 0] = 0.0
        self.kf.predict()
        return self.box()

    def update(self, box: DetectionBox) -> None:
        self.kf.update(box_to_measurement(box))
        self.score = box.score

    def box(self) -> DetectionBox:
        return state_to_box(self.kf.x, self.score)

    @property
    def covariance(self) -> np.ndarray:
        return self.kf.P
