"""共用測試 fixture"""
import numpy as np
import pytest

from src.models.geometry import DetectionBox, Pose
from src.models.layout import halpe26, halpe136
from src.synth.generators import gen_trajectories, template_pose
from src.synth.scene import write_scene


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def body_layout():
    return halpe26()


@pytest.fixture
def wholebody_layout():
    return halpe136()


@pytest.fixture
def make_pose(body_layout):
    """在 (x, y) 放一個 60 × 120 的範本姿態"""

    def make(x: float = 0.0, y: float = 0.0, score: float = 1.0, layout=None) -> Pose:
        layout = layout or body_layout
        box = DetectionBox(x, y, x + 60.0, y + 120.0, score=score)
        return template_pose(layout, box, score=score)

    return make


@pytest.fixture
def scene_paths(tmp_path, body_layout):
    """兩人、12 frame、含低分干擾偵測與特徵圖的合成場景"""
    rng = np.random.default_rng(7)
    scene = gen_trajectories(body_layout, 2, 12, False, [], emb_noise=0.0, rng=rng, with_embeddings=False)
    return write_scene(
        tmp_path / "scene", scene, rng,
        heatmap_shape=(32, 24), distractors=True, feature_channels=2,
    )
