"""暴力法參考實作

以純 Python 迴圈逐元素實作各項規則，只供測試比對主要模組使用。
"""
import math
from typing import Callable, Dict, List, Optional, Sequence, Set, Tuple

import numpy as np

from src.config.constants import NmsDefaults, TrackingDefaults
from src.config.settings import NmsParams
from src.models.geometry import Pose, crop_box_around

Link = Tuple[int, int]


def _sigmoid(v: float) -> float:
    if v >= 0:
        return 1.0 / (1.0 + math.exp(-v))
    e = math.exp(v)
    return e / (1.0 + e)


def scalar_two_step(z: np.ndarray, clip: float = 30.0) -> Tuple[np.ndarray, np.ndarray]:
    """單一關節 H × W logits 的兩步正規化"""
    h, w = z.shape
    conf = np.zeros((h, w))
    for i in range(h):
        for j in range(w):
            conf[i, j] = _sigmoid(min(max(float(z[i, j]), -clip), clip))
    total = sum(conf[i, j] for i in range(h) for j in range(w))
    return conf, conf / total


def scalar_expectation(prob: np.ndarray) -> Tuple[float, float]:
    h, w = prob.shape
    x = sum(prob[i, j] * j for i in range(h) for j in range(w))
    y = sum(prob[i, j] * i for i in range(h) for j in range(w))
    return float(x), float(y)


def scalar_pose_distance(a: Pose, b: Pose, params: NmsParams) -> float:
    """d(a, b) 逐關節計算，視窗以 crop_box_around 建立"""
    k = 0.0
    h = 0.0
    for j in range(a.joint_count):
        ka = a.keypoint(j)
        kb = b.keypoint(j)
        window = crop_box_around(ka, a.box, NmsDefaults.WINDOW_FRACTION)
        if window.contains(kb.x, kb.y):
            k += math.tanh(ka.confidence / params.sigma1) * math.tanh(kb.confidence / params.sigma1)
        h += math.exp(-((ka.x - kb.x) ** 2 + (ka.y - kb.y) ** 2) / params.sigma2)
    return k + params.lambda_ * h


def brute_force_nms(poses: Sequence[Pose], params: NmsParams) -> List[int]:
    """逐一比較的貪婪淘汰，回傳保留姿態的原始索引"""
    remaining = list(range(len(poses)))
    kept = []
    while remaining:
        ref = remaining[0]
        for i in remaining:
            if poses[i].score > poses[ref].score:
                ref = i
        kept.append(ref)
        survivors = []
        for i in remaining:
            if i == ref:
                continue
            if scalar_pose_distance(poses[i], poses[ref], params) < params.eta:
                survivors.append(i)
        remaining = survivors
    return kept


def row_min_rule(
    matrix: np.ndarray,
    rows: Sequence[int],
    cols: Sequence[int],
    threshold: float,
    margin: Optional[float] = None,
) -> Set[Link]:
    """每列選最小欄 (平手取欄位小者)，值 <= threshold 才提名；
    每欄在提名者中選值最小者 (平手取列小者)

    margin 不為 None 時，列最小值與該列其他值的差、以及同欄提名者最小兩值的差
    都必須大於 margin，否則不連結。
    """
    nominations: Dict[int, List[Tuple[float, int]]] = {}
    for p in rows:
        best_q: Optional[int] = None
        for q in cols:
            if best_q is None or matrix[p][q] < matrix[p][best_q]:
                best_q = q
        if best_q is None or not matrix[p][best_q] <= threshold:
            continue
        if margin is not None:
            others = [matrix[p][q] for q in cols if q != best_q]
            if others and not min(others) - matrix[p][best_q] > margin:
                continue
        nominations.setdefault(best_q, []).append((float(matrix[p][best_q]), p))
    links = set()
    for q, noms in nominations.items():
        noms = sorted(noms)
        if margin is not None and len(noms) > 1 and not noms[1][0] - noms[0][0] > margin:
            continue
        links.add((noms[0][1], q))
    return links


def brute_force_cascade(
    m_emb: Optional[np.ndarray],
    m_f: np.ndarray,
    mu_emb: float,
    mu_f: float,
    relaxed_mu_f: float,
    emb_margin: float = TrackingDefaults.EMB_MARGIN,
) -> Tuple[Set[Link], Set[int]]:
    """三階段規則：回傳 (links, 需要新 id 的偵測)"""
    n_det, n_trk = m_f.shape
    links: Set[Link] = set()
    if m_emb is not None:
        links |= row_min_rule(m_emb, list(range(n_det)), list(range(n_trk)), mu_emb, emb_margin)
    for threshold in (mu_f, relaxed_mu_f):
        rows = [p for p in range(n_det) if all(p != lp for lp, _ in links)]
        cols = [q for q in range(n_trk) if all(q != lq for _, lq in links)]
        links |= row_min_rule(m_f, rows, cols, threshold)
    linked = {p for p, _ in links}
    return links, {p for p in range(n_det) if p not in linked}


def scalar_pga_fuse(m_id: np.ndarray, m_a: np.ndarray) -> np.ndarray:
    out = np.zeros_like(m_id, dtype=float)
    for idx in np.ndindex(m_id.shape):
        a_idx = idx if m_a.shape[0] == m_id.shape[0] else (0,) + idx[1:]
        out[idx] = m_id[idx] * m_a[a_idx] + m_id[idx]
    return out


def central_difference(f: Callable[[np.ndarray], float], z: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """對每個元素做中央差分"""
    z = np.array(z, dtype=float)
    grad = np.zeros_like(z)
    for idx in np.ndindex(z.shape):
        orig = z[idx]
        z[idx] = orig + eps
        up = f(z)
        z[idx] = orig - eps
        down = f(z)
        z[idx] = orig
        grad[idx] = (up - down) / (2.0 * eps)
    return grad
