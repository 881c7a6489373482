"""評估服務

此模組處理：
- OKS (每個關節各自的常數 k)
- COCO 式 mAP (OKS 門檻 0.50:0.95:0.05、101 點內插、部位細分)
- 以 PCKh 匹配關節的逐關節 MOTA / MOTP
"""
import logging
from collections import defaultdict
from dataclasses import dataclass
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from src.config.constants import EvalDefaults
from src.models.geometry import Pose, check_same_layout
from src.models.track import TrackRecord
from src.utils.exceptions import DuplicateRecordError, MissingAnnotationError, ValidationError

logger = logging.getLogger(__name__)

PoseSet = Union[Mapping[int, Sequence[Pose]], Iterable[Tuple[int, Sequence[Pose]]]]
ALL_AREA = (0.0, 1e10)


def pose_area(pose: Pose) -> float:
    """實例面積：提案框面積，沒有框時取已標註關節的外接框"""
    box = pose.box if pose.box is not None else pose.enclosing_box()
    return box.area


def oks(pred: Pose, gt: Pose, gt_area: float, joints: Optional[np.ndarray] = None) -> float:
    """Object Keypoint Similarity

    mean_{已標註 i} exp(−d_i² / (2 · s² · k_i²))，s² = gt_area。

    Args:
        pred: 預測姿態
        gt: ground truth (confidence > 0 表示已標註)
        gt_area: 實例面積
        joints: 只計算這些關節 (部位評估)

    Raises:
        DimensionMismatchError: 骨架配置不同
        MissingAnnotationError: 沒有已標註關節
    """
    check_same_layout(pred, gt)
    if not gt_area > 0:
        raise ValidationError(f"gt_area 必須為正數: {gt_area}")
    idx = np.arange(gt.joint_count) if joints is None else np.asarray(joints)
    labeled = idx[gt.confidences[idx] > 0]
    if labeled.size == 0:
        raise MissingAnnotationError("ground truth 沒有已標註的關節")
    k = gt.layout.k[labeled]
    d2 = np.sum((pred.coords[labeled] - gt.coords[labeled]) ** 2, axis=1)
    return float(np.mean(np.exp(-d2 / (2.0 * gt_area * k ** 2))))


@dataclass(frozen=True)
class MapReport:
    """mAP 結果，無對應 ground truth 的項目為 -1"""
    ap: float
    ap50: float
    ap75: float
    ap_medium: float
    ap_large: float
    ar: float

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [[self.ap, self.ap50, self.ap75, self.ap_medium, self.ap_large, self.ar]],
            columns=["AP", "AP50", "AP75", "APM", "APL", "AR"],
        )


def _as_mapping(items: PoseSet, what: str) -> Dict[int, List[Pose]]:
    if isinstance(items, Mapping):
        return {int(k): list(v) for k, v in items.items()}
    out: Dict[int, List[Pose]] = {}
    for image_id, poses in items:
        if image_id in out:
            raise DuplicateRecordError(f"{what} 中 image id 重複: {image_id}")
        out[int(image_id)] = list(poses)
    return out


@dataclass
class _ImageResult:
    scores: np.ndarray
    matched: np.ndarray      # T × D
    dt_ignore: np.ndarray    # T × D
    gt_ignore: np.ndarray    # G


def _evaluate_image(
    dts: List[Pose],
    gts: List[Pose],
    thresholds: np.ndarray,
    area_range: Tuple[float, float],
    joints: Optional[np.ndarray],
    max_dets: int,
) -> _ImageResult:
    order = np.argsort([-d.score for d in dts], kind="mergesort")[:max_dets]
    dts = [dts[i] for i in order]

    def has_labels(g: Pose) -> bool:
        conf = g.confidences if joints is None else g.confidences[joints]
        return bool(np.any(conf > 0))

    gt_ig = np.array(
        [0 if has_labels(g) and area_range[0] <= pose_area(g) <= area_range[1] else 1 for g in gts], dtype=int
    )
    gt_order = np.argsort(gt_ig, kind="mergesort")
    gts = [gts[i] for i in gt_order]
    gt_ig = gt_ig[gt_order]

    ious = np.zeros((len(dts), len(gts)))
    for g_i, g in enumerate(gts):
        if not has_labels(g):
            continue
        area = pose_area(g)
        for d_i, d in enumerate(dts):
            ious[d_i, g_i] = oks(d, g, area, joints)

    t_count, n_dt, n_gt = len(thresholds), len(dts), len(gts)
    gt_matched = np.zeros((t_count, n_gt), dtype=bool)
    dt_matched = np.zeros((t_count, n_dt), dtype=bool)
    dt_ig = np.zeros((t_count, n_dt), dtype=bool)
    for t_i, t in enumerate(thresholds):
        for d_i in range(n_dt):
            best = min(t, 1 - 1e-10)
            m = -1
            for g_i in range(n_gt):
                if gt_matched[t_i, g_i]:
                    continue
                if m > -1 and gt_ig[m] == 0 and gt_ig[g_i] == 1:
                    break
                if ious[d_i, g_i] < best:
                    continue
                best = ious[d_i, g_i]
                m = g_i
            if m == -1:
                continue
            dt_ig[t_i, d_i] = bool(gt_ig[m])
            dt_matched[t_i, d_i] = True
            gt_matched[t_i, m] = True

    outside = np.array([not area_range[0] <= pose_area(d) <= area_range[1] for d in dts], dtype=bool)
    dt_ig |= ~dt_matched & outside[None, :]
    return _ImageResult(np.array([d.score for d in dts]), dt_matched, dt_ig, gt_ig)


def _accumulate(results: List[_ImageResult], thresholds: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """回傳 (precision: T × R, recall: T)，沒有有效 ground truth 時為 -1"""
    rec_thrs = np.linspace(0.0, 1.0, EvalDefaults.RECALL_POINTS)
    t_count = len(thresholds)
    precision = -np.ones((t_count, len(rec_thrs)))
    recall = -np.ones(t_count)
    if not results:
        return precision, recall

    gt_ig = np.concatenate([r.gt_ignore for r in results])
    npig = int(np.count_nonzero(gt_ig == 0))
    if npig == 0:
        return precision, recall

    scores = np.concatenate([r.scores for r in results])
    order = np.argsort(-scores, kind="mergesort")
    matched = np.concatenate([r.matched for r in results], axis=1)[:, order]
    ignored = np.concatenate([r.dt_ignore for r in results], axis=1)[:, order]
    tps = matched & ~ignored
    fps = ~matched & ~ignored
    tp_sum = np.cumsum(tps, axis=1, dtype=float)
    fp_sum = np.cumsum(fps, axis=1, dtype=float)

    for t_i in range(t_count):
        tp, fp = tp_sum[t_i], fp_sum[t_i]
        rc = tp / npig
        pr = tp / (fp + tp + np.spacing(1))
        recall[t_i] = rc[-1] if rc.size else 0.0
        q = np.zeros(len(rec_thrs))
        pr = np.maximum.accumulate(pr[::-1])[::-1] if pr.size else pr
        inds = np.searchsorted(rc, rec_thrs, side="left")
        valid = inds < pr.size
        q[valid] = pr[inds[valid]]
        precision[t_i] = q
    return precision, recall


def _mean_valid(values: np.ndarray) -> float:
    valid = values[values > -1]
    return float(valid.mean()) if valid.size else -1.0


def map_eval(
    preds: PoseSet,
    gts: PoseSet,
    thresholds: Sequence[float] = EvalDefaults.OKS_THRESHOLDS,
    part: Optional[str] = None,
    max_dets: int = EvalDefaults.MAX_DETECTIONS,
) -> MapReport:
    """COCO 式關鍵點 mAP

    Args:
        preds: image id -> 預測姿態
        gts: image id -> ground truth 姿態
        thresholds: OKS 門檻 (嚴格遞增，在 (0, 1) 內)
        part: 限制在某個部位 (body / foot / face / hand)
        max_dets: 每張影像最多評估的預測數

    Returns:
        MapReport

    Raises:
        DuplicateRecordError: image id 重複
        ValidationError: 預測的 image id 不在 ground truth 中，或門檻不合法
    """
    thr = np.asarray(thresholds, dtype=float)
    if thr.size == 0 or np.any(np.diff(thr) <= 0) or thr[0] <= 0 or thr[-1] >= 1:
        raise ValidationError(f"OKS 門檻必須嚴格遞增且在 (0, 1): {thresholds}")
    pred_map = _as_mapping(preds, "預測")
    gt_map = _as_mapping(gts, "ground truth")
    unknown = set(pred_map) - set(gt_map)
    if unknown:
        raise ValidationError(f"預測含有未知的 image id: {sorted(unknown)}")

    joints = None
    if part is not None:
        layout = next((p.layout for poses in gt_map.values() for p in poses), None)
        if layout is not None:
            joints = layout.part_indices(part)

    def run(area_range):
        results = [
            _evaluate_image(pred_map.get(img, []), gt_map[img], thr, area_range, joints, max_dets)
            for img in sorted(gt_map)
        ]
        return _accumulate(results, thr)

    precision, recall = run(ALL_AREA)
    precision_m, _ = run(EvalDefaults.MEDIUM_AREA)
    precision_l, _ = run(EvalDefaults.LARGE_AREA)

    def at(value: float) -> float:
        hits = np.flatnonzero(np.isclose(thr, value))
        return _mean_valid(precision[hits[0]]) if hits.size else float("nan")

    report = MapReport(
        ap=_mean_valid(precision),
        ap50=at(0.5),
        ap75=at(0.75),
        ap_medium=_mean_valid(precision_m),
        ap_large=_mean_valid(precision_l),
        ar=_mean_valid(recall),
    )
    logger.info("mAP%s: %s", f" ({part})" if part else "", report)
    return report


@dataclass
class MotReport:
    """逐關節 MOT 指標

    Attributes:
        per_joint: 每個關節一列 (mota, motp, precision, recall, num_*)
        mota, motp, precision, recall: 對關節平均
        num_switches, num_false_positives, num_misses, num_objects: 對關節加總
    """
    per_joint: pd.DataFrame
    mota: float
    motp: float
    precision: float
    recall: float
    num_switches: int
    num_false_positives: int
    num_misses: int
    num_objects: int

    def summary(self) -> pd.Series:
        return pd.Series({
            "mota": self.mota,
            "motp": self.motp,
            "precision": self.precision,
            "recall": self.recall,
            "num_switches": self.num_switches,
            "num_false_positives": self.num_false_positives,
            "num_misses": self.num_misses,
            "num_objects": self.num_objects,
        })


def _group_by_frame(records: Iterable[TrackRecord]) -> Dict[int, List[TrackRecord]]:
    frames: Dict[int, List[TrackRecord]] = defaultdict(list)
    for r in records:
        frames[r.frame].append(r)
    return frames


def _head_gate(record: TrackRecord, head_segment: Tuple[int, int], threshold: float) -> float:
    head, neck = head_segment
    conf = record.pose.confidences
    if conf[head] <= 0 or conf[neck] <= 0:
        raise MissingAnnotationError(f"frame {record.frame} track {record.track_id} 缺少頭部標註")
    return threshold * float(np.linalg.norm(record.pose.coords[head] - record.pose.coords[neck]))


def _match_joint(
    gt_ids: List[int],
    pred_ids: List[int],
    dist: np.ndarray,
    valid: np.ndarray,
    mapping: Dict[int, int],
) -> List[Tuple[int, int]]:
    """先保留上一個 frame 仍在門檻內的對應，其餘依距離由小到大貪婪匹配"""
    pairs: List[Tuple[int, int]] = []
    used_g, used_p = set(), set()
    pred_pos = {pid: j for j, pid in enumerate(pred_ids)}
    for g, gid in enumerate(gt_ids):
        p = pred_pos.get(mapping.get(gid, -1))
        if p is not None and valid[g, p] and p not in used_p:
            pairs.append((g, p))
            used_g.add(g)
            used_p.add(p)
    candidates = sorted(
        (dist[g, p], g, p)
        for g in range(len(gt_ids))
        for p in range(len(pred_ids))
        if valid[g, p]
    )
    for _, g, p in candidates:
        if g in used_g or p in used_p:
            continue
        pairs.append((g, p))
        used_g.add(g)
        used_p.add(p)
    return pairs


def mot_eval(
    track_output: Iterable[TrackRecord],
    gt_tracks: Iterable[TrackRecord],
    pckh_threshold: float = EvalDefaults.PCKH_THRESHOLD,
) -> MotReport:
    """逐關節 MOT 評估

    每個關節獨立計算：以 PCKh 門檻 (pckh_threshold · 頭部線段長度) 篩選候選，
    匹配後累計 FN / FP / ID switch。MOTA = 1 − (FN + FP + IDSW) / GT，
    MOTP 為匹配距離 (像素) 的平均。

    Raises:
        MissingAnnotationError: 配置沒有頭部線段，或 ground truth 缺少頭部關節
    """
    preds = _group_by_frame(track_output)
    gts = _group_by_frame(gt_tracks)
    any_gt = next((r for rs in gts.values() for r in rs), None)
    if any_gt is None:
        raise ValidationError("ground truth 軌跡為空")
    layout = any_gt.pose.layout
    if layout.head_segment is None:
        raise MissingAnnotationError(f"配置 {layout.name} 沒有頭部線段，無法計算 PCKh")

    frames = sorted(set(preds) | set(gts))
    gates = {
        f: np.array([_head_gate(r, layout.head_segment, pckh_threshold) for r in gts.get(f, [])])
        for f in frames
    }

    rows = []
    for j in range(layout.joint_count):
        mapping: Dict[int, int] = {}
        fn = fp = idsw = objects = matches = 0
        dist_sum = 0.0
        for f in frames:
            g_recs = [r for r in gts.get(f, []) if r.pose.confidences[j] > 0]
            g_gate = np.array([gates[f][i] for i, r in enumerate(gts.get(f, [])) if r.pose.confidences[j] > 0])
            p_recs = [r for r in preds.get(f, []) if r.pose.confidences[j] > 0]
            objects += len(g_recs)
            if g_recs and p_recs:
                g_xy = np.stack([r.pose.coords[j] for r in g_recs])
                p_xy = np.stack([r.pose.coords[j] for r in p_recs])
                dist = np.linalg.norm(g_xy[:, None, :] - p_xy[None, :, :], axis=2)
                valid = dist <= g_gate[:, None]
            else:
                dist = np.zeros((len(g_recs), len(p_recs)))
                valid = dist.astype(bool)
            gt_ids = [r.track_id for r in g_recs]
            pred_ids = [r.track_id for r in p_recs]
            pairs = _match_joint(gt_ids, pred_ids, dist, valid, mapping)
            for g, p in pairs:
                gid, pid = gt_ids[g], pred_ids[p]
                if gid in mapping and mapping[gid] != pid:
                    idsw += 1
                mapping[gid] = pid
                dist_sum += dist[g, p]
            matches += len(pairs)
            fn += len(g_recs) - len(pairs)
            fp += len(p_recs) - len(pairs)
        rows.append({
            "joint": layout.joint_names[j],
            "mota": 1.0 - (fn + fp + idsw) / objects if objects else np.nan,
            "motp": dist_sum / matches if matches else np.nan,
            "precision": matches / (matches + fp) if matches + fp else np.nan,
            "recall": matches / objects if objects else np.nan,
            "num_switches": idsw,
            "num_false_positives": fp,
            "num_misses": fn,
            "num_objects": objects,
            "num_matches": matches,
        })

    per_joint = pd.DataFrame(rows).set_index("joint")
    report = MotReport(
        per_joint=per_joint,
        mota=float(per_joint["mota"].mean()),
        motp=float(per_joint["motp"].mean()),
        precision=float(per_joint["precision"].mean()),
        recall=float(per_joint["recall"].mean()),
        num_switches=int(per_joint["num_switches"].sum()),
        num_false_positives=int(per_joint["num_false_positives"].sum()),
        num_misses=int(per_joint["num_misses"].sum()),
        num_objects=int(per_joint["num_objects"].sum()),
    )
    logger.info("MOT: MOTA=%.4f MOTP=%.4f IDSW=%d", report.mota, report.motp, report.num_switches)
    return report
