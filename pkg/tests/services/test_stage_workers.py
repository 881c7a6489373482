import dataclasses
import json

import pytest

from src.config.constants import OutputFormat
from src.config.settings import AppSettings
from src.data_access.coco_format import group_by_image, read_coco_ground_truth, read_coco_predictions
from src.data_access.detection_file import DetectionRepository
from src.data_access.feature_file import FeatureRepository
from src.data_access.heatmap_file import HeatmapRepository
from src.data_access.track_file import read_tracks_jsonl
from src.services.evaluation_service import map_eval
from src.services.pipeline_service import run_pipeline
from src.services.stage_workers import (
    PipelineInputs,
    ResultSink,
    StageWorkers,
    build_default_stages,
    frame_source,
    heatmap_attention,
)


def _inputs(paths, with_features=True):
    return PipelineInputs(
        detections=DetectionRepository(paths.detections),
        heatmaps=HeatmapRepository(paths.heatmaps),
        features=FeatureRepository(paths.features) if with_features else None,
    )


def _settings(track=False):
    base = AppSettings()
    return dataclasses.replace(base, pipeline=dataclasses.replace(base.pipeline, track=track))


def _run(paths, out, layout, track=False, fmt=OutputFormat.COCO, sequential=False):
    inputs = _inputs(paths)
    workers = StageWorkers(layout, inputs, _settings(track), output_format=fmt)
    sink = ResultSink(out, fmt)
    run_pipeline(build_default_stages(workers, 4), frame_source(inputs.detections), sink, sequential=sequential)
    return workers, sink


def test_replayed_scene_is_decoded_accurately(tmp_path, scene_paths, body_layout):
    out = tmp_path / "pred.json"
    workers, sink = _run(scene_paths, out, body_layout)
    sink.close()
    assert workers.dropped_detections == 12
    preds = group_by_image(read_coco_predictions(out, body_layout))
    assert all(len(v) == 2 for v in preds.values())
    report = map_eval(preds, read_coco_ground_truth(scene_paths.ground_truth, body_layout))
    assert report.ap50 == pytest.approx(1.0)


def test_sequential_and_concurrent_outputs_match(tmp_path, scene_paths, body_layout):
    files = []
    for sequential in (True, False):
        out = tmp_path / f"pred_{sequential}.json"
        _, sink = _run(scene_paths, out, body_layout, sequential=sequential)
        sink.close()
        files.append(out.read_bytes())
    assert files[0] == files[1]


def test_tracking_writes_records(tmp_path, scene_paths, body_layout):
    out = tmp_path / "pred.json"
    _, sink = _run(scene_paths, out, body_layout, track=True)
    sink.close(tmp_path / "tracks.jsonl")
    records = read_tracks_jsonl(tmp_path / "tracks.jsonl", body_layout)
    assert len(records) == 24
    assert {r.track_id for r in records} == {1, 2}
    entries = json.loads(out.read_text(encoding="utf-8"))
    assert all("track_id" in e for e in entries)


def test_openpose_output(tmp_path, scene_paths, body_layout):
    out = tmp_path / "openpose"
    _, sink = _run(scene_paths, out, body_layout, fmt=OutputFormat.OPENPOSE)
    sink.close()
    files = sorted(out.glob("*_keypoints.json"))
    assert len(files) == 12
    first = json.loads(files[0].read_text(encoding="utf-8"))
    assert len(first["people"]) == 2


def test_embeddings_follow_kept_poses(scene_paths, body_layout):
    inputs = _inputs(scene_paths)
    workers = StageWorkers(body_layout, inputs, _settings())
    bundle = next(iter(frame_source(inputs.detections)))
    for step in (workers.load, workers.detect, workers.transform, workers.pose):
        bundle = step(bundle)
    assert len(bundle.embeddings) == len(bundle.poses) == 2
    assert bundle.attention[0].shape == (1, 32, 24)


def test_heatmap_attention_range(scene_paths):
    heatmap = HeatmapRepository(scene_paths.heatmaps).get_by_id(0)
    attention = heatmap_attention(heatmap)
    assert attention.is_attention
    assert 0.0 <= attention.values.min() and attention.values.max() <= 1.0
