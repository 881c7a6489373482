import json

import pytest

from src.data_access.detection_file import DetectionRepository, file_detector, write_detections
from src.models.bundle import DetectionFrame
from src.models.geometry import DetectionBox
from src.utils.exceptions import FileFormatError, RecordNotFoundError


def _write_lines(path, rows):
    path.write_text("\n".join(json.dumps(r) for r in rows) + "\n", encoding="utf-8")
    return path


def test_crop_ids_default_to_running_index(tmp_path):
    path = _write_lines(tmp_path / "det.jsonl", [
        {"frame": 0, "detections": [{"box": [0, 0, 10, 10], "score": 0.9}, {"box": [5, 5, 9, 9]}]},
        {"frame": 1, "image": "b.jpg", "detections": [{"box": [1, 1, 4, 4], "score": 0.3}]},
    ])
    repo = DetectionRepository(path)
    assert repo.ids() == [0, 1]
    assert repo.get_by_id(0).crop_ids == (0, 1)
    assert repo.get_by_id(0).detections[1].score == 1.0
    assert repo.get_by_id(1).crop_ids == (2,)
    assert repo.get_by_id(1).image == "b.jpg"
    assert len(repo) == 2 and 1 in repo


def test_score_floor(tmp_path):
    path = _write_lines(tmp_path / "det.jsonl", [
        {"frame": 3, "detections": [
            {"box": [0, 0, 10, 10], "score": 0.05, "crop_id": 8},
            {"box": [0, 0, 10, 10], "score": 0.5, "crop_id": 9},
        ]},
    ])
    kept, dropped = file_detector(DetectionRepository(path), 3, score_floor=0.1)
    assert kept.crop_ids == (9,)
    assert dropped == 1
    with pytest.raises(RecordNotFoundError):
        file_detector(DetectionRepository(path), 4)


def test_frames_must_increase_per_source(tmp_path):
    path = _write_lines(tmp_path / "det.jsonl", [{"frame": 2}, {"frame": 1}])
    with pytest.raises(FileFormatError):
        DetectionRepository(path)


def test_sources_are_ordered_independently(tmp_path):
    path = _write_lines(tmp_path / "det.jsonl", [
        {"frame": 5, "source": "a"},
        {"frame": 1, "source": "b"},
    ])
    assert DetectionRepository(path).ids() == [1, 5]


@pytest.mark.parametrize("line", ["not json", '{"detections": []}', '{"frame": 0, "detections": [{"box": [5, 0, 1, 1]}]}'])
def test_malformed_lines(tmp_path, line):
    path = tmp_path / "det.jsonl"
    path.write_text(line + "\n", encoding="utf-8")
    with pytest.raises(FileFormatError):
        DetectionRepository(path)


def test_missing_file(tmp_path):
    with pytest.raises(FileFormatError):
        DetectionRepository(tmp_path / "nope.jsonl")


def test_write_then_read(tmp_path):
    frames = [
        DetectionFrame(0, image="0.jpg", detections=(DetectionBox(1, 2, 3, 4, score=0.7),), crop_ids=(4,)),
        DetectionFrame(2),
    ]
    write_detections(tmp_path / "det.jsonl", frames)
    repo = DetectionRepository(tmp_path / "det.jsonl")
    assert repo.get_all() == frames
