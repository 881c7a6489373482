import numpy as np
import pytest

from src.data_access.layout_file import read_layout, resolve_layout, write_layout
from src.data_access.offset_file import read_box_pairs, read_model, read_models, write_box_pairs, write_models
from src.data_access.track_file import read_mot_csv, read_tracks_jsonl, write_mot_csv, write_tracks_jsonl
from src.models.geometry import DetectionBox
from src.models.layout import halpe26
from src.models.proposal import GaussianMixture, OffsetModel
from src.models.track import TrackRecord
from src.utils.exceptions import FileFormatError, RecordNotFoundError, ValidationError


def _records(make_pose):
    out = []
    for f in range(3):
        for tid, x in ((1, 0.0), (2, 200.0)):
            pose = make_pose(x + f, 0, score=0.75)
            out.append(TrackRecord(f, tid, pose.box, pose))
    return out


class TestTrackFiles:
    def test_jsonl_round_trip(self, tmp_path, make_pose, body_layout):
        records = _records(make_pose)
        path = tmp_path / "tracks.jsonl"
        assert write_tracks_jsonl(path, records) == 6
        loaded = read_tracks_jsonl(path, body_layout)
        assert [(r.frame, r.track_id) for r in loaded] == [(r.frame, r.track_id) for r in records]
        np.testing.assert_allclose(loaded[3].pose.coords, records[3].pose.coords, atol=1e-6)
        assert loaded[0].score == pytest.approx(0.75)

    def test_bad_line(self, tmp_path, body_layout):
        path = tmp_path / "tracks.jsonl"
        path.write_text('{"frame": 0}\n', encoding="utf-8")
        with pytest.raises(FileFormatError):
            read_tracks_jsonl(path, body_layout)

    def test_mot_csv(self, tmp_path, make_pose):
        path = tmp_path / "tracks.csv"
        write_mot_csv(path, _records(make_pose))
        table = read_mot_csv(path)
        assert table.shape == (6, 10)
        assert table["id"].tolist() == [1, 2] * 3
        assert table.loc[2, "x"] == pytest.approx(1.0)
        assert table.loc[0, "w"] == pytest.approx(60.0)


class TestOffsetFiles:
    def test_box_pairs(self, tmp_path):
        pairs = [("body", DetectionBox(0, 0, 10, 20), DetectionBox(1, 1, 11, 19)), ("foot", DetectionBox(0, 0, 4, 4), DetectionBox(0, 0, 5, 5))]
        path = tmp_path / "pairs.jsonl"
        write_box_pairs(path, pairs)
        assert read_box_pairs(path) == pairs

    def test_box_pairs_missing_column(self, tmp_path):
        path = tmp_path / "pairs.jsonl"
        path.write_text('{"part": "body", "gt": [0, 0, 1, 1]}\n', encoding="utf-8")
        with pytest.raises(FileFormatError):
            read_box_pairs(path)

    def test_models(self, tmp_path):
        mixture = GaussianMixture([0.5, 0.5], [[0, 0], [0.1, 0.1]], [np.eye(2) * 1e-3] * 2)
        model = OffsetModel("face", mixture, mixture, 2, np.zeros((4, 2)))
        path = tmp_path / "models.json"
        write_models(path, {"face": model})
        assert set(read_models(path)) == {"face"}
        np.testing.assert_allclose(read_model(path, "face").y_model.means, mixture.means)
        with pytest.raises(RecordNotFoundError):
            read_model(path, "body")

    def test_bad_model_file(self, tmp_path):
        path = tmp_path / "models.json"
        path.write_text('{"body": {"components": 1}}', encoding="utf-8")
        with pytest.raises(FileFormatError):
            read_models(path)


class TestLayoutFiles:
    def test_builtin_and_file(self, tmp_path):
        assert resolve_layout("halpe26") is halpe26()
        path = tmp_path / "layout.json"
        write_layout(path, halpe26())
        loaded = resolve_layout(str(path))
        assert loaded.joint_names == halpe26().joint_names
        assert read_layout(path).head_segment == (17, 18)

    def test_unknown(self, tmp_path):
        with pytest.raises(RecordNotFoundError):
            resolve_layout(str(tmp_path / "missing.json"))

    def test_invalid_content(self, tmp_path):
        path = tmp_path / "layout.json"
        path.write_text('{"name": "x"}', encoding="utf-8")
        with pytest.raises(ValidationError):
            read_layout(path)
