import numpy as np
import pytest

from src.models.layout import SkeletonLayout, builtin_layout, halpe26, halpe136
from src.utils.exceptions import RecordNotFoundError, ValidationError


def test_halpe136_parts():
    layout = halpe136()
    assert layout.joint_count == 136
    sizes = {part: stop - start for part, (start, stop) in layout.part_ranges.items()}
    assert sizes == {"body": 20, "foot": 6, "face": 68, "left_hand": 21, "right_hand": 21}
    assert layout.joint_names[layout.head_segment[0]] == "head"
    assert layout.joint_names[layout.head_segment[1]] == "neck"


def test_oks_constants():
    layout = halpe136()
    assert layout.k[0] == pytest.approx(0.026)
    np.testing.assert_allclose(layout.k[17:], 0.015)


def test_hand_is_union_of_both_hands():
    layout = halpe136()
    hand = layout.part_indices("hand")
    assert hand.tolist() == list(range(94, 136))
    with pytest.raises(RecordNotFoundError):
        halpe26().part_indices("face")


def test_dict_round_trip():
    layout = halpe26()
    restored = SkeletonLayout.from_dict(layout.to_dict())
    assert restored.joint_names == layout.joint_names
    assert dict(restored.part_ranges) == dict(layout.part_ranges)
    assert restored.head_segment == layout.head_segment


def test_parts_must_cover_every_joint_once():
    with pytest.raises(ValidationError):
        SkeletonLayout("bad", ("a", "b", "c"), {"body": (0, 2), "foot": (1, 3)}, (0.1, 0.1, 0.1))
    with pytest.raises(ValidationError):
        SkeletonLayout("bad", ("a", "b", "c"), {"body": (0, 2)}, (0.1, 0.1, 0.1))


def test_unknown_part_rejected():
    with pytest.raises(ValidationError):
        SkeletonLayout("bad", ("a",), {"tail": (0, 1)}, (0.1,))


def test_builtin_lookup():
    assert builtin_layout("halpe26") is halpe26()
    with pytest.raises(RecordNotFoundError):
        builtin_layout("coco17")
