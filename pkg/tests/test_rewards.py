from __future__ import annotations

import json

import pytest
from hypothesis import given, strategies as st

from guire.actions import ActionType, NoAction, Text, extract_candidate, try_extract
from guire.geometry import Point
from guire.geometry import BBox, bbox_center, contains
from guire.rewards import (
    GroundTruth,
    Location,
    RewardConfig,
    RewardError,
    dense_location_reward,
    grounding_reward,
    ground_truth_from_dict,
    normalize_string,
    sparse_location_reward,
    total_reward,
    type_reward,
)


def _table(fixtures_dir):
    return json.loads((fixtures_dir / "reward_table.json").read_text())


def test_reward_table(fixtures_dir):
    for row in _table(fixtures_dir):
        gt = ground_truth_from_dict(row["gt"])
        got = total_reward(row["candidate"], gt, RewardConfig(lam=row["lam"], location_mode=row["mode"]))
        assert got.f_type == row["f_type"], row["id"]
        assert got.f_param == pytest.approx(row["f_param"], abs=1e-12), row["id"]
        assert got.total == pytest.approx(row["total"], abs=1e-12), row["id"]
        assert list(got.diagnostics) == row["diagnostics"], row["id"]


def test_type_reward_branches():
    assert type_reward(ActionType.PRESS_ENTER, GroundTruth(ActionType.PRESS_ENTER)) == 2
    assert type_reward(ActionType.TAP, GroundTruth(ActionType.TAP, Location(BBox(0, 0, 2, 2)))) == 1
    assert type_reward(ActionType.LONG_PRESS, GroundTruth(ActionType.TAP, Location(BBox(0, 0, 2, 2)))) == 0


def test_ground_truth_validation():
    with pytest.raises(RewardError):
        GroundTruth(ActionType.TAP, Text("x"))
    with pytest.raises(RewardError):
        GroundTruth(ActionType.NAVIGATE_HOME, Text("x"))
    with pytest.raises(RewardError):
        ground_truth_from_dict({"action_type": "tap"})
    with pytest.raises(RewardError):
        ground_truth_from_dict({"action_type": "fly"})
    with pytest.raises(RewardError):
        ground_truth_from_dict({"action_type": "swipe", "direction": "north"})


def test_reward_config_validation():
    RewardConfig(lam=0.0)
    with pytest.raises(RewardError):
        RewardConfig(lam=-0.1)
    with pytest.raises(RewardError):
        RewardConfig(location_mode="exact")


def test_normalize_string():
    assert normalize_string("  café\n") == "café"


def test_accepts_candidate_and_parse_error_inputs():
    gt = GroundTruth(ActionType.TAP, Location(BBox(0, 0, 10, 10)))
    cand = extract_candidate("tap(x=5, y=5)")
    assert total_reward(cand, gt).total == 2.0
    err = try_extract("nothing here")
    assert isinstance(err, NoAction)
    assert total_reward(err, gt).total == 0.0


def test_grounding_reward_location_only():
    box = BBox(0, 0, 10, 10)
    assert grounding_reward(extract_candidate("tap(x=5, y=5)"), box) == 1.0
    assert grounding_reward(extract_candidate("long_press(x=5, y=5)"), box) == 1.0
    assert grounding_reward(extract_candidate("navigate_home()"), box) == 0.0
    assert grounding_reward(try_extract("tap("), box) == 0.0


boxes = st.tuples(st.integers(0, 500), st.integers(0, 500), st.integers(1, 300), st.integers(1, 300)).map(
    lambda t: BBox(t[0], t[1], t[0] + t[2], t[1] + t[3]))
points = st.tuples(st.integers(0, 1200), st.integers(0, 1200)).map(lambda t: Point(*t))


@given(boxes, points, st.floats(0.0, 5.0))
def test_dense_bounds(box, p, lam):
    r = dense_location_reward(p, box, lam)
    assert 0.0 <= r <= 1.0
    assert dense_location_reward(bbox_center(box), box, lam) == 1.0


@given(boxes, points)
def test_sparse_matches_containment(box, p):
    assert sparse_location_reward(p, box) == int(contains(box, p))


@given(boxes, points, points)
def test_dense_monotone_in_distance(box, p, q):
    c = bbox_center(box)
    dp = abs(p.x - c.x) / box.width + abs(p.y - c.y) / box.height
    dq = abs(q.x - c.x) / box.width + abs(q.y - c.y) / box.height
    if dp <= dq:
        assert dense_location_reward(p, box) >= dense_location_reward(q, box)


def test_textual_type_with_location_gt_is_type_mismatch():
    gt = GroundTruth(ActionType.TAP, Location(BBox(0, 0, 10, 10)))
    assert total_reward('textentry(texts="tap")', gt).total == 0.0
