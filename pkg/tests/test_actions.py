from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from guire.actions import (
    Action,
    ActionSyntaxError,
    ActionType,
    AppName,
    BadSignature,
    Direction,
    Hotkeys,
    NoAction,
    ParseError,
    Platform,
    PlatformMismatch,
    Reason,
    Text,
    UnknownAction,
    extract_candidate,
    extract_sections,
    find_actions,
    format_candidate,
    parse_action,
    serialize_action,
    validate_action,
)
from guire.geometry import Point
from helpers import mutate, random_action


def test_fifteen_action_types():
    assert len(ActionType) == 15
    mobile_only = {t for t in ActionType if t.platforms == {Platform.MOBILE}}
    assert mobile_only == {ActionType.LONG_PRESS, ActionType.NAVIGATE_HOME, ActionType.OPEN_APP,
                           ActionType.NAVIGATE_BACK}
    assert Platform.MOBILE not in ActionType.PRESS_HOTKEY.platforms


@pytest.mark.parametrize(
    "text, expected",
    [
        ("tap(x=10, y=20)", Action(ActionType.TAP, Point(10, 20))),
        ("  tap (\n x = 10 ,y=20 )  ", Action(ActionType.TAP, Point(10, 20))),
        ('textentry(texts="a \\"b\\" \\\\ c")', Action(ActionType.TEXTENTRY, Text('a "b" \\ c'))),
        ('swipe(direction="left")', Action(ActionType.SWIPE, Direction("left"))),
        ('press_hotkey(hotkeys="ctrl+shift+t")', Action(ActionType.PRESS_HOTKEY, Hotkeys(("ctrl", "shift", "t")))),
        ('open_app(app_name="Clock")', Action(ActionType.OPEN_APP, AppName("Clock"))),
        ('terminate(reason="")', Action(ActionType.TERMINATE, Reason(""))),
        ("navigate_home()", Action(ActionType.NAVIGATE_HOME)),
        ("tap(y=2, x=1)", Action(ActionType.TAP, Point(1, 2))),
    ],
)
def test_parse_examples(text, expected):
    assert parse_action(text) == expected


def test_serialize_canonical():
    assert serialize_action(Action(ActionType.TAP, Point(1, 2))) == "tap(x=1, y=2)"
    assert serialize_action(Action(ActionType.TEXTENTRY, Text('say "hi"\\'))) == 'textentry(texts="say \\"hi\\"\\\\")'
    assert serialize_action(Action(ActionType.PRESS_ENTER)) == "press_enter()"
    assert serialize_action(Action(ActionType.PRESS_HOTKEY, Hotkeys(("ctrl", "c")))) == 'press_hotkey(hotkeys="ctrl+c")'


@pytest.mark.parametrize(
    "text, err",
    [
        ("tap(x=1.5, y=2)", ActionSyntaxError),
        ("tap(x=-1, y=2)", ActionSyntaxError),
        ("tap(x=1e3, y=2)", ActionSyntaxError),
        ("tap(x=1, y=2", ActionSyntaxError),
        ('textentry(texts="abc)', ActionSyntaxError),
        ('textentry(texts="a\\nb")', ActionSyntaxError),
        ("jump(x=1, y=2)", UnknownAction),
        ("tap(x=1)", BadSignature),
        ("tap(x=1, y=2, z=3)", BadSignature),
        ("tap(x=1, x=2)", BadSignature),
        ('tap(x="1", y=2)', BadSignature),
        ('swipe(direction="north")', BadSignature),
        ('press_hotkey(hotkeys="ctrl++c")', BadSignature),
        ('navigate_back(direction="up")', BadSignature),
        ("tap(x=1, y=2) tap(x=3, y=4)", ActionSyntaxError),
        ("", ActionSyntaxError),
    ],
)
def test_parse_errors(text, err):
    with pytest.raises(err):
        parse_action(text)


def test_bad_signature_records_type():
    with pytest.raises(BadSignature) as info:
        parse_action('press_enter(texts="x")')
    assert info.value.action_type is ActionType.PRESS_ENTER


def test_action_constructor_checks_signature():
    with pytest.raises(BadSignature):
        Action(ActionType.TAP, Text("x"))
    with pytest.raises(BadSignature):
        Action(ActionType.NAVIGATE_HOME, Point(1, 1))


def test_validate_action_platform():
    validate_action(Action(ActionType.OPEN_APP, AppName("Files")), "mobile")
    with pytest.raises(PlatformMismatch):
        validate_action(Action(ActionType.OPEN_APP, AppName("Files")), Platform.DESKTOP)
    with pytest.raises(PlatformMismatch):
        validate_action(Action(ActionType.PRESS_HOTKEY, Hotkeys(("ctrl", "v"))), "mobile")


def test_extract_candidate_sections_and_last_call():
    raw = ("Plan: open settings\nThink: the gear icon is visible\nReflect: nothing yet\n"
           "Action: tap(x=1, y=1) tap(x=405, y=435)")
    cand = extract_candidate(raw)
    assert cand.action == Action(ActionType.TAP, Point(405, 435))
    assert (cand.plan, cand.think, cand.reflect) == ("open settings", "the gear icon is visible", "nothing yet")


def test_extract_candidate_skips_malformed_tail():
    cand = extract_candidate('swipe(direction="up") and then tap(x=3')
    assert cand.action.action_type is ActionType.SWIPE


def test_no_action_keeps_last_error():
    with pytest.raises(NoAction) as info:
        extract_candidate('Action: navigate_home(reason="x")')
    assert isinstance(info.value.last_error, BadSignature)
    with pytest.raises(NoAction):
        extract_candidate("Plan: nothing to do")


def test_find_actions_left_to_right():
    found = find_actions('navigate_back() text swipe(direction="down") open_app(app_name="A")')
    assert [a.action_type for a in found] == [ActionType.NAVIGATE_BACK, ActionType.SWIPE, ActionType.OPEN_APP]


def test_extract_sections_last_marker_wins():
    assert extract_sections("Plan: a\nPlan: b\nAction: x")["plan"] == "b"


def test_format_candidate_round_trip():
    a = Action(ActionType.TEXTENTRY, Text("line\nbreak"))
    raw = format_candidate(a, plan="type it", think=None, reflect="ok")
    assert "Think:" not in raw
    cand = extract_candidate(raw)
    assert cand.action == a and cand.plan == "type it" and cand.reflect == "ok"


@settings(max_examples=300)
@given(st.integers(0, 2**32 - 1))
def test_round_trip_property(seed):
    rng = np.random.default_rng(seed)
    a = random_action(rng)
    text = serialize_action(a)
    assert parse_action(text) == a
    assert serialize_action(parse_action(text)) == text


@settings(max_examples=300)
@given(st.integers(0, 2**32 - 1))
def test_mutations_raise_only_parse_errors(seed):
    rng = np.random.default_rng(seed)
    text = mutate(serialize_action(random_action(rng)), rng)
    try:
        a = parse_action(text)
    except ParseError:
        return
    assert parse_action(serialize_action(a)) == a


@given(st.text(max_size=60))
def test_extract_never_panics(text):
    try:
        extract_candidate(text)
    except ParseError:
        pass
