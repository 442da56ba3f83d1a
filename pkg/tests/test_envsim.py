from __future__ import annotations

import copy
import json

import networkx as nx
import pytest

from guire.actions import Action, ActionType, AppName, Direction, Point, Reason, Text
from guire.envsim import (
    EnvError,
    EnvState,
    Environment,
    EvalConfig,
    oracle_scripts,
    replay,
    run_episode,
    success_rate,
)
from guire.policies import FixedOutput, ScriptedOracle, UniformRandom
from guire.schema import SchemaError
from helpers import screen_graph


def test_bundled_env_shape(env):
    assert len(env.screens) == 36 and len(env.tasks) == 20
    assert sorted({t.difficulty for t in env.tasks}) == [1, 2, 3]


def test_task_path_lengths_match_difficulty(env):
    lengths = {1: 2, 2: 4, 3: 7}
    for t in env.tasks:
        assert len(env.solve(t)) == lengths[t.difficulty], t.task_id


def test_screen_distances_match_graph_oracle(env):
    dist = nx.single_source_shortest_path_length(screen_graph(env.doc), "home")
    assert env.screen_distances("home") == dist


def test_hit_test_z_order(env):
    # the title label spans the top bar; a point inside a higher element wins
    assert env.hit_test("contact_editor", Point(500, 250)) == "name_field"
    assert env.hit_test("contact_editor", Point(500, 100)) == "title"
    assert env.hit_test("contact_editor", Point(5, 1900)) is None


def test_step_semantics(env):
    s = EnvState("home")
    s = env.step(s, Action(ActionType.TAP, env.point_for("home", "contacts_icon")))
    assert s.screen == "contacts_list"
    assert env.step(s, Action(ActionType.TAP, Point(1079, 1919))) == s  # empty area is a no-op
    s = env.step(EnvState("contact_editor"), Action(ActionType.TAP, env.point_for("contact_editor", "name_field")))
    assert s.focus == "name_field"
    s = env.step(s, Action(ActionType.TEXTENTRY, Text("Li")))
    s = env.step(s, Action(ActionType.TEXTENTRY, Text("na")))
    assert s.field("name_field") == "Lina"
    assert env.step(EnvState("home"), Action(ActionType.TEXTENTRY, Text("x"))) == EnvState("home")
    assert env.step(EnvState("home"), Action(ActionType.SWIPE, Direction("up"))).screen == "app_drawer"
    assert env.step(EnvState("settings_main"), Action(ActionType.NAVIGATE_HOME)).screen == "home"
    assert env.step(EnvState("settings_main"), Action(ActionType.OPEN_APP, AppName("Files"))).screen != "settings_main"


def test_terminate_freezes(env):
    s = env.step(EnvState("home"), Action(ActionType.TERMINATE, Reason("done")))
    assert s.terminated
    assert env.step(s, Action(ActionType.SWIPE, Direction("up"))) == s


def test_platform_violation_is_rejected_noop(env):
    out = run_episode(env, FixedOutput('press_hotkey(hotkeys="ctrl+c")'), env.tasks[0], EvalConfig(max_steps=2))
    assert not out.success
    assert all(st.error and "PlatformMismatch" in st.error for st in out.trajectory.steps)
    assert all(st.screen == st.next_screen for st in out.trajectory.steps)


def test_malformed_output_is_noop(env):
    out = run_episode(env, FixedOutput("I am not sure"), env.tasks[0], EvalConfig(max_steps=3))
    assert len(out.trajectory.steps) == 3 and out.trajectory.steps[0].action_text is None


def test_oracle_and_replay(env):
    pol = ScriptedOracle(oracle_scripts(env))
    for t in env.tasks:
        res = run_episode(env, pol, t)
        assert res.success, t.task_id
        assert t.is_success(replay(env, t, res.trajectory.actions()))


def test_success_rate_protocol(env):
    rep = success_rate(env, ScriptedOracle(oracle_scripts(env)), env.tasks, EvalConfig(15, 5, 0))
    assert rep.per_run == [1.0] * 5 and rep.mean == 1.0
    r1 = success_rate(env, UniformRandom(), env.tasks[:4], EvalConfig(15, 2, 3))
    r2 = success_rate(env, UniformRandom(), env.tasks[:4], EvalConfig(15, 2, 3))
    assert r1.per_run == r2.per_run


def test_trajectory_json_is_canonical(env):
    res = run_episode(env, ScriptedOracle(oracle_scripts(env)), env.tasks[0])
    d = json.loads(res.trajectory.to_json())
    assert d["success"] is True and len(d["steps"]) == 3


def test_env_integrity_errors(env):
    bad = copy.deepcopy(env.doc)
    bad["transitions"].append({"screen": "home", "action": "tap", "element": "nope", "target": "home"})
    with pytest.raises(EnvError):
        Environment(bad)
    bad = copy.deepcopy(env.doc)
    bad["screens"][0]["elements"][0]["bbox"] = [0, 0, 5000, 10]
    with pytest.raises(EnvError):
        Environment(bad)
    bad = copy.deepcopy(env.doc)
    bad["dims"] = "big"
    with pytest.raises(SchemaError):
        Environment(bad)
    with pytest.raises(EnvError):
        EvalConfig(max_steps=0)
