"""Deterministic toy GUI environment, episode runner and success-rate metrics.

Screens are element lists; transitions map ``(screen, element, action type)``
or ``(screen, action type, parameter)`` to a next screen plus optional field
assignments. The screen ``"*"`` holds transitions available everywhere.
"""

from __future__ import annotations

import hashlib
import json
from collections import deque
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from guire.actions import (
    Action,
    ActionType,
    AppName,
    CandidateOutput,
    Direction,
    Hotkeys,
    ParseError,
    Platform,
    Reason,
    Text,
    ValidationError,
    extract_candidate,
    serialize_action,
    validate_action,
)
from guire.geometry import BBox, Point, ScreenDims, bbox_center, contains
from guire.policies import ObsElement, Observation
from guire.schema import validate

GLOBAL = "*"


class EnvError(ValueError):
    pass


@dataclass(frozen=True)
class Element:
    element_id: str
    bbox: BBox
    role: str = "button"
    label: str = ""
    z_order: int = 0


@dataclass(frozen=True)
class Transition:
    screen: str
    action: ActionType
    target: str
    element: Optional[str] = None
    param: Optional[str] = None
    set_fields: tuple[tuple[str, str], ...] = ()


@dataclass(frozen=True)
class Screen:
    screen_id: str
    title: str
    elements: tuple[Element, ...]


@dataclass(frozen=True)
class SuccessSpec:
    screen: Optional[str] = None
    fields: tuple[tuple[str, str], ...] = ()
    terminated: bool = True


@dataclass(frozen=True)
class Task:
    task_id: str
    goal: str
    initial_screen: str
    success: SuccessSpec
    difficulty: int = 1

    def __post_init__(self):
        if self.difficulty < 1:
            raise EnvError("difficulty must be >= 1")

    def is_success(self, state: "EnvState", ignore_terminated: bool = False) -> bool:
        s = self.success
        if s.screen is not None and state.screen != s.screen:
            return False
        have = dict(state.fields)
        if any(have.get(k) != v for k, v in s.fields):
            return False
        if s.terminated and not ignore_terminated and not state.terminated:
            return False
        return True


@dataclass(frozen=True)
class EnvState:
    screen: str
    focus: Optional[str] = None
    fields: tuple[tuple[str, str], ...] = ()
    terminated: bool = False

    def with_field(self, key: str, value: str) -> "EnvState":
        d = dict(self.fields)
        d[key] = value
        return replace(self, fields=tuple(sorted(d.items())))

    def field(self, key: str) -> str:
        return dict(self.fields).get(key, "")

    def digest(self) -> str:
        doc = json.dumps([self.screen, self.focus, self.fields, self.terminated], separators=(",", ":"))
        return hashlib.sha1(doc.encode()).hexdigest()[:16]


def _param_key(action: Action) -> Optional[str]:
    p = action.params
    if isinstance(p, Direction):
        return p.value
    if isinstance(p, AppName):
        return p.name
    if isinstance(p, Hotkeys):
        return p.joined()
    if isinstance(p, Text):
        return p.value
    if isinstance(p, Reason):
        return p.text
    return None


def _action_from(action_type: ActionType, param: Optional[str]) -> Action:
    sig = action_type.signature.value
    if sig == "none":
        return Action(action_type)
    if sig == "direction":
        return Action(action_type, Direction(param))
    if sig == "app_name":
        return Action(action_type, AppName(param))
    if sig == "hotkeys":
        return Action(action_type, Hotkeys.parse(param))
    if sig == "text":
        return Action(action_type, Text(param))
    if sig == "reason":
        return Action(action_type, Reason(param))
    raise EnvError(f"{action_type.value} transitions must name an element")


class Environment:
    def __init__(self, doc: dict):
        validate(doc, "env.v1")
        self.doc = doc
        self.name = doc.get("name", "")
        self.platform = Platform(doc["platform"])
        self.dims = ScreenDims(*doc["dims"])
        self.initial_screen = doc["initial_screen"]
        self.screens: dict[str, Screen] = {}
        for s in doc["screens"]:
            if s["id"] in self.screens or s["id"] == GLOBAL:
                raise EnvError(f"duplicate or reserved screen id {s['id']!r}")
            elements = []
            seen = set()
            for e in s["elements"]:
                if e["id"] in seen:
                    raise EnvError(f"duplicate element id {e['id']!r} on screen {s['id']!r}")
                seen.add(e["id"])
                try:
                    bbox = BBox.from_list(e["bbox"])
                except ValueError as err:
                    raise EnvError(f"screen {s['id']!r} element {e['id']!r}: {err}") from None
                if not self.dims.contains_bbox(bbox):
                    raise EnvError(f"element {e['id']!r} on {s['id']!r} exceeds screen dims")
                elements.append(Element(e["id"], bbox, e.get("role", "button"), e.get("label", ""),
                                        e.get("z_order", 0)))
            self.screens[s["id"]] = Screen(s["id"], s.get("title", s["id"]), tuple(elements))
        if self.initial_screen not in self.screens:
            raise EnvError(f"initial screen {self.initial_screen!r} does not exist")

        self._by_element: dict[tuple[str, str, ActionType], Transition] = {}
        self._by_pattern: dict[tuple[str, ActionType, Optional[str]], Transition] = {}
        self.transitions: list[Transition] = []
        for t in doc["transitions"]:
            try:
                at = ActionType(t["action"])
            except ValueError:
                raise EnvError(f"unknown action {t['action']!r} in transition") from None
            tr = Transition(t["screen"], at, t["target"], t.get("element"), t.get("param"),
                            tuple(sorted(t.get("set", {}).items())))
            if tr.screen != GLOBAL and tr.screen not in self.screens:
                raise EnvError(f"transition from unknown screen {tr.screen!r}")
            if tr.target not in self.screens:
                raise EnvError(f"transition to unknown screen {tr.target!r}")
            if tr.element is not None:
                if tr.screen == GLOBAL or not any(e.element_id == tr.element for e in self.screens[tr.screen].elements):
                    raise EnvError(f"transition names unknown element {tr.element!r} on {tr.screen!r}")
                if not at.is_location:
                    raise EnvError(f"element transitions need a location action, got {at.value}")
                self._by_element[(tr.screen, tr.element, at)] = tr
            else:
                _action_from(at, tr.param)
                self._by_pattern[(tr.screen, at, tr.param)] = tr
            self.transitions.append(tr)

        self.tasks: list[Task] = []
        for t in doc["tasks"]:
            s = t["success"]
            task = Task(t["id"], t["goal"], t["initial_screen"],
                        SuccessSpec(s.get("screen"), tuple(sorted(s.get("fields", {}).items())),
                                    s.get("terminated", True)),
                        t.get("difficulty", 1))
            if task.initial_screen not in self.screens:
                raise EnvError(f"task {task.task_id!r} starts on unknown screen")
            if task.success.screen is not None and task.success.screen not in self.screens:
                raise EnvError(f"task {task.task_id!r} targets unknown screen")
            self.tasks.append(task)
        if len({t.task_id for t in self.tasks}) != len(self.tasks):
            raise EnvError("duplicate task ids")

    @classmethod
    def from_file(cls, path) -> "Environment":
        with open(path, encoding="utf-8") as f:
            return cls(json.load(f))

    @classmethod
    def bundled(cls) -> "Environment":
        text = resources.files("guire").joinpath("data", "toy_phone.json").read_text()
        return cls(json.loads(text))

    def task(self, task_id: str) -> Task:
        for t in self.tasks:
            if t.task_id == task_id:
                return t
        raise KeyError(task_id)

    def reset(self, task: Task) -> EnvState:
        return EnvState(task.initial_screen)

    # ------------------------------------------------------------------ dynamics

    def hit_test(self, screen: Screen | str, p: Point) -> Optional[str]:
        if isinstance(screen, str):
            screen = self.screens[screen]
        best = None
        best_key = None
        for i, e in enumerate(screen.elements):
            if contains(e.bbox, p):
                key = (e.z_order, i)
                if best_key is None or key > best_key:
                    best, best_key = e, key
        return best.element_id if best else None

    def _pattern(self, screen: str, action: Action) -> Optional[Transition]:
        key = _param_key(action)
        return self._by_pattern.get((screen, action.action_type, key)) or self._by_pattern.get(
            (GLOBAL, action.action_type, key)
        )

    @staticmethod
    def _apply(state: EnvState, tr: Transition) -> EnvState:
        focus = state.focus if tr.target == state.screen else None
        new = replace(state, screen=tr.target, focus=focus)
        for k, v in tr.set_fields:
            new = new.with_field(k, v)
        return new

    def step(self, state: EnvState, action: Action) -> EnvState:
        """Next state; actions without a matching transition are no-ops."""
        validate_action(action, self.platform)
        if state.terminated:
            return state
        at = action.action_type
        if at is ActionType.TERMINATE:
            return replace(state, terminated=True)
        screen = self.screens[state.screen]
        if at.is_location:
            p = action.params
            if not self.dims.contains_point(p):
                return state
            eid = self.hit_test(screen, p)
            if eid is None:
                return state
            tr = self._by_element.get((state.screen, eid, at))
            if tr is not None:
                return self._apply(state, tr)
            el = next(e for e in screen.elements if e.element_id == eid)
            if at is ActionType.TAP and el.role == "textfield":
                return replace(state, focus=eid)
            return state
        if at is ActionType.TEXTENTRY:
            tr = self._pattern(state.screen, action)
            if tr is not None:
                return self._apply(state, tr)
            if state.focus is None:
                return state
            return state.with_field(state.focus, state.field(state.focus) + action.params.value)
        tr = self._pattern(state.screen, action)
        return self._apply(state, tr) if tr is not None else state

    def observe(self, state: EnvState, instruction: str, history: Sequence[str] = ()) -> Observation:
        screen = self.screens[state.screen]
        elements = tuple(
            ObsElement(e.element_id, e.bbox, e.role, e.label, state.field(e.element_id))
            for e in screen.elements
        )
        return Observation(self.dims, instruction, tuple(history), elements,
                           screen_id=state.screen, platform=self.platform)

    def point_for(self, screen: str, element_id: str) -> Point:
        """A pixel that hit-tests to ``element_id`` (its center when unoccluded)."""
        el = next(e for e in self.screens[screen].elements if e.element_id == element_id)
        c = bbox_center(el.bbox)
        if self.hit_test(screen, c) == element_id:
            return c
        b = el.bbox
        for y in range(b.y_min, b.y_max + 1):
            for x in range(b.x_min, b.x_max + 1):
                p = Point(x, y)
                if self.dims.contains_point(p) and self.hit_test(screen, p) == element_id:
                    return p
        raise EnvError(f"element {element_id!r} on {screen!r} is fully occluded")

    # ------------------------------------------------------------------ search

    def successors(self, state: EnvState, wanted_fields: dict[str, str] | None = None):
        """Candidate (action, next state) pairs from ``state``, in a fixed order."""
        wanted_fields = wanted_fields or {}
        screen = self.screens[state.screen]
        out = []
        for e in screen.elements:
            for at in ActionType:
                tr = self._by_element.get((state.screen, e.element_id, at))
                if tr is not None and self.platform in at.platforms:
                    out.append(Action(at, self.point_for(state.screen, e.element_id)))
            if e.role == "textfield" and state.focus != e.element_id and e.element_id in wanted_fields:
                out.append(Action(ActionType.TAP, self.point_for(state.screen, e.element_id)))
        if state.focus in wanted_fields:
            have, want = state.field(state.focus), wanted_fields[state.focus]
            if want != have and want.startswith(have):
                out.append(Action(ActionType.TEXTENTRY, Text(want[len(have):])))
        seen_patterns = set()
        for (scr, at, param), tr in list(self._by_pattern.items()):
            if scr not in (state.screen, GLOBAL) or self.platform not in at.platforms:
                continue
            if (at, param) in seen_patterns:
                continue
            seen_patterns.add((at, param))
            out.append(_action_from(at, param))
        return [(a, self.step(state, a)) for a in out]

    def solve(self, task: Task, start: Optional[EnvState] = None, max_depth: int = 32) -> Optional[list[Action]]:
        """Shortest action sequence satisfying the task (terminate not included), via BFS."""
        start = start or self.reset(task)
        start = replace(start, terminated=False)
        wanted = dict(task.success.fields)
        if task.is_success(start, ignore_terminated=True):
            return []
        parent: dict[EnvState, tuple[EnvState, Action]] = {}
        seen = {start}
        queue = deque([(start, 0)])
        while queue:
            state, depth = queue.popleft()
            if depth >= max_depth:
                continue
            for action, nxt in self.successors(state, wanted):
                if nxt in seen:
                    continue
                seen.add(nxt)
                parent[nxt] = (state, action)
                if task.is_success(nxt, ignore_terminated=True):
                    path = []
                    cur = nxt
                    while cur != start:
                        prev, a = parent[cur]
                        path.append(a)
                        cur = prev
                    return path[::-1]
                queue.append((nxt, depth + 1))
        return None

    def screen_distances(self, start: str) -> dict[str, int]:
        """BFS distance (in actions) from ``start`` to every reachable screen."""
        dist = {start: 0}
        queue = deque([start])
        while queue:
            s = queue.popleft()
            for _, nxt in self.successors(EnvState(s)):
                if nxt.screen not in dist:
                    dist[nxt.screen] = dist[s] + 1
                    queue.append(nxt.screen)
        return dist


# --------------------------------------------------------------------------- episodes


@dataclass(frozen=True)
class EvalConfig:
    max_steps: int = 15
    runs: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.max_steps < 1:
            raise EnvError("max_steps must be >= 1")
        if self.runs < 1:
            raise EnvError("runs must be >= 1")


@dataclass(frozen=True)
class TrajStep:
    obs_digest: str
    screen: str
    raw: str
    action_text: Optional[str]
    next_screen: str
    next_digest: str
    error: Optional[str] = None
    tag: str = ""

    @property
    def action(self) -> Optional[Action]:
        if self.action_text is None:
            return None
        from guire.actions import parse_action

        return parse_action(self.action_text)

    def as_dict(self) -> dict:
        return {
            "obs_digest": self.obs_digest,
            "screen": self.screen,
            "raw": self.raw,
            "action_text": self.action_text,
            "next_screen": self.next_screen,
            "next_digest": self.next_digest,
            "error": self.error,
            "tag": self.tag,
        }


@dataclass
class Trajectory:
    task_id: str
    goal: str
    steps: list[TrajStep] = field(default_factory=list)
    terminal: bool = False
    success: bool = False
    trajectory_id: str = ""

    def actions(self) -> list[Optional[Action]]:
        return [s.action for s in self.steps]

    def as_dict(self) -> dict:
        return {
            "trajectory_id": self.trajectory_id,
            "task_id": self.task_id,
            "goal": self.goal,
            "terminal": self.terminal,
            "success": self.success,
            "steps": [s.as_dict() for s in self.steps],
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True, separators=(",", ":"))


@dataclass
class EpisodeResult:
    trajectory: Trajectory
    final_state: EnvState

    @property
    def success(self) -> bool:
        return self.trajectory.success

    @property
    def steps(self) -> int:
        return len(self.trajectory.steps)


def history_entry(step: TrajStep) -> str:
    return step.action_text if step.action_text is not None else "<invalid>"


def apply_output(env: Environment, state: EnvState, raw: str) -> tuple[EnvState, Optional[CandidateOutput], Optional[str]]:
    """Parse a raw output and step; malformed or illegal outputs leave the state unchanged."""
    try:
        cand = extract_candidate(raw)
    except ParseError as e:
        return state, None, f"{type(e).__name__}: {e}"
    try:
        return env.step(state, cand.action), cand, None
    except ValidationError as e:
        return state, cand, f"{type(e).__name__}: {e}"


def run_episode(env: Environment, policy, task: Task, cfg: EvalConfig | None = None,
                history_prefix: Sequence[str] = (), trajectory_id: str = "") -> EpisodeResult:
    """observe -> generate(n=1) -> extract -> step, until terminate or the step budget."""
    cfg = cfg or EvalConfig()
    state = env.reset(task)
    traj = Trajectory(task.task_id, task.goal, trajectory_id=trajectory_id)
    history: list[str] = []
    for _ in range(cfg.max_steps):
        obs = env.observe(state, task.goal, list(history_prefix) + history)
        raw = policy.generate(obs, 1, 1.0)[0]
        nxt, cand, err = apply_output(env, state, raw)
        step = TrajStep(state.digest(), state.screen, raw,
                        serialize_action(cand.action) if cand else None,
                        nxt.screen, nxt.digest(), err)
        traj.steps.append(step)
        history.append(history_entry(step))
        state = nxt
        if state.terminated:
            break
    traj.terminal = True
    traj.success = task.is_success(state)
    return EpisodeResult(traj, state)


def replay(env: Environment, task: Task, actions: Iterable[Optional[Action]]) -> EnvState:
    state = env.reset(task)
    for a in actions:
        if a is None:
            continue
        try:
            state = env.step(state, a)
        except ValidationError:
            continue
    return state


def episode_seed(base: int, run: int, task_index: int) -> int:
    return int(np.random.SeedSequence([base, run, task_index]).generate_state(1)[0])


@dataclass
class SuccessReport:
    per_run: list[float]
    mean: float
    per_task: dict[str, float]
    episodes: list[EpisodeResult] = field(default_factory=list, repr=False)

    def as_dict(self) -> dict:
        return {"per_run": self.per_run, "mean": self.mean, "per_task": self.per_task}


def success_rate(env: Environment, policy, tasks: Sequence[Task], cfg: EvalConfig | None = None,
                 keep_episodes: bool = False) -> SuccessReport:
    """Fraction of successful episodes per run, averaged over ``cfg.runs`` seeded runs."""
    cfg = cfg or EvalConfig()
    if not tasks:
        raise EnvError("success_rate needs at least one task")
    per_run = []
    wins = {t.task_id: 0 for t in tasks}
    episodes = []
    for run in range(cfg.runs):
        ok = 0
        for i, task in enumerate(tasks):
            if hasattr(policy, "reset"):
                policy.reset(episode_seed(cfg.seed, run, i))
            res = run_episode(env, policy, task, cfg, trajectory_id=f"{task.task_id}-run{run}")
            ok += res.success
            wins[task.task_id] += res.success
            if keep_episodes:
                episodes.append(res)
        per_run.append(ok / len(tasks))
    per_task = {k: v / cfg.runs for k, v in wins.items()}
    return SuccessReport(per_run, float(np.mean(per_run)), per_task, episodes)


def oracle_scripts(env: Environment, tasks: Sequence[Task] | None = None) -> dict[str, list[tuple[str, Action]]]:
    """Per-goal optimal scripts (BFS solution plus terminate) for the scripted oracle."""
    scripts = {}
    for task in tasks if tasks is not None else env.tasks:
        path = env.solve(task)
        if path is None:
            raise EnvError(f"task {task.task_id!r} is unsolvable")
        state = env.reset(task)
        script = []
        for a in path:
            script.append((state.screen, a))
            state = env.step(state, a)
        script.append((state.screen, Action(ActionType.TERMINATE, Reason(f"goal reached: {task.goal}"))))
        scripts[task.goal] = script
    return scripts
