"""Synthetic navigation data: curriculum tasks, multi-agent rollouts, judging,
perturbation with recovery, goal-to-QA rewriting and CoT record assembly."""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from guire.actions import (
    DIRECTIONS,
    Action,
    ActionType,
    Direction,
    ParseError,
    Reason,
    extract_candidate,
    extract_sections,
    format_candidate,
    parse_action,
    serialize_action,
)
from guire.envsim import (
    EnvState,
    EvalConfig,
    Environment,
    SuccessSpec,
    Task,
    Trajectory,
    TrajStep,
    apply_output,
    history_entry,
    replay,
)
from guire.policies import Observation, Policy, find_target

logger = logging.getLogger(__name__)

NAV_RECORD = "nav_record.v1"


class ForgeError(ValueError):
    pass


class Unsatisfiable(ForgeError):
    pass


class NoRecovery(ForgeError):
    pass


# --------------------------------------------------------------------------- curriculum


@dataclass(frozen=True)
class Level:
    difficulty: int
    task_count: int
    path_length: tuple[int, int]


@dataclass(frozen=True)
class CurriculumSpec:
    levels: tuple[Level, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(self.levels))
        ds = [lv.difficulty for lv in self.levels]
        if ds != sorted(ds):
            raise ForgeError("curriculum levels must be sorted by difficulty")


def generate_tasks(env: Environment, spec: CurriculumSpec, seed: int = 0,
                   start: Optional[str] = None) -> list[Task]:
    """Reach-a-screen goals whose BFS distance from ``start`` falls in each level's range."""
    start = start or env.initial_screen
    rng = np.random.default_rng(seed)
    dist = env.screen_distances(start)
    tasks = []
    for lv in spec.levels:
        lo, hi = lv.path_length
        pool = sorted(s for s, d in dist.items() if lo <= d <= hi)
        if not pool:
            raise Unsatisfiable(f"no screen at distance {lo}..{hi} from {start!r}")
        picks = rng.choice(len(pool), size=lv.task_count, replace=lv.task_count > len(pool))
        for j, k in enumerate(picks):
            sid = pool[int(k)]
            title = env.screens[sid].title
            tasks.append(Task(f"gen-l{lv.difficulty}-{j}-{sid}", f"Go to the {title} screen", start,
                              SuccessSpec(sid), lv.difficulty))
    return tasks


# --------------------------------------------------------------------------- scripted agents


def describe_action(env: Environment, screen: str, action: Action) -> str:
    """Step-level instruction a planner would give for ``action``."""
    at = action.action_type
    if at.is_location:
        eid = env.hit_test(screen, action.params)
        el = next((e for e in env.screens[screen].elements if e.element_id == eid), None)
        label = el.label if el is not None else f"point {action.params.x},{action.params.y}"
        return f"{at.value} the '{label}' element"
    if at is ActionType.TEXTENTRY:
        return f'type "{action.params.value}"'
    if at is ActionType.OPEN_APP:
        return f"open the {action.params.name} app"
    if at is ActionType.SWIPE:
        return f"swipe {action.params.value}"
    if at is ActionType.TERMINATE:
        return f"finish: {action.params.text}"
    if at is ActionType.PRESS_HOTKEY:
        return f"press {action.params.joined()}"
    return at.value.replace("_", " ")


class ScriptedPlanner:
    """Plans the next step of a BFS-optimal solution from the current state."""

    def __init__(self, env: Environment, tasks: Sequence[Task]):
        self.env = env
        self.tasks = {t.goal: t for t in tasks}
        self.state: Optional[EnvState] = None

    def observe_state(self, state: EnvState) -> None:
        self.state = state

    def generate(self, obs: Observation, n: int, temperature: float = 1.0) -> list[str]:
        task = self.tasks[obs.instruction]
        state = self.state or EnvState(obs.screen_id)
        if task.is_success(state, ignore_terminated=True):
            plan = f"finish: goal reached: {task.goal}"
        else:
            path = self.env.solve(task, state)
            if not path:
                plan = "finish: no way to reach the goal"
            else:
                plan = describe_action(self.env, state.screen, path[0])
        return [f"Plan: {plan}"] * n


_GROUNDER_PATTERNS = [
    (re.compile(r"^(\w+) the '(.*)' element$"), "element"),
    (re.compile(r'^type "(.*)"$', re.S), "type"),
    (re.compile(r"^open the (.+) app$"), "open"),
    (re.compile(r"^swipe (up|down|left|right)$"), "swipe"),
    (re.compile(r"^finish: (.*)$", re.S), "finish"),
]


class ScriptedGrounder:
    """Turns a step instruction into an action on the current screen."""

    def generate(self, obs: Observation, n: int, temperature: float = 1.0) -> list[str]:
        return [format_candidate(self.ground(obs))] * n

    def ground(self, obs: Observation) -> Action:
        from guire.actions import AppName, Text
        from guire.geometry import bbox_center

        instr = obs.instruction.strip()
        for pat, kind in _GROUNDER_PATTERNS:
            m = pat.match(instr)
            if not m:
                continue
            if kind == "element":
                at = ActionType(m.group(1))
                target = next((e for e in obs.elements or () if e.label == m.group(2)), None)
                if target is None:
                    target = find_target(obs)
                if target is None:
                    break
                return Action(at, bbox_center(target.bbox))
            if kind == "type":
                return Action(ActionType.TEXTENTRY, Text(m.group(1)))
            if kind == "open":
                return Action(ActionType.OPEN_APP, AppName(m.group(1)))
            if kind == "swipe":
                return Action(ActionType.SWIPE, Direction(m.group(1)))
            return Action(ActionType.TERMINATE, Reason(m.group(1)))
        simple = {"navigate back": ActionType.NAVIGATE_BACK, "navigate home": ActionType.NAVIGATE_HOME,
                  "press enter": ActionType.PRESS_ENTER}
        if instr in simple:
            return Action(simple[instr])
        return Action(ActionType.TERMINATE, Reason(f"cannot ground: {instr}"))


# --------------------------------------------------------------------------- critic / judge


@dataclass(frozen=True)
class Critique:
    score: float
    verdict: str
    feedback: str

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ForgeError("critique score must be in [0, 1]")
        if self.verdict not in ("pass", "fail"):
            raise ForgeError("verdict must be 'pass' or 'fail'")


class RuleCritic:
    """Scores progress toward the goal and explains failures in plain text."""

    def __init__(self, env: Environment, threshold: float = 1.0):
        self.env = env
        self.threshold = threshold

    def critique(self, task: Task, traj: Trajectory) -> Critique:
        if traj.success:
            score = 1.0
            feedback = "The goal was reached and the episode was terminated."
        else:
            state = replay(self.env, task, traj.actions())
            start = self.env.solve(task)
            rest = self.env.solve(task, state)
            total = len(start) if start else 1
            if rest is None:
                score = 0.0
                feedback = f"The episode ended on '{state.screen}', from which the goal is unreachable."
            else:
                score = max(0.0, min(1.0, 1.0 - len(rest) / max(total, 1))) * 0.99
                last = traj.steps[-1].action_text if traj.steps else "nothing"
                if state.terminated and not task.is_success(state):
                    feedback = (f"The episode was terminated on '{state.screen}' before the goal was "
                                f"reached ({len(rest)} more steps needed); last action: {last}.")
                else:
                    feedback = (f"The step budget ran out on '{state.screen}' with {len(rest)} steps "
                                f"still needed; last action: {last}.")
        verdict = "pass" if score >= self.threshold else "fail"
        return Critique(score, verdict, feedback)


@dataclass
class RolloutResult:
    trajectory: Trajectory
    attempts: list[Trajectory]
    critiques: list[Critique]

    @property
    def retries(self) -> int:
        return len(self.attempts) - 1


def _critic_feedback(c: Critique) -> str:
    return f"Critic: {c.feedback}"


def multi_agent_rollout(planner: Policy, grounder: Policy, critic, env: Environment, task: Task,
                        retry_budget: int = 1, cfg: EvalConfig | None = None) -> RolloutResult:
    """Planner -> instruction, grounder -> action, critic feedback on failure, bounded retries."""
    cfg = cfg or EvalConfig()
    attempts, critiques = [], []
    feedback: list[str] = []
    for attempt in range(retry_budget + 1):
        state = env.reset(task)
        traj = Trajectory(task.task_id, task.goal, trajectory_id=f"{task.task_id}-a{attempt}")
        history: list[str] = []
        for _ in range(cfg.max_steps):
            if hasattr(planner, "observe_state"):
                planner.observe_state(state)
            pobs = env.observe(state, task.goal, feedback + history)
            plan = extract_sections(planner.generate(pobs, 1)[0]).get("plan", "")
            gobs = env.observe(state, plan, history)
            raw = grounder.generate(gobs, 1)[0]
            nxt, cand, err = apply_output(env, state, raw)
            text = serialize_action(cand.action) if cand else None
            if cand is not None:
                raw = format_candidate(cand.action, plan=plan or None)
            step = TrajStep(state.digest(), state.screen, raw, text, nxt.screen, nxt.digest(), err)
            traj.steps.append(step)
            history.append(history_entry(step))
            state = nxt
            if state.terminated:
                break
        traj.terminal = True
        traj.success = task.is_success(state)
        c = critic.critique(task, traj)
        attempts.append(traj)
        critiques.append(c)
        if traj.success:
            break
        feedback.append(_critic_feedback(c))
    return RolloutResult(attempts[-1], attempts, critiques)


@dataclass(frozen=True)
class Judgement:
    score: float
    reasons: tuple[str, ...]


class RuleJudge:
    """Default judge: success, no repeated (state, action) pair, ends with terminate."""

    rules = ("success", "no_repetition", "terminated")

    def judge(self, traj: Trajectory) -> Judgement:
        failed = []
        if not traj.success:
            failed.append("not_successful")
        seen = set()
        for s in traj.steps:
            key = (s.obs_digest, s.action_text)
            if key in seen:
                failed.append("repeated_action")
                break
            seen.add(key)
        if not traj.steps or traj.steps[-1].action_text is None or not traj.steps[-1].action_text.startswith("terminate("):
            failed.append("no_terminate")
        return Judgement((len(self.rules) - len(failed)) / len(self.rules), tuple(failed))


@dataclass(frozen=True)
class DropRecord:
    trajectory_id: str
    reason: str

    def as_dict(self) -> dict:
        return {"trajectory_id": self.trajectory_id, "reason": self.reason}


def judge_filter(trajectories: Sequence[Trajectory], judge=None, threshold: float = 1.0):
    """Keep trajectories scoring at least ``threshold``; returns (kept, drop log)."""
    judge = judge or RuleJudge()
    kept, dropped = [], []
    for t in trajectories:
        j = judge.judge(t)
        if j.score >= threshold:
            kept.append(t)
        else:
            reason = ",".join(j.reasons) or f"score {j.score:.3f} below {threshold}"
            dropped.append(DropRecord(t.trajectory_id, reason))
            logger.info("dropped %s: %s", t.trajectory_id, reason)
    return kept, dropped


# --------------------------------------------------------------------------- perturbation


def _make_step(env: Environment, state: EnvState, action: Action, plan: str, tag: str):
    nxt = env.step(state, action)
    raw = format_candidate(action, plan=plan)
    return TrajStep(state.digest(), state.screen, raw, serialize_action(action), nxt.screen,
                    nxt.digest(), None, tag), nxt


def perturb_trajectory(clean: Trajectory, env: Environment, task: Task, seed: int = 0,
                       index: Optional[int] = None) -> Trajectory:
    """Replace one step with an erroneous action, then append a BFS recovery and terminate.

    By default the final terminate is replaced with a swipe in a seeded direction.
    """
    if not clean.success:
        raise ForgeError("only successful trajectories can be perturbed")
    rng = np.random.default_rng(seed)
    k = len(clean.steps) - 1 if index is None else index
    if not 0 <= k < len(clean.steps):
        raise ForgeError(f"perturbation index {k} out of range")
    prefix = clean.steps[:k]
    state = replay(env, task, [s.action for s in prefix])
    original = clean.steps[k].action
    error = Action(ActionType.SWIPE, Direction(DIRECTIONS[int(rng.integers(4))]))
    if original is not None and original.action_type is ActionType.SWIPE:
        others = [d for d in DIRECTIONS if d != original.params.value]
        error = Action(ActionType.SWIPE, Direction(others[int(rng.integers(len(others)))]))
    step, state = _make_step(env, state, error, describe_action(env, state.screen, error), "error")
    steps = list(prefix) + [step]
    path = env.solve(task, state)
    if path is None:
        raise NoRecovery(f"goal unreachable after erroneous {serialize_action(error)} on {state.screen!r}")
    for a in path:
        s, state = _make_step(env, state, a, "recover: " + describe_action(env, state.screen, a), "recovery")
        steps.append(s)
    done = Action(ActionType.TERMINATE, Reason(f"goal reached: {task.goal}"))
    s, state = _make_step(env, state, done, describe_action(env, state.screen, done), "recovery")
    steps.append(s)
    return Trajectory(clean.task_id, clean.goal, steps, True, task.is_success(state),
                      trajectory_id=f"{clean.trajectory_id}-perturbed{k}")


# --------------------------------------------------------------------------- QA rewriting


@dataclass(frozen=True)
class QAPair:
    question: str
    answer: str
    terminal_screen: str
    fallback: bool = False


_QA_TEMPLATES = [
    (re.compile(r"^create (?:a )?contact (\w+)(?: with phone (\S+))?$", re.I),
     lambda m: f"Is there a contact named {m.group(1)}, and what does it show?"),
    (re.compile(r"^turn (on|off) (.+)$", re.I), lambda m: f"Is {m.group(2)} turned {m.group(1).lower()}?"),
    (re.compile(r"^(?:open|show|go to) (?:the |my )?(.+?)(?: screen)?$", re.I),
     lambda m: f"What is shown on the {m.group(1)} screen?"),
]

NO_FIELDS_ANSWER = "state reached; no readable fields"


def template_question(goal: str) -> str:
    for pat, make in _QA_TEMPLATES:
        m = pat.match(goal.strip())
        if m:
            return make(m)
    return f"Was '{goal}' achieved, and what is shown?"


def terminal_answer(env: Environment, state: EnvState) -> str:
    screen = env.screens[state.screen]
    labels = [e.label for e in screen.elements if e.label]
    values = [f"{k}={v}" for k, v in state.fields]
    if not labels and not values:
        return NO_FIELDS_ANSWER
    return "Yes. Shown: " + "; ".join(labels + values)


def rewrite_goal_to_qa(traj: Trajectory, env: Environment, task: Task,
                       rewriter: Optional[Callable[[str, str], tuple[str, str]]] = None) -> QAPair:
    """Question from the goal, answer from the terminal state's readable labels.

    A plugged ``rewriter(goal, default_answer) -> (question, answer)`` is tried
    first; any exception falls back to the template and sets ``fallback``.
    """
    if not traj.success:
        raise ForgeError("QA rewriting needs a successful trajectory")
    state = replay(env, task, traj.actions())
    answer = terminal_answer(env, state)
    if rewriter is not None:
        try:
            q, a = rewriter(task.goal, answer)
            return QAPair(q, a, state.screen)
        except Exception as e:  # any outage of a plugged rewriter degrades to the template
            logger.warning("rewriter failed (%s); using the template", e)
            return QAPair(template_question(task.goal), answer, state.screen, fallback=True)
    return QAPair(template_question(task.goal), answer, state.screen)


# --------------------------------------------------------------------------- CoT assembly


@dataclass(frozen=True)
class StepContext:
    task: Task
    step_idx: int
    step: TrajStep
    action: Action
    screen_title: str
    visible: tuple[str, ...]
    history: tuple[str, ...]
    next_title: str
    goal_reached: bool


def template_cot(ctx: StepContext) -> dict[str, str]:
    plan = f"{describe_action_title(ctx)} to progress toward: {ctx.task.goal}"
    visible = ", ".join(ctx.visible) or "nothing"
    think = (f"The '{ctx.screen_title}' screen shows {visible}. "
             f"{len(ctx.history)} action(s) taken so far. Choosing {serialize_action(ctx.action)}.")
    if ctx.goal_reached:
        reflect = "The goal state is reached; the episode can end here."
    else:
        reflect = f"After this step the '{ctx.next_title}' screen should appear; the goal is not reached yet."
    return {"plan": plan, "think": think, "reflect": reflect}


def describe_action_title(ctx: StepContext) -> str:
    s = ctx.step.raw
    try:
        plan = extract_candidate(s).plan
    except ParseError:
        plan = None
    text = plan or serialize_action(ctx.action)
    return text[:1].upper() + text[1:]


def assemble_cot(traj: Trajectory, env: Environment, task: Task, mode: str = "long",
                 generator: Optional[Callable[[StepContext], dict]] = None,
                 split_tag: str = "train") -> list[dict]:
    """One nav_record.v1 dict per step; short mode keeps only the plan."""
    if mode not in ("short", "long"):
        raise ForgeError("mode must be 'short' or 'long'")
    generator = generator or template_cot
    records = []
    state = env.reset(task)
    history: list[str] = []
    for i, step in enumerate(traj.steps):
        action = step.action
        if action is None:
            history.append(history_entry(step))
            continue
        nxt = env.step(state, action)
        screen = env.screens[state.screen]
        ctx = StepContext(task, i, step, action, screen.title,
                          tuple(e.label for e in screen.elements if e.label and e.role != "label"),
                          tuple(history), env.screens[nxt.screen].title,
                          task.is_success(nxt, ignore_terminated=True))
        sections = generator(ctx)
        plan = (sections.get("plan") or "").strip() or None
        think = (sections.get("think") or "").strip() or None if mode == "long" else None
        reflect = (sections.get("reflect") or "").strip() or None if mode == "long" else None
        records.append({
            "schema_version": NAV_RECORD,
            "task_id": traj.task_id,
            "step_idx": i,
            "sections": {"plan": plan, "think": think, "reflect": reflect},
            "action_text": serialize_action(action),
            "screen_digest": step.obs_digest,
            "split_tag": step.tag or split_tag,
        })
        history.append(history_entry(step))
        state = nxt
    return records


def record_text(record: dict) -> str:
    """Render a nav record back into the candidate text format."""
    s = record["sections"]
    return format_candidate(parse_action(record["action_text"]), s.get("plan"), s.get("think"), s.get("reflect"))


def record_roundtrips(record: dict) -> bool:
    try:
        cand = extract_candidate(record_text(record))
    except ParseError:
        return False
    return serialize_action(cand.action) == record["action_text"]


# --------------------------------------------------------------------------- corpus


@dataclass(frozen=True)
class CorpusConfig:
    seed: int = 0
    retry_budget: int = 1
    max_steps: int = 20
    threshold: float = 1.0
    perturbations: int = 1
    cot_mode: str = "long"
    workers: int = 1


@dataclass
class CorpusResult:
    clean: list[Trajectory]
    kept: list[Trajectory]
    drops: list[DropRecord]
    perturbed: list[tuple[Trajectory, Trajectory, int]]
    records: list[dict]
    qa: list[QAPair]

    @property
    def trajectories(self) -> list[Trajectory]:
        return self.kept + [p for _, p, _ in self.perturbed]

    def summary(self) -> dict:
        reasons: dict[str, int] = {}
        for d in self.drops:
            reasons[d.reason] = reasons.get(d.reason, 0) + 1
        return {"rollouts": len(self.clean), "kept": len(self.kept), "dropped": len(self.drops),
                "perturbed": len(self.perturbed), "records": len(self.records), "drop_reasons": reasons}


def _rollout_one(env: Environment, task: Task, tasks: Sequence[Task], cfg: CorpusConfig) -> Trajectory:
    planner = ScriptedPlanner(env, tasks)
    res = multi_agent_rollout(planner, ScriptedGrounder(), RuleCritic(env), env, task,
                              cfg.retry_budget, EvalConfig(max_steps=cfg.max_steps))
    return res.trajectory


def build_corpus(env: Environment, tasks: Sequence[Task], cfg: CorpusConfig | None = None,
                 rollout=None) -> CorpusResult:
    """Rollout, judge, perturb and annotate every task.

    ``rollout(env, task) -> Trajectory`` defaults to scripted planner/grounder
    agents with the rule critic. Perturbation indices after the first (the
    final terminate) are drawn from the seed.
    """
    from concurrent.futures import ThreadPoolExecutor

    cfg = cfg or CorpusConfig()
    run = rollout or (lambda e, t: _rollout_one(e, t, tasks, cfg))
    if cfg.workers > 1:
        with ThreadPoolExecutor(cfg.workers) as pool:
            clean = list(pool.map(lambda t: run(env, t), tasks))
        # map preserves task order, so the result is independent of scheduling
    else:
        clean = [run(env, t) for t in tasks]
    kept, drops = judge_filter(clean, threshold=cfg.threshold)
    by_id = {t.task_id: t for t in tasks}
    rng = np.random.default_rng(cfg.seed)
    perturbed, records, qa = [], [], []
    for traj in kept:
        task = by_id[traj.task_id]
        records.extend(assemble_cot(traj, env, task, cfg.cot_mode))
        qa.append(rewrite_goal_to_qa(traj, env, task))
        for j in range(cfg.perturbations):
            k = len(traj.steps) - 1 if j == 0 else int(rng.integers(len(traj.steps)))
            try:
                p = perturb_trajectory(traj, env, task, seed=int(rng.integers(2**31)), index=k)
            except NoRecovery as e:
                drops.append(DropRecord(f"{traj.trajectory_id}-perturbed{k}", f"no_recovery: {e}"))
                continue
            perturbed.append((traj, p, k))
            records.extend(assemble_cot(p, env, task, cfg.cot_mode))
    return CorpusResult(clean, kept, drops, perturbed, records, qa)
