"""Pluggable policies and zoom-in inference.

A policy maps an :class:`Observation` to raw candidate texts via
``generate(obs, n, temperature)``. Everything downstream goes through
:func:`guire.actions.extract_candidate`, so mock and real models look the same.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Protocol, Sequence

import numpy as np

from guire import kernels
from guire.actions import (
    DIRECTIONS,
    Action,
    ActionType,
    AppName,
    Direction,
    Hotkeys,
    ParseError,
    Platform,
    Reason,
    Text,
    extract_candidate,
    format_candidate,
    serialize_action,
)
from guire.geometry import (
    BBox,
    CropConfig,
    CropWindow,
    Point,
    ScreenDims,
    bbox_center,
    clip_bbox_to_window,
    from_crop_coords,
    make_crop,
)


class PolicyError(RuntimeError):
    pass


class MissingScript(PolicyError):
    pass


class NoLocation(PolicyError):
    pass


@dataclass(frozen=True)
class ObsElement:
    element_id: str
    bbox: BBox
    role: str = "button"
    label: str = ""
    text: str = ""

    def as_dict(self) -> dict:
        return {"id": self.element_id, "bbox": self.bbox.as_list(), "label": self.label}


@dataclass(frozen=True)
class Observation:
    """What a policy sees: screen, instruction and past actions.

    ``view`` is set on zoomed observations; it locates the visible region inside
    the root screen so coordinates can be mapped back.
    """

    dims: ScreenDims
    instruction: str
    history: tuple[str, ...] = ()
    elements: Optional[tuple[ObsElement, ...]] = None
    image_ref: Optional[str] = None
    image_b64: Optional[str] = None
    screen_id: Optional[str] = None
    platform: Platform = Platform.MOBILE
    view: Optional[CropWindow] = None

    def __post_init__(self):
        object.__setattr__(self, "history", tuple(self.history))
        if self.elements is not None:
            object.__setattr__(self, "elements", tuple(self.elements))


def crop_observation(obs: Observation, window: CropWindow) -> Observation:
    """The observation restricted to ``window``, in window coordinates."""
    elements = None
    if obs.elements is not None:
        kept = []
        for el in obs.elements:
            clipped = clip_bbox_to_window(el.bbox, window)
            if clipped is not None:
                kept.append(replace(el, bbox=clipped))
        elements = tuple(kept)
    if obs.view is None:
        view = window
    else:
        root_origin = from_crop_coords(obs.view, window.origin)
        view = CropWindow(root_origin, window.dims, obs.view.parent)
    return replace(obs, dims=window.dims, elements=elements, view=view)


class Policy(Protocol):
    def generate(self, obs: Observation, n: int, temperature: float = 1.0) -> list[str]: ...


class TrainablePolicy(Policy, Protocol):
    params: np.ndarray

    def log_prob(self, obs: Observation, raw: str) -> float: ...

    def grad_log_prob(self, obs: Observation, raw: str) -> np.ndarray: ...


def _tap_text(p: Point) -> str:
    return format_candidate(Action(ActionType.TAP, p))


def _clip_point(x: float, y: float, dims: ScreenDims) -> Point:
    xi = min(max(int(round(x)), 0), dims.width - 1)
    yi = min(max(int(round(y)), 0), dims.height - 1)
    return Point(xi, yi)


def find_target(obs: Observation) -> Optional[ObsElement]:
    """The visible element whose label appears in the instruction (longest label wins)."""
    if not obs.elements:
        return None
    instr = obs.instruction.lower()
    best = None
    for el in obs.elements:
        lab = el.label.lower()
        if lab and lab in instr and (best is None or len(lab) > len(best.label)):
            best = el
    return best


class NoisyGrounder:
    """Taps near the named element with Gaussian error ``sigma = k * max(image side)``.

    With ``k=0`` this is an exact grounding oracle. Because sigma scales with the
    observed image, a zoomed crop gets proportionally smaller error.
    """

    def __init__(self, k: float = 0.05, seed: int = 0):
        self.k = k
        self.rng = np.random.default_rng(seed)

    def reset(self, seed: int) -> None:
        self.rng = np.random.default_rng(seed)

    def generate(self, obs: Observation, n: int, temperature: float = 1.0) -> list[str]:
        target = find_target(obs)
        if target is None:
            center = Point(obs.dims.width // 2, obs.dims.height // 2)
        else:
            center = bbox_center(target.bbox)
        sigma = self.k * max(obs.dims.width, obs.dims.height)
        out = []
        for _ in range(n):
            if sigma > 0:
                dx, dy = self.rng.normal(0.0, sigma, size=2)
            else:
                dx = dy = 0.0
            out.append(_tap_text(_clip_point(center.x + dx, center.y + dy, obs.dims)))
        return out


_APP_FALLBACK = ("Settings", "Contacts", "Notes", "Clock", "Gallery")
_WORDS = ("hello", "test", "Lina", "note", "42", "search")


class UniformRandom:
    """Uniform over the platform's action types, with uniform random parameters."""

    def __init__(self, seed: int = 0, action_types: Optional[Sequence[ActionType]] = None):
        self.rng = np.random.default_rng(seed)
        self.action_types = tuple(action_types) if action_types else None

    def reset(self, seed: int) -> None:
        self.rng = np.random.default_rng(seed)

    def _types(self, platform: Platform) -> list[ActionType]:
        if self.action_types is not None:
            return list(self.action_types)
        return [t for t in ActionType if platform in t.platforms]

    def sample_action(self, obs: Observation) -> Action:
        types = self._types(obs.platform)
        t = types[int(self.rng.integers(len(types)))]
        sig = t.signature.value
        if sig == "point":
            p = Point(int(self.rng.integers(obs.dims.width)), int(self.rng.integers(obs.dims.height)))
            return Action(t, p)
        if sig == "text":
            return Action(t, Text(_WORDS[int(self.rng.integers(len(_WORDS)))]))
        if sig == "direction":
            return Action(t, Direction(DIRECTIONS[int(self.rng.integers(4))]))
        if sig == "hotkeys":
            return Action(t, Hotkeys(("ctrl", "c")))
        if sig == "app_name":
            names = [e.label for e in obs.elements or () if e.label] or list(_APP_FALLBACK)
            return Action(t, AppName(names[int(self.rng.integers(len(names)))]))
        if sig == "reason":
            return Action(t, Reason("done"))
        return Action(t)

    def generate(self, obs: Observation, n: int, temperature: float = 1.0) -> list[str]:
        return [format_candidate(self.sample_action(obs)) for _ in range(n)]


class ScriptedOracle:
    """Replays stored optimal actions keyed by instruction, checking the expected screen.

    ``scripts`` maps an instruction to an ordered list of ``(screen_id, action)``;
    the step index is the number of past actions in the observation's history.
    """

    def __init__(self, scripts: dict[str, Sequence[tuple[str, Action]]]):
        self.scripts = {k: list(v) for k, v in scripts.items()}

    def next_action(self, obs: Observation) -> Action:
        script = self.scripts.get(obs.instruction)
        if script is None:
            raise MissingScript(f"no script for instruction {obs.instruction!r}")
        idx = sum(1 for h in obs.history if not h.startswith("Critic:"))
        if idx >= len(script):
            raise MissingScript(f"script for {obs.instruction!r} has no step {idx}")
        screen, action = script[idx]
        if obs.screen_id is not None and screen != obs.screen_id:
            raise MissingScript(
                f"script for {obs.instruction!r} expects screen {screen!r} at step {idx}, "
                f"got {obs.screen_id!r}"
            )
        return action

    def generate(self, obs: Observation, n: int, temperature: float = 1.0) -> list[str]:
        action = self.next_action(obs)
        text = format_candidate(action, plan=f"follow the script: {serialize_action(action)}")
        return [text] * n


class FixedOutput:
    """Always answers with the same text."""

    def __init__(self, text: str):
        self.text = text

    def generate(self, obs: Observation, n: int, temperature: float = 1.0) -> list[str]:
        return [self.text] * n


def scripted_oracle(task_solutions: dict[str, Sequence[tuple[str, Action]]]) -> ScriptedOracle:
    return ScriptedOracle(task_solutions)


# --------------------------------------------------------------------------- grid softmax


class GridSoftmax:
    """Trainable toy grounder: a tempered softmax over the centers of a G x G grid.

    The grid is laid over a fixed root screen. On a zoomed observation only cells
    whose centers are visible are eligible, and the softmax is renormalized over
    them, so the same logits serve both passes.

    With ``smoothing > 0`` the logits are a separable Gaussian blur (width in
    cells) of the parameters, which gives the policy the spatial generalization
    a coordinate-emitting model has; ``smoothing=0`` uses the parameters as logits.
    """

    def __init__(self, screen: ScreenDims, grid: int = 8, temperature: float = 1.0, seed: int = 0,
                 logits: Optional[np.ndarray] = None, smoothing: float = 0.0):
        if grid < 2:
            raise ValueError("grid must be >= 2")
        if temperature <= 0:
            raise ValueError("temperature must be positive")
        self.screen = screen
        self.grid = grid
        self.temperature = float(temperature)
        self.params = np.zeros(grid * grid) if logits is None else np.array(logits, dtype=np.float64)
        if self.params.shape != (grid * grid,) or not np.all(np.isfinite(self.params)):
            raise ValueError("logits must be finite with shape (grid*grid,)")
        self.rng = np.random.default_rng(seed)
        self.smoothing = float(smoothing)
        idx = np.arange(grid)
        if self.smoothing > 0:
            d = (idx[:, None] - idx[None, :]) / self.smoothing
            self._blur = np.exp(-0.5 * d * d)
        else:
            self._blur = None
        self._xs_1d = (2 * idx + 1) * screen.width // (2 * grid)
        self._ys_1d = (2 * idx + 1) * screen.height // (2 * grid)
        # Row-major: cell = row * grid + col.
        self.cell_x = np.tile(self._xs_1d, grid)
        self.cell_y = np.repeat(self._ys_1d, grid)

    def cell_center(self, cell: int) -> Point:
        return Point(int(self.cell_x[cell]), int(self.cell_y[cell]))

    def _mask(self, obs: Observation) -> np.ndarray:
        if obs.view is None:
            return np.ones(self.params.shape[0], dtype=bool)
        o, d = obs.view.origin, obs.view.dims
        mask = (
            (self.cell_x >= o.x) & (self.cell_x < o.x + d.width)
            & (self.cell_y >= o.y) & (self.cell_y < o.y + d.height)
        )
        if not mask.any():
            raise NoLocation(f"no grid cell center is visible in view {obs.view}")
        return mask

    def logits(self) -> np.ndarray:
        if self._blur is None:
            return self.params
        g = self.params.reshape(self.grid, self.grid)
        return (self._blur @ g @ self._blur.T).ravel()

    def probs(self, obs: Observation) -> np.ndarray:
        return kernels.masked_softmax(self.logits(), self.temperature, self._mask(obs))

    def _origin(self, obs: Observation) -> Point:
        return obs.view.origin if obs.view is not None else Point(0, 0)

    def _cell_of(self, obs: Observation, raw: str) -> int:
        cand = extract_candidate(raw)
        p = cand.action.params
        if not isinstance(p, Point):
            raise NoLocation(f"not a location action: {cand.action}")
        o = self._origin(obs)
        gx, gy = p.x + o.x, p.y + o.y
        col = np.searchsorted(self._xs_1d, gx)
        row = np.searchsorted(self._ys_1d, gy)
        if col >= self.grid or row >= self.grid or self._xs_1d[col] != gx or self._ys_1d[row] != gy:
            raise NoLocation(f"{p} is not a grid cell center")
        return int(row * self.grid + col)

    def sample_cells(self, obs: Observation, n: int) -> np.ndarray:
        p = self.probs(obs)
        return self.rng.choice(p.shape[0], size=n, p=p)

    def generate(self, obs: Observation, n: int, temperature: Optional[float] = None) -> list[str]:
        o = self._origin(obs)
        out = []
        for c in self.sample_cells(obs, n):
            out.append(_tap_text(Point(int(self.cell_x[c]) - o.x, int(self.cell_y[c]) - o.y)))
        return out

    def log_prob(self, obs: Observation, raw: str) -> float:
        try:
            cell = self._cell_of(obs, raw)
        except (ParseError, NoLocation):
            return -math.inf
        p = self.probs(obs)[cell]
        return math.log(p) if p > 0 else -math.inf

    def grad_log_prob(self, obs: Observation, raw: str) -> np.ndarray:
        out = np.zeros_like(self.params)
        self.accumulate_grad(out, obs, [raw], [1.0])
        return out

    def accumulate_grad(self, out: np.ndarray, obs: Observation, raws: Sequence[str], weights) -> None:
        """``out += sum_i w_i * grad log pi(raw_i | obs)`` using the compiled kernel."""
        cells = [self._cell_of(obs, r) for r in raws]
        if self._blur is None:
            kernels.accumulate_logprob_grad(out, self.probs(obs), cells, weights, self.temperature)
            return
        g = np.zeros_like(out)
        kernels.accumulate_logprob_grad(g, self.probs(obs), cells, weights, self.temperature)
        g = g.reshape(self.grid, self.grid)
        out += (self._blur.T @ g @ self._blur).ravel()

    def expected_containment(self, box: BBox) -> float:
        """Probability that a full-screen sample lands inside ``box``."""
        full = Observation(self.screen, "")
        inside = kernels.sparse_rewards(self.cell_x, self.cell_y, box.as_list())
        return float(np.dot(self.probs(full), inside))


# --------------------------------------------------------------------------- zoom-in


@dataclass(frozen=True)
class ZoomResult:
    initial: Point
    refined: Point
    window: CropWindow
    raw: tuple[str, str] = field(default=("", ""))


def _location_of(raw: str) -> Point:
    try:
        cand = extract_candidate(raw)
    except ParseError as e:
        raise NoLocation(f"unparseable output: {e}") from e
    if not cand.action.action_type.is_location:
        raise NoLocation(f"expected a location action, got {cand.action}")
    return cand.action.params


def zoom_in_infer(policy: Policy, obs: Observation, crop_cfg: CropConfig | None = None,
                  temperature: float = 1.0) -> ZoomResult:
    """Predict, crop around the prediction, re-predict on the crop, map back."""
    first = policy.generate(obs, 1, temperature)[0]
    initial = _location_of(first)
    if not obs.dims.contains_point(initial):
        raise NoLocation(f"initial prediction {initial} outside the image")
    window = make_crop(initial, obs.dims, crop_cfg)
    second = policy.generate(crop_observation(obs, window), 1, temperature)[0]
    local = _location_of(second)
    try:
        refined = from_crop_coords(window, local)
    except ValueError as e:
        raise NoLocation(str(e)) from e
    return ZoomResult(initial, refined, window, (first, second))

