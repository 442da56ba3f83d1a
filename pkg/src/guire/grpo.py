"""Group sampling, normalized advantages, online filtering and the policy-gradient step."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from guire.actions import Action, CandidateOutput, ParseError, format_candidate, try_extract
from guire.geometry import BBox, CropConfig, Point, from_crop_coords, make_crop
from guire.policies import Observation, Policy, crop_observation
from guire.rewards import RewardConfig, grounding_reward


class GrpoError(RuntimeError):
    pass


class TooFewSamples(GrpoError, ValueError):
    pass


class NonFiniteGradient(GrpoError, FloatingPointError):
    pass


@dataclass(frozen=True)
class GroupConfig:
    m_nav: int = 32
    m_ground_full: int = 8
    m_ground_crop: int = 4
    epsilon: float = 1e-8

    def __post_init__(self):
        if self.m_nav < 1 or self.m_ground_full < 1:
            raise ValueError("sample counts must be >= 1")
        if self.m_ground_crop < 0:
            raise ValueError("m_ground_crop must be >= 0")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")


@dataclass
class Group:
    """M rewarded candidates for one prompt.

    ``raws`` and ``contexts`` keep each sample as produced, under the observation
    that produced it (full image or crop); ``candidates`` are in full-image
    coordinates. Unparseable samples are kept as their ParseError.
    """

    prompt_id: str
    candidates: list
    rewards: list[float]
    sources: list[str] = field(default_factory=list)
    raws: list[str] = field(default_factory=list)
    contexts: list[Observation] = field(default_factory=list)

    def __post_init__(self):
        if len(self.candidates) != len(self.rewards):
            raise ValueError("candidates and rewards differ in length")

    @property
    def size(self) -> int:
        return len(self.rewards)


def normalize_advantages(rewards: Sequence[float], epsilon: float = 1e-8) -> np.ndarray:
    """``(r - mean(r)) / std(r)`` with population std; all zeros when std < epsilon."""
    r = np.asarray(rewards, dtype=np.float64)
    if r.ndim != 1 or r.shape[0] < 2:
        raise TooFewSamples(f"need at least 2 rewards, got {r.shape[0] if r.ndim else 0}")
    centered = r - r.mean()
    std = math.sqrt(float(np.mean(centered * centered)))
    if std < epsilon:
        return np.zeros_like(r)
    return centered / std


def is_degenerate(rewards: Sequence[float]) -> bool:
    return len(set(rewards)) < 2


def filter_degenerate_groups(groups: Sequence[Group]) -> tuple[list[Group], int]:
    kept = [g for g in groups if not is_degenerate(g.rewards)]
    return kept, len(groups) - len(kept)


@dataclass(frozen=True)
class StepStats:
    mean_reward: float
    grad_norm: float


def policy_gradient_update(policy, group: Group, advantages, lr: float) -> StepStats:
    """Ascend ``lr * sum_i A_i * grad log pi(z_i | prompt)``.

    The gradient is accumulated per observation context. A non-finite gradient
    raises NonFiniteGradient and leaves the parameters untouched.
    """
    adv = np.asarray(advantages, dtype=np.float64)
    if adv.shape[0] != group.size:
        raise ValueError("advantages do not match the group")
    grad = np.zeros_like(policy.params)
    by_ctx: dict[int, tuple[Observation, list[str], list[float]]] = {}
    for raw, obs, a in zip(group.raws, group.contexts, adv):
        if a == 0.0:
            continue
        slot = by_ctx.setdefault(id(obs), (obs, [], []))
        slot[1].append(raw)
        slot[2].append(float(a))
    # non-finite values are caught below, so numpy need not warn about them
    with np.errstate(over="ignore", invalid="ignore"):
        for obs, raws, weights in by_ctx.values():
            if hasattr(policy, "accumulate_grad"):
                policy.accumulate_grad(grad, obs, raws, weights)
            else:
                for raw, w in zip(raws, weights):
                    grad += w * policy.grad_log_prob(obs, raw)
    if not np.all(np.isfinite(grad)):
        raise NonFiniteGradient("gradient has non-finite entries; step skipped")
    if lr != 0.0:
        with np.errstate(over="ignore", invalid="ignore"):
            updated = policy.params + lr * grad
        if not np.all(np.isfinite(updated)):
            raise NonFiniteGradient("update overflows the parameters; step skipped")
        policy.params[...] = updated
    return StepStats(float(np.mean(group.rewards)), float(np.linalg.norm(grad)))


def _remap_to_full(window, cand):
    if isinstance(cand, ParseError) or not cand.action.action_type.is_location:
        return cand
    p = from_crop_coords(window, cand.action.params)
    action = Action(cand.action.action_type, p)
    return CandidateOutput(action, format_candidate(action, cand.plan, cand.think, cand.reflect),
                           cand.plan, cand.think, cand.reflect)


def assemble_grounding_group(
    policy: Policy,
    obs: Observation,
    gt_box: Optional[BBox],
    cfg: GroupConfig | None = None,
    crop_cfg: CropConfig | None = None,
    reward_cfg: RewardConfig | None = None,
    prompt_id: str = "",
) -> Group:
    """Full-image samples, then samples on a crop around the best one, in one group."""
    cfg = cfg or GroupConfig()
    reward_cfg = reward_cfg or RewardConfig(location_mode="sparse")
    raws = policy.generate(obs, cfg.m_ground_full, 1.0)
    cands = [try_extract(r) for r in raws]
    rewards = [grounding_reward(c, gt_box, reward_cfg) if gt_box else 0.0 for c in cands]
    group = Group(prompt_id, list(cands), rewards, ["full"] * len(cands), list(raws), [obs] * len(cands))
    if cfg.m_ground_crop == 0:
        return group

    locs = [i for i, c in enumerate(cands)
            if not isinstance(c, ParseError) and c.action.action_type.is_location
            and obs.dims.contains_point(c.action.params)]
    if gt_box is not None and locs:
        best = max(locs, key=lambda i: (rewards[i], -i))
        center = cands[best].action.params
    elif locs:
        center = cands[locs[0]].action.params
    else:
        center = Point(obs.dims.width // 2, obs.dims.height // 2)
    window = make_crop(center, obs.dims, crop_cfg)
    crop_obs = crop_observation(obs, window)
    craws = policy.generate(crop_obs, cfg.m_ground_crop, 1.0)
    for raw in craws:
        cand = _remap_to_full(window, try_extract(raw))
        group.candidates.append(cand)
        group.rewards.append(grounding_reward(cand, gt_box, reward_cfg) if gt_box else 0.0)
        group.sources.append("crop")
        group.raws.append(raw)
        group.contexts.append(crop_obs)
    return group


# --------------------------------------------------------------------------- toy grounding RL


@dataclass(frozen=True)
class GroundTrainConfig:
    grid: int = 8
    steps: int = 500
    seed: int = 0
    m_full: int = 8
    m_crop: int = 4
    lr: float = 0.5
    mode: str = "sparse"
    lam: float = 0.5
    screen: tuple[int, int] = (800, 800)
    target_size: Optional[tuple[int, int]] = None
    batch: int = 1
    temperature: float = 1.0
    crop_fraction: float = 0.25
    crop_min_px: int = 200
    smoothing: float = 0.0


@dataclass
class GroundTrainResult:
    records: list[dict]
    target: BBox
    policy: object
    containment: list[float]

    def steps_to(self, mark: float) -> Optional[int]:
        """First step whose post-update expected containment reaches ``mark``."""
        for i, c in enumerate(self.containment):
            if c >= mark:
                return i
        return None


def toy_target(policy, cfg: GroundTrainConfig, rng: np.random.Generator) -> BBox:
    """A target box centered on a random grid cell center, sized to contain only that center."""
    from guire.geometry import ScreenDims

    cell = int(rng.integers(policy.params.shape[0]))
    c = policy.cell_center(cell)
    screen = ScreenDims(*cfg.screen)
    if cfg.target_size is None:
        tw = screen.width // cfg.grid - 2
        th = screen.height // cfg.grid - 2
    else:
        tw, th = cfg.target_size
    x0 = min(max(c.x - tw // 2, 0), screen.width - tw)
    y0 = min(max(c.y - th // 2, 0), screen.height - th)
    return BBox(x0, y0, x0 + tw, y0 + th)


def train_grounding(cfg: GroundTrainConfig, on_step=None) -> GroundTrainResult:
    """GRPO on a toy grounding prompt with a GridSoftmax policy.

    Step 0 reports the initial policy without updating it; steps 1..N each sample
    ``batch`` groups (full image + zoomed crop), filter degenerate groups and
    apply one policy-gradient update per kept group.
    """
    from guire.geometry import ScreenDims
    from guire.policies import GridSoftmax

    seeds = np.random.SeedSequence(cfg.seed).spawn(2)
    screen = ScreenDims(*cfg.screen)
    policy = GridSoftmax(screen, cfg.grid, cfg.temperature, seed=int(seeds[0].generate_state(1)[0]),
                         smoothing=cfg.smoothing)
    target = toy_target(policy, cfg, np.random.default_rng(seeds[1]))
    obs = Observation(screen, "tap the target")
    gcfg = GroupConfig(m_ground_full=cfg.m_full, m_ground_crop=cfg.m_crop)
    crop_cfg = CropConfig(cfg.crop_fraction, cfg.crop_min_px)
    reward_cfg = RewardConfig(lam=cfg.lam, location_mode=cfg.mode)

    records = []
    containment = [policy.expected_containment(target)]
    first = assemble_grounding_group(policy, obs, target, gcfg, crop_cfg, reward_cfg, "toy")
    records.append({"step": 0, "mean_reward": float(np.mean(first.rewards)),
                    "kept_groups": 0, "dropped_groups": 0, "grad_norm": 0.0})
    if on_step:
        on_step(records[-1])
    for step in range(1, cfg.steps + 1):
        groups = [assemble_grounding_group(policy, obs, target, gcfg, crop_cfg, reward_cfg, "toy")
                  for _ in range(cfg.batch)]
        kept, dropped = filter_degenerate_groups(groups)
        norms = []
        for g in kept:
            adv = normalize_advantages(g.rewards, gcfg.epsilon)
            norms.append(policy_gradient_update(policy, g, adv, cfg.lr).grad_norm)
        containment.append(policy.expected_containment(target))
        records.append({
            "step": step,
            "mean_reward": float(np.mean([r for g in groups for r in g.rewards])),
            "kept_groups": len(kept),
            "dropped_groups": dropped,
            "grad_norm": float(np.sqrt(np.sum(np.square(norms)))) if norms else 0.0,
        })
        if on_step:
            on_step(records[-1])
    return GroundTrainResult(records, target, policy, containment)
