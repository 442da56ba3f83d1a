"""Verifiable rewards for GUI actions.

The total reward of a candidate is ``f_type + f_param``:

* ``f_type`` is 2 for a correct type whose ground truth has no parameters,
  1 for a correct type whose ground truth has parameters, and 0 otherwise.
* ``f_param`` is exact string match for text-like parameters, and either
  boundary-inclusive containment (sparse) or the decaying, box-normalized L1
  distance to the element center (dense) for location parameters.
"""

from __future__ import annotations

import unicodedata
from dataclasses import dataclass, field
from typing import Optional, Union

from guire.actions import (
    ActionType,
    AppName,
    BadSignature,
    CandidateOutput,
    Direction,
    Hotkeys,
    NoAction,
    ParseError,
    Reason,
    Signature,
    Text,
    extract_candidate,
)
from guire.geometry import BBox, Point, bbox_center, contains


class RewardError(ValueError):
    pass


class DegenerateBox(RewardError):
    pass


@dataclass(frozen=True)
class Location:
    bbox: BBox


GroundTruthParams = Union[Text, Direction, Hotkeys, AppName, Reason, Location, None]

_GT_CLASS = {
    Signature.POINT: Location,
    Signature.TEXT: Text,
    Signature.DIRECTION: Direction,
    Signature.HOTKEYS: Hotkeys,
    Signature.APP_NAME: AppName,
    Signature.REASON: Reason,
}


@dataclass(frozen=True)
class GroundTruth:
    action_type: ActionType
    params: GroundTruthParams = None

    def __post_init__(self):
        object.__setattr__(self, "action_type", ActionType(self.action_type))
        sig = self.action_type.signature
        if sig is Signature.NONE:
            ok = self.params is None
        else:
            ok = isinstance(self.params, _GT_CLASS[sig])
        if not ok:
            raise RewardError(
                f"ground truth for {self.action_type.value} needs {sig.value} parameters, "
                f"got {self.params!r}"
            )

    @property
    def has_params(self) -> bool:
        return self.params is not None


@dataclass(frozen=True)
class RewardConfig:
    lam: float = 0.5
    location_mode: str = "dense"
    normalize_text: bool = True

    def __post_init__(self):
        # lam == 0 is allowed: it turns the dense reward into a constant 1 (a CLI control).
        if not self.lam >= 0:
            raise RewardError(f"lambda must be >= 0, got {self.lam}")
        if self.location_mode not in ("sparse", "dense"):
            raise RewardError(f"location_mode must be 'sparse' or 'dense', got {self.location_mode!r}")


@dataclass(frozen=True)
class RewardBreakdown:
    f_type: int
    f_param: float
    total: float
    diagnostics: tuple[str, ...] = field(default=())

    def as_dict(self) -> dict:
        return {
            "f_type": self.f_type,
            "f_param": self.f_param,
            "total": self.total,
            "diagnostics": list(self.diagnostics),
        }


ZERO = RewardBreakdown(0, 0.0, 0.0)


def type_reward(tau: ActionType, gt: GroundTruth) -> int:
    if ActionType(tau) is not gt.action_type:
        return 0
    return 1 if gt.has_params else 2


def normalize_string(s: str) -> str:
    return unicodedata.normalize("NFC", s).strip()


def _string_of(p) -> Optional[str]:
    if isinstance(p, Text):
        return p.value
    if isinstance(p, Direction):
        return p.value
    if isinstance(p, Hotkeys):
        return p.joined()
    if isinstance(p, AppName):
        return p.name
    if isinstance(p, Reason):
        return p.text
    return None


def string_param_reward(pred, gt: GroundTruth, normalize: bool = True) -> int:
    if type(pred) is not type(gt.params):
        return 0
    a, b = _string_of(pred), _string_of(gt.params)
    if a is None or b is None:
        return 0
    if normalize:
        a, b = normalize_string(a), normalize_string(b)
    return int(a == b)


def sparse_location_reward(pred: Point, gt_box: BBox) -> int:
    return int(contains(gt_box, pred))


def dense_location_reward(pred: Point, gt_box: BBox, lam: float = 0.5) -> float:
    w = gt_box.x_max - gt_box.x_min
    h = gt_box.y_max - gt_box.y_min
    if w == 0 or h == 0:
        raise DegenerateBox(f"box {gt_box} has zero width or height")
    c = bbox_center(gt_box)
    # The batched kernels evaluate the same expression in the same order.
    value = 1.0 - lam * (abs(pred.x - c.x) / w + abs(pred.y - c.y) / h)
    return value if value > 0.0 else 0.0


def location_reward(pred: Point, gt_box: BBox, cfg: RewardConfig) -> float:
    if cfg.location_mode == "sparse":
        return float(sparse_location_reward(pred, gt_box))
    return dense_location_reward(pred, gt_box, cfg.lam)


def _signature_error(err: ParseError) -> Optional[BadSignature]:
    if isinstance(err, BadSignature):
        return err
    if isinstance(err, NoAction) and isinstance(err.last_error, BadSignature):
        return err.last_error
    return None


def total_reward(
    cand: CandidateOutput | ParseError | str,
    gt: GroundTruth,
    cfg: RewardConfig | None = None,
) -> RewardBreakdown:
    """Reward for one candidate; total over every input, malformed output scores 0."""
    cfg = cfg or RewardConfig()
    if isinstance(cand, str):
        try:
            cand = extract_candidate(cand)
        except ParseError as e:
            cand = e
    if isinstance(cand, ParseError):
        bad = _signature_error(cand)
        # A nullary ground truth only conditions on the type, so stray params keep f_type.
        if bad is not None and bad.action_type is gt.action_type and not gt.has_params:
            return RewardBreakdown(2, 0.0, 2.0, ("extraneous_params",))
        return RewardBreakdown(0, 0.0, 0.0, (f"parse_error:{type(cand).__name__}",))

    action = cand.action
    f_type = type_reward(action.action_type, gt)
    if f_type == 0 or not gt.has_params:
        return RewardBreakdown(f_type, 0.0, float(f_type))
    if isinstance(gt.params, Location):
        f_param = location_reward(action.params, gt.params.bbox, cfg)
    else:
        f_param = float(string_param_reward(action.params, gt, cfg.normalize_text))
    return RewardBreakdown(f_type, f_param, f_type + f_param)


def grounding_reward(cand: CandidateOutput | ParseError, gt_box: BBox, cfg: RewardConfig | None = None) -> float:
    """Location-only reward used for grounding RL; non-location outputs score 0."""
    cfg = cfg or RewardConfig(location_mode="sparse")
    if isinstance(cand, ParseError) or not cand.action.action_type.is_location:
        return 0.0
    return location_reward(cand.action.params, gt_box, cfg)


_GT_KEYS = {
    Signature.TEXT: ("texts", Text),
    Signature.DIRECTION: ("direction", Direction),
    Signature.HOTKEYS: ("hotkeys", Hotkeys.parse),
    Signature.APP_NAME: ("app_name", AppName),
    Signature.REASON: ("reason", Reason),
}


def ground_truth_from_dict(d: dict) -> GroundTruth:
    """Build a GroundTruth from ``{"action_type": ..., <param key>: ...}``; boxes use ``bbox``."""
    try:
        at = ActionType(d["action_type"])
    except (KeyError, ValueError):
        raise RewardError(f"unknown or missing action_type: {d.get('action_type')!r}") from None
    sig = at.signature
    if sig is Signature.NONE:
        return GroundTruth(at)
    if sig is Signature.POINT:
        if "bbox" not in d:
            raise RewardError(f"{at.value} ground truth needs a bbox")
        return GroundTruth(at, Location(BBox.from_list(d["bbox"])))
    key, make = _GT_KEYS[sig]
    if key not in d:
        raise RewardError(f"{at.value} ground truth needs {key!r}")
    try:
        return GroundTruth(at, make(d[key]))
    except BadSignature as e:
        raise RewardError(str(e)) from None
