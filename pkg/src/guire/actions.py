"""Unified GUI action space and its function-call text form.

Actions are written as calls, e.g. ``tap(x=120, y=340)`` or
``textentry(texts="hello")``. A model output (a *candidate*) may carry
``Plan:``, ``Think:`` and ``Reflect:`` sections before its ``Action:`` line.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from typing import Optional, Union

from guire.geometry import GeometryError, Point


class Platform(str, enum.Enum):
    MOBILE = "mobile"
    DESKTOP = "desktop"
    WEB = "web"


class Signature(str, enum.Enum):
    POINT = "point"
    TEXT = "text"
    DIRECTION = "direction"
    HOTKEYS = "hotkeys"
    APP_NAME = "app_name"
    REASON = "reason"
    NONE = "none"


ALL = frozenset(Platform)
DESKTOP_WEB = frozenset({Platform.DESKTOP, Platform.WEB})
MOBILE = frozenset({Platform.MOBILE})


class ActionType(str, enum.Enum):
    TAP = "tap"
    MOVE_TO = "move_to"
    DRAG_TO = "drag_to"
    LOCATE = "locate"
    TEXTENTRY = "textentry"
    SWIPE = "swipe"
    TERMINATE = "terminate"
    PRESS_ENTER = "press_enter"
    PRESS_HOTKEY = "press_hotkey"
    RIGHT_CLICK = "right_click"
    DOUBLE_CLICK = "double_click"
    LONG_PRESS = "long_press"
    NAVIGATE_HOME = "navigate_home"
    OPEN_APP = "open_app"
    NAVIGATE_BACK = "navigate_back"

    @property
    def signature(self) -> Signature:
        return REGISTRY[self][1]

    @property
    def platforms(self) -> frozenset:
        return REGISTRY[self][0]

    @property
    def is_location(self) -> bool:
        return self.signature is Signature.POINT


# One row per action in the unified action table: (platforms, parameter signature).
REGISTRY: dict[ActionType, tuple[frozenset, Signature]] = {
    ActionType.TAP: (ALL, Signature.POINT),
    ActionType.MOVE_TO: (ALL, Signature.POINT),
    ActionType.DRAG_TO: (ALL, Signature.POINT),
    ActionType.LOCATE: (ALL, Signature.POINT),
    ActionType.TEXTENTRY: (ALL, Signature.TEXT),
    ActionType.SWIPE: (ALL, Signature.DIRECTION),
    ActionType.TERMINATE: (ALL, Signature.REASON),
    ActionType.PRESS_ENTER: (ALL, Signature.NONE),
    ActionType.PRESS_HOTKEY: (DESKTOP_WEB, Signature.HOTKEYS),
    ActionType.RIGHT_CLICK: (DESKTOP_WEB, Signature.POINT),
    ActionType.DOUBLE_CLICK: (DESKTOP_WEB, Signature.POINT),
    ActionType.LONG_PRESS: (MOBILE, Signature.POINT),
    ActionType.NAVIGATE_HOME: (MOBILE, Signature.NONE),
    ActionType.OPEN_APP: (MOBILE, Signature.APP_NAME),
    ActionType.NAVIGATE_BACK: (MOBILE, Signature.NONE),
}

DIRECTIONS = ("up", "down", "left", "right")


@dataclass(frozen=True)
class Text:
    value: str


@dataclass(frozen=True)
class Direction:
    value: str

    def __post_init__(self):
        if self.value not in DIRECTIONS:
            raise BadSignature(f"direction must be one of {DIRECTIONS}, got {self.value!r}")


@dataclass(frozen=True)
class Hotkeys:
    keys: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "keys", tuple(self.keys))
        if not self.keys or any(not k or "+" in k for k in self.keys):
            raise BadSignature(f"hotkeys must be non-empty key names without '+': {self.keys!r}")

    @classmethod
    def parse(cls, s: str) -> "Hotkeys":
        return cls(tuple(s.split("+")))

    def joined(self) -> str:
        return "+".join(self.keys)


@dataclass(frozen=True)
class AppName:
    name: str


@dataclass(frozen=True)
class Reason:
    text: str


ActionParams = Union[Point, Text, Direction, Hotkeys, AppName, Reason, None]

_PARAM_CLASS = {
    Signature.POINT: Point,
    Signature.TEXT: Text,
    Signature.DIRECTION: Direction,
    Signature.HOTKEYS: Hotkeys,
    Signature.APP_NAME: AppName,
    Signature.REASON: Reason,
}

# Argument keys, in canonical order, per signature.
SIGNATURE_KEYS: dict[Signature, tuple[str, ...]] = {
    Signature.POINT: ("x", "y"),
    Signature.TEXT: ("texts",),
    Signature.DIRECTION: ("direction",),
    Signature.HOTKEYS: ("hotkeys",),
    Signature.APP_NAME: ("app_name",),
    Signature.REASON: ("reason",),
    Signature.NONE: (),
}


class ParseError(ValueError):
    pass


class ValidationError(ValueError):
    pass


class UnknownAction(ParseError):
    pass


class ActionSyntaxError(ParseError):
    def __init__(self, msg: str, pos: int = -1):
        super().__init__(f"{msg} (at offset {pos})" if pos >= 0 else msg)
        self.pos = pos


class BadSignature(ParseError, ValidationError):
    def __init__(self, msg: str, action_type: Optional[ActionType] = None):
        super().__init__(msg)
        self.action_type = action_type


class NoAction(ParseError):
    def __init__(self, msg: str, last_error: Optional[ParseError] = None):
        super().__init__(msg)
        self.last_error = last_error


class PlatformMismatch(ValidationError):
    pass


def _params_match(sig: Signature, params) -> bool:
    if sig is Signature.NONE:
        return params is None
    return isinstance(params, _PARAM_CLASS[sig])


@dataclass(frozen=True)
class Action:
    action_type: ActionType
    params: ActionParams = None

    def __post_init__(self):
        object.__setattr__(self, "action_type", ActionType(self.action_type))
        sig = self.action_type.signature
        if not _params_match(sig, self.params):
            raise BadSignature(
                f"{self.action_type.value} expects {sig.value} parameters, got {self.params!r}",
                self.action_type,
            )

    def __str__(self) -> str:
        return serialize_action(self)


@dataclass(frozen=True)
class CandidateOutput:
    action: Action
    raw: str
    plan: Optional[str] = None
    think: Optional[str] = None
    reflect: Optional[str] = None


# --------------------------------------------------------------------------- grammar

_IDENT = re.compile(r"[a-z_][a-z0-9_]*")
_WS = " \t\r\n"


class _Scanner:
    def __init__(self, text: str, pos: int = 0):
        self.text = text
        self.pos = pos

    def ws(self) -> None:
        n = len(self.text)
        while self.pos < n and self.text[self.pos] in _WS:
            self.pos += 1

    def peek(self) -> str:
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def expect(self, ch: str) -> None:
        if self.peek() != ch:
            found = self.peek() or "end of input"
            raise ActionSyntaxError(f"expected {ch!r}, found {found!r}", self.pos)
        self.pos += 1

    def ident(self, what: str) -> str:
        m = _IDENT.match(self.text, self.pos)
        if not m:
            raise ActionSyntaxError(f"expected {what}", self.pos)
        self.pos = m.end()
        return m.group()

    def value(self):
        ch = self.peek()
        if ch == '"':
            return self._string()
        if ch.isdigit() and ch.isascii():
            start = self.pos
            n = len(self.text)
            while self.pos < n and self.text[self.pos].isascii() and self.text[self.pos].isdigit():
                self.pos += 1
            nxt = self.peek()
            if nxt == "." or nxt.isalnum() or nxt == "_":
                raise ActionSyntaxError("only plain non-negative integers are allowed", self.pos)
            return int(self.text[start : self.pos])
        raise ActionSyntaxError("expected an integer or a double-quoted string", self.pos)

    def _string(self) -> str:
        self.pos += 1
        out = []
        text, n = self.text, len(self.text)
        while True:
            if self.pos >= n:
                raise ActionSyntaxError("unterminated string", self.pos)
            ch = text[self.pos]
            if ch == '"':
                self.pos += 1
                return "".join(out)
            if ch == "\\":
                esc = text[self.pos + 1 : self.pos + 2]
                if esc not in ('"', "\\"):
                    raise ActionSyntaxError(f"invalid escape \\{esc}", self.pos)
                out.append(esc)
                self.pos += 2
                continue
            out.append(ch)
            self.pos += 1


def _build(name: str, args: dict) -> Action:
    try:
        action_type = ActionType(name)
    except ValueError:
        raise UnknownAction(f"unknown action {name!r}") from None
    sig = action_type.signature
    keys = SIGNATURE_KEYS[sig]
    if set(args) != set(keys):
        raise BadSignature(
            f"{name} takes ({', '.join(keys)}), got ({', '.join(args)})", action_type
        )
    if sig is Signature.NONE:
        return Action(action_type)
    if sig is Signature.POINT:
        if not all(isinstance(args[k], int) for k in keys):
            raise BadSignature(f"{name}: x and y must be integers", action_type)
        return Action(action_type, Point(args["x"], args["y"]))
    value = args[keys[0]]
    if not isinstance(value, str):
        raise BadSignature(f"{name}: {keys[0]} must be a string", action_type)
    try:
        if sig is Signature.HOTKEYS:
            params = Hotkeys.parse(value)
        else:
            params = _PARAM_CLASS[sig](value)
    except BadSignature as e:
        raise BadSignature(str(e), action_type) from None
    return Action(action_type, params)


def _parse_call(text: str, pos: int) -> tuple[Action, int]:
    """Parse one call starting at ``pos``; returns the action and the end offset."""
    sc = _Scanner(text, pos)
    sc.ws()
    name = sc.ident("action name")
    sc.ws()
    sc.expect("(")
    sc.ws()
    args: dict = {}
    dup = None
    if sc.peek() != ")":
        while True:
            key = sc.ident("argument name")
            sc.ws()
            sc.expect("=")
            sc.ws()
            val = sc.value()
            if key in args:
                dup = key
            args[key] = val
            sc.ws()
            if sc.peek() == ",":
                sc.pos += 1
                sc.ws()
                continue
            break
    sc.expect(")")
    if dup is not None:
        at = ActionType(name) if name in ActionType._value2member_map_ else None
        if at is None:
            raise UnknownAction(f"unknown action {name!r}")
        raise BadSignature(f"duplicate argument {dup!r}", at)
    return _build(name, args), sc.pos


def parse_action(text: str) -> Action:
    """Parse exactly one action call (surrounding whitespace allowed)."""
    action, end = _parse_call(text, 0)
    rest = text[end:]
    if rest.strip(_WS):
        raise ActionSyntaxError("trailing characters after action call", end)
    return action


def _quote(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def serialize_action(a: Action) -> str:
    sig = a.action_type.signature
    p = a.params
    if sig is Signature.NONE:
        args = ""
    elif sig is Signature.POINT:
        args = f"x={p.x}, y={p.y}"
    elif sig is Signature.TEXT:
        args = f"texts={_quote(p.value)}"
    elif sig is Signature.DIRECTION:
        args = f"direction={_quote(p.value)}"
    elif sig is Signature.HOTKEYS:
        args = f"hotkeys={_quote(p.joined())}"
    elif sig is Signature.APP_NAME:
        args = f"app_name={_quote(p.name)}"
    else:
        args = f"reason={_quote(p.text)}"
    return f"{a.action_type.value}({args})"


def validate_action(a: Action, platform: Platform | str) -> None:
    """Raise PlatformMismatch / BadSignature unless ``a`` is legal on ``platform``."""
    platform = Platform(platform)
    if not _params_match(a.action_type.signature, a.params):
        raise BadSignature(f"bad parameters for {a.action_type.value}", a.action_type)
    if platform not in a.action_type.platforms:
        allowed = ", ".join(sorted(p.value for p in a.action_type.platforms))
        raise PlatformMismatch(
            f"{a.action_type.value} is not available on {platform.value} (only {allowed})"
        )


# --------------------------------------------------------------------------- candidates

SECTION_MARKERS = ("Plan", "Think", "Reflect", "Action")
_MARKER_RE = re.compile(r"^[ \t]*(Plan|Think|Reflect|Action):[ \t]?", re.MULTILINE)
_CALL_START = re.compile(r"(?<![A-Za-z0-9_])[a-z_][a-z0-9_]*[ \t\r\n]*\(")


def extract_sections(raw: str) -> dict[str, str]:
    """Text of each ``Marker:`` section up to the next marker line (last occurrence wins)."""
    out: dict[str, str] = {}
    matches = list(_MARKER_RE.finditer(raw))
    for i, m in enumerate(matches):
        end = matches[i + 1].start() if i + 1 < len(matches) else len(raw)
        out[m.group(1).lower()] = raw[m.end() : end].strip()
    return out


def find_actions(text: str) -> list[Action]:
    """All well-formed, non-overlapping action calls in ``text``, left to right."""
    found, _ = _scan_actions(text)
    return found


def _scan_actions(text: str) -> tuple[list[Action], Optional[ParseError]]:
    found = []
    last_err = None
    pos = 0
    while True:
        m = _CALL_START.search(text, pos)
        if not m:
            break
        try:
            action, end = _parse_call(text, m.start())
        except ParseError as e:
            last_err = e
            pos = m.start() + 1
            continue
        found.append(action)
        pos = end
    return found, last_err


def extract_candidate(raw: str) -> CandidateOutput:
    """Structured candidate from raw model text; the last well-formed call is the action."""
    actions, last_err = _scan_actions(raw)
    if not actions:
        raise NoAction("no well-formed action call in output", last_err)
    sections = extract_sections(raw)
    return CandidateOutput(
        action=actions[-1],
        raw=raw,
        plan=sections.get("plan") or None,
        think=sections.get("think") or None,
        reflect=sections.get("reflect") or None,
    )


def format_candidate(
    action: Action,
    plan: Optional[str] = None,
    think: Optional[str] = None,
    reflect: Optional[str] = None,
) -> str:
    lines = []
    for marker, body in (("Plan", plan), ("Think", think), ("Reflect", reflect)):
        if body:
            lines.append(f"{marker}: {body}")
    lines.append(f"Action: {serialize_action(action)}")
    return "\n".join(lines)


def try_extract(raw: str) -> CandidateOutput | ParseError:
    try:
        return extract_candidate(raw)
    except ParseError as e:
        return e


__all__ = [
    "Action",
    "ActionParams",
    "ActionSyntaxError",
    "ActionType",
    "AppName",
    "BadSignature",
    "CandidateOutput",
    "Direction",
    "GeometryError",
    "Hotkeys",
    "NoAction",
    "ParseError",
    "Platform",
    "PlatformMismatch",
    "Point",
    "REGISTRY",
    "Reason",
    "Signature",
    "Text",
    "UnknownAction",
    "ValidationError",
    "extract_candidate",
    "extract_sections",
    "find_actions",
    "format_candidate",
    "parse_action",
    "serialize_action",
    "try_extract",
    "validate_action",
]
