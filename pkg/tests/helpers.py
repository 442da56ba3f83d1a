"""Random generators shared by the fuzz-style tests."""

from __future__ import annotations

import networkx as nx
import numpy as np

from guire.actions import (
    DIRECTIONS,
    Action,
    ActionType,
    AppName,
    Direction,
    Hotkeys,
    Reason,
    Signature,
    Text,
)
from guire.geometry import Point

_ALPHABET = list('abcXYZ019 _-.,;:()[]{}="\\\'\n\t+#/é漢🙂')


def random_string(rng: np.random.Generator, max_len: int = 12, allow_plus: bool = True) -> str:
    n = int(rng.integers(0, max_len + 1))
    chars = _ALPHABET if allow_plus else [c for c in _ALPHABET if c != "+"]
    return "".join(chars[int(i)] for i in rng.integers(0, len(chars), n))


def random_action(rng: np.random.Generator, action_type: ActionType | None = None) -> Action:
    types = list(ActionType)
    t = action_type or types[int(rng.integers(len(types)))]
    sig = t.signature
    if sig is Signature.NONE:
        return Action(t)
    if sig is Signature.POINT:
        hi = 10 ** int(rng.integers(1, 7))
        return Action(t, Point(int(rng.integers(hi)), int(rng.integers(hi))))
    if sig is Signature.TEXT:
        return Action(t, Text(random_string(rng)))
    if sig is Signature.DIRECTION:
        return Action(t, Direction(DIRECTIONS[int(rng.integers(4))]))
    if sig is Signature.HOTKEYS:
        keys = []
        for _ in range(int(rng.integers(1, 4))):
            k = random_string(rng, 5, allow_plus=False) or "k"
            keys.append(k)
        return Action(t, Hotkeys(tuple(keys)))
    if sig is Signature.APP_NAME:
        return Action(t, AppName(random_string(rng)))
    return Action(t, Reason(random_string(rng)))


_MUTATION_CHARS = list('()",=\\ xy0123456789abc_.-+\n')


def mutate(s: str, rng: np.random.Generator) -> str:
    """Insert, delete, replace or truncate a few characters."""
    chars = list(s)
    for _ in range(int(rng.integers(1, 4))):
        op = int(rng.integers(4))
        i = int(rng.integers(len(chars) + 1))
        c = _MUTATION_CHARS[int(rng.integers(len(_MUTATION_CHARS)))]
        if op == 0:
            chars.insert(i, c)
        elif op == 1 and chars:
            del chars[min(i, len(chars) - 1)]
        elif op == 2 and chars:
            chars[min(i, len(chars) - 1)] = c
        else:
            chars = chars[:i]
    return "".join(chars)


def screen_graph(doc) -> nx.DiGraph:
    """Independent screen-level graph straight from the document."""
    g = nx.DiGraph()
    ids = [s["id"] for s in doc["screens"]]
    g.add_nodes_from(ids)
    for t in doc["transitions"]:
        sources = ids if t["screen"] == "*" else [t["screen"]]
        for s in sources:
            if s != t["target"]:
                g.add_edge(s, t["target"])
    return g
