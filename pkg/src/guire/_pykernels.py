"""Numpy implementations of the hot kernels (fallback when the extension is absent)."""

from __future__ import annotations

import numpy as np


def _center(lo: int, hi: int) -> int:
    q, r = divmod(lo + hi, 2)
    if r and q % 2:
        q += 1
    return q


def dense_rewards(xs, ys, box, lam: float) -> np.ndarray:
    x0, y0, x1, y1 = (int(v) for v in box)
    w, h = x1 - x0, y1 - y0
    cx, cy = _center(x0, x1), _center(y0, y1)
    xs = np.asarray(xs, dtype=np.int64)
    ys = np.asarray(ys, dtype=np.int64)
    v = 1.0 - lam * (np.abs(xs - cx) / w + np.abs(ys - cy) / h)
    return np.where(v > 0.0, v, 0.0)


def sparse_rewards(xs, ys, box) -> np.ndarray:
    x0, y0, x1, y1 = (int(v) for v in box)
    xs = np.asarray(xs, dtype=np.int64)
    ys = np.asarray(ys, dtype=np.int64)
    inside = (xs >= x0) & (xs <= x1) & (ys >= y0) & (ys <= y1)
    return inside.astype(np.float64)


def masked_softmax(logits, temperature: float, mask) -> np.ndarray:
    logits = np.asarray(logits, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    z = np.where(mask, logits / temperature, -np.inf)
    z = z - z[mask].max()
    e = np.where(mask, np.exp(z), 0.0)
    return e / e.sum()


def accumulate_logprob_grad(out: np.ndarray, probs, cells, weights, temperature: float) -> None:
    """``out += sum_i w_i * d log p(cell_i) / d logits`` for a tempered softmax."""
    probs = np.asarray(probs, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    cells = np.asarray(cells, dtype=np.int64)
    np.add.at(out, cells, weights / temperature)
    out -= (weights.sum() / temperature) * probs
