"""Boolean and quantitative (robustness) semantics over discrete time.

Intervals ``[a, b]`` are inclusive step offsets. Windows that run past the
last index ``T`` are clipped to ``T``; a window starting beyond ``T``
collapses to ``{T}``.

Two independent evaluators live here on purpose: ``eval_bool`` is a
memoised scalar recursion over explicit index sets, while ``robustness`` /
``robustness_batch`` evaluate whole signals with vectorised numpy windows.
Tests cross-check one against the other.
"""
from __future__ import annotations

import numpy as np

from .ast import (
    Always, And, Ap, Eventually, Not, Or, Polarity, Predicate, Shape, StlExpr,
    Top, Until, children,
)
from .signal import Trajectory


class HorizonError(ValueError):
    pass


def horizon(phi: StlExpr) -> int:
    """Largest time index that evaluating ``phi`` at t=0 may read."""
    if isinstance(phi, (Top, Ap)):
        return 0
    if isinstance(phi, Not):
        return horizon(phi.child)
    if isinstance(phi, (And, Or)):
        return max(horizon(c) for c in phi.children)
    if isinstance(phi, (Eventually, Always)):
        return phi.b + horizon(phi.child)
    if isinstance(phi, Until):
        return phi.b + max(horizon(phi.left), horizon(phi.right))
    raise TypeError(f"not an STL node: {phi!r}")


def _as_states(s) -> np.ndarray:
    if isinstance(s, Trajectory):
        return s.states
    arr = np.asarray(s, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"expected a (T+1, n) state matrix, got shape {arr.shape}")
    return arr


def _check_time(T: int, t: int, phi: StlExpr, strict: bool):
    if not 0 <= t <= T:
        raise HorizonError(f"evaluation time {t} outside signal [0, {T}]")
    if strict and t + horizon(phi) > T:
        raise HorizonError(f"formula needs index {t + horizon(phi)} but signal ends at {T}")


def predicate_value(pred: Predicate, positions: np.ndarray) -> np.ndarray:
    """mu(x) for every row of ``positions`` (last axis holds x, y)."""
    d = positions[..., :2] - np.asarray(pred.center[:2])
    if pred.shape is Shape.CIRCLE:
        dist = np.sqrt(np.sum(d * d, axis=-1))
    else:
        dist = np.max(np.abs(d), axis=-1)
    if pred.polarity is Polarity.REACH:
        return pred.extent - dist
    return dist - pred.extent


def window(T: int, a: int, b: int):
    """Index and validity arrays of shape ``(T+1, b-a+1)`` for ``[t+a, t+b]``."""
    t = np.arange(T + 1)[:, None]
    raw = t + a + np.arange(b - a + 1)[None, :]
    mask = raw <= T
    mask[:, 0] = True
    return np.minimum(raw, T), mask


# --- boolean ----------------------------------------------------------------

def _index_set(T: int, t: int, a: int, b: int):
    return sorted({min(i, T) for i in range(t + a, t + b + 1)})


def eval_bool(s, t: int, phi: StlExpr, strict: bool = False) -> bool:
    """Does signal ``s`` satisfy ``phi`` from time ``t``?"""
    states = _as_states(s)
    T = states.shape[0] - 1
    _check_time(T, t, phi, strict)
    pos = states[:, :2]
    memo: dict = {}

    def sat(node, k) -> bool:
        key = (id(node), k)
        hit = memo.get(key)
        if hit is not None:
            return hit
        if isinstance(node, Top):
            res = True
        elif isinstance(node, Ap):
            res = bool(predicate_value(node.pred, pos[k]) >= 0)
        elif isinstance(node, Not):
            res = not sat(node.child, k)
        elif isinstance(node, And):
            res = all(sat(c, k) for c in node.children)
        elif isinstance(node, Or):
            res = any(sat(c, k) for c in node.children)
        elif isinstance(node, Eventually):
            res = any(sat(node.child, j) for j in _index_set(T, k, node.a, node.b))
        elif isinstance(node, Always):
            res = all(sat(node.child, j) for j in _index_set(T, k, node.a, node.b))
        elif isinstance(node, Until):
            res = any(sat(node.right, j) and all(sat(node.left, i) for i in range(k, j + 1))
                      for j in _index_set(T, k, node.a, node.b))
        else:
            raise TypeError(f"not an STL node: {node!r}")
        memo[key] = res
        return res

    return sat(phi, t)


# --- hard robustness ----------------------------------------------------------

def robustness_signal(states: np.ndarray, phi: StlExpr) -> np.ndarray:
    """Robustness at every time index: ``(B, T+1, n) -> (B, T+1)``."""
    T = states.shape[1] - 1
    pos = states[..., :2]

    def rec(node) -> np.ndarray:
        if isinstance(node, Top):
            return np.ones(states.shape[:2])
        if isinstance(node, Ap):
            return predicate_value(node.pred, pos)
        if isinstance(node, Not):
            return -rec(node.child)
        if isinstance(node, And):
            return np.min(np.stack([rec(c) for c in node.children], -1), -1)
        if isinstance(node, Or):
            return np.max(np.stack([rec(c) for c in node.children], -1), -1)
        if isinstance(node, (Eventually, Always)):
            r = rec(node.child)
            idx, mask = window(T, node.a, node.b)
            vals = r[:, idx]
            if isinstance(node, Eventually):
                return np.max(np.where(mask, vals, -np.inf), -1)
            return np.min(np.where(mask, vals, np.inf), -1)
        if isinstance(node, Until):
            r1, r2 = rec(node.left), rec(node.right)
            # running min of r1 over [t, t+j], j = 0..b
            idx0, mask0 = window(T, 0, node.b)
            running = np.minimum.accumulate(np.where(mask0, r1[:, idx0], np.inf), axis=-1)
            idx, mask = window(T, node.a, node.b)
            inner = np.minimum(r2[:, idx], running[:, :, node.a:])
            return np.max(np.where(mask, inner, -np.inf), -1)
        raise TypeError(f"not an STL node: {node!r}")

    return rec(phi)


def robustness_batch(states, phi: StlExpr, t: int = 0, strict: bool = False) -> np.ndarray:
    """Hard robustness at time ``t`` for a batch of signals ``(B, T+1, n)``."""
    states = np.asarray(states, dtype=np.float64)
    if states.ndim == 2:
        states = states[None]
    _check_time(states.shape[1] - 1, t, phi, strict)
    return robustness_signal(states, phi)[:, t]


def robustness(s, t: int, phi: StlExpr, strict: bool = False) -> float:
    """Robustness score; ``>= 0`` exactly when the signal satisfies ``phi``."""
    states = _as_states(s)
    return float(robustness_batch(states[None], phi, t, strict)[0])
