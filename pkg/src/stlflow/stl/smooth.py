"""Differentiable robustness.

Every min/max of the hard semantics is replaced by a log-sum-exp soft
version with temperature ``beta``; gradients w.r.t. the states come from
the autodiff tape in :mod:`stlflow.nn.autodiff`. ``Mode.HARD`` runs the same
graph with exact min/max and returns subgradients.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from ..nn import autodiff as ad
from .ast import Always, And, Ap, Eventually, Not, Or, Polarity, Shape, StlExpr, Top, Until
from .semantics import _as_states, _check_time, window


class Mode(str, enum.Enum):
    HARD = "hard"
    SOFT = "soft"


@dataclass(frozen=True)
class SmoothConfig:
    beta: float = 10.0
    mode: Mode = Mode.SOFT

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        object.__setattr__(self, "mode", Mode(self.mode))


def softmin_value(values, beta: float) -> float:
    """Scalar soft minimum, handy for checking the smoothing bound."""
    v = ad.Tensor(np.asarray(values, dtype=np.float64))
    return float(ad.softmin_reduce(v, beta).data)


def _predicate(pred, pos: ad.Tensor) -> ad.Tensor:
    d = pos - np.asarray(pred.center[:2])
    dist = ad.norm(d) if pred.shape is Shape.CIRCLE else ad.infnorm(d)
    if pred.polarity is Polarity.REACH:
        return pred.extent - dist
    return dist - pred.extent


def robustness_tensor(states: ad.Tensor, phi: StlExpr, cfg: SmoothConfig) -> ad.Tensor:
    """Robustness signal ``(B, T+1)`` built on the autodiff tape."""
    B, L = states.shape[:2]
    T = L - 1
    pos = states[:, :, :2]
    soft = cfg.mode is Mode.SOFT
    beta = cfg.beta

    def vmax(x, mask=None):
        return ad.softmax_reduce(x, beta, mask=mask) if soft else ad.amax(x, mask=mask)

    def vmin(x, mask=None):
        return ad.softmin_reduce(x, beta, mask=mask) if soft else ad.amin(x, mask=mask)

    def rec(node) -> ad.Tensor:
        if isinstance(node, Top):
            return ad.Tensor(np.ones((B, L)))
        if isinstance(node, Ap):
            return _predicate(node.pred, pos)
        if isinstance(node, Not):
            return -rec(node.child)
        if isinstance(node, (And, Or)):
            stacked = ad.stack([rec(c) for c in node.children], axis=-1)
            return vmin(stacked) if isinstance(node, And) else vmax(stacked)
        if isinstance(node, (Eventually, Always)):
            r = rec(node.child)
            idx, mask = window(T, node.a, node.b)
            vals = ad.take(r, idx, axis=1)
            return vmax(vals, mask) if isinstance(node, Eventually) else vmin(vals, mask)
        if isinstance(node, Until):
            r1, r2 = rec(node.left), rec(node.right)
            idx0, mask0 = window(T, 0, node.b)
            g1 = ad.take(r1, idx0, axis=1)
            if soft:
                running = -ad.logcumsumexp(g1 * (-beta), axis=-1, mask=mask0) * (1.0 / beta)
            else:
                running = _running_hard_min(g1, mask0)
            idx, mask = window(T, node.a, node.b)
            pair = ad.stack([ad.take(r2, idx, axis=1), running[:, :, node.a:]], axis=-1)
            return vmax(vmin(pair), mask)
        raise TypeError(f"not an STL node: {node!r}")

    return rec(phi)


def _running_hard_min(x: ad.Tensor, mask) -> ad.Tensor:
    cols = []
    cur = None
    for k in range(x.shape[-1]):
        col = x[:, :, k]
        if k > 0:
            # masked positions repeat the previous running value
            m = mask[:, k]
            pair = ad.stack([cur, col], axis=-1)
            pmask = np.stack([np.ones_like(m), m], -1)
            col = ad.amin(pair, mask=np.broadcast_to(pmask, pair.shape))
        cur = col
        cols.append(col)
    return ad.stack(cols, axis=-1)


def smooth_robustness_batch(states, phi: StlExpr, cfg: SmoothConfig = SmoothConfig(), t: int = 0,
                            strict: bool = False):
    """Values ``(B,)`` and gradients ``(B, T+1, n)`` for a batch of signals."""
    arr = np.asarray(states, dtype=np.float64)
    _check_time(arr.shape[1] - 1, t, phi, strict)
    x = ad.Tensor(arr, requires_grad=True)
    sig = robustness_tensor(x, phi, cfg)
    val = sig[:, t]
    val.backward(np.ones(arr.shape[0]))
    grad = x.grad if x.grad is not None else np.zeros_like(arr)
    return val.data.copy(), grad


def smooth_robustness(s, t: int, phi: StlExpr, cfg: SmoothConfig = SmoothConfig(), strict: bool = False):
    """Smoothed robustness of one signal and its gradient w.r.t. every state entry."""
    states = _as_states(s)
    vals, grads = smooth_robustness_batch(states[None], phi, cfg, t, strict)
    return float(vals[0]), grads[0]


def reduction_profile(phi: StlExpr, T: int) -> tuple[int, int]:
    """``(K, k_max)``: nested min/max levels along the deepest path and largest arity.

    The soft value differs from the hard one by at most ``K * ln(k_max) / beta``
    (each log-sum-exp adds at most ``ln(arity)/beta`` and is 1-Lipschitz).
    """
    if isinstance(phi, (Top, Ap)):
        return 0, 1
    if isinstance(phi, Not):
        return reduction_profile(phi.child, T)
    if isinstance(phi, (And, Or)):
        subs = [reduction_profile(c, T) for c in phi.children]
        return 1 + max(k for k, _ in subs), max([len(phi.children)] + [m for _, m in subs])
    if isinstance(phi, (Eventually, Always)):
        k, m = reduction_profile(phi.child, T)
        return k + 1, max(m, min(phi.b - phi.a + 1, T + 1))
    k1, m1 = reduction_profile(phi.left, T)
    k2, m2 = reduction_profile(phi.right, T)
    width = min(phi.b + 1, T + 1)
    # running min, pairwise min, outer max
    return max(k1 + 1, k2) + 2, max(m1, m2, width, 2)
