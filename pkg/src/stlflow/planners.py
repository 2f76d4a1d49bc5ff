"""Classical STL planners: gradient descent on smoothed robustness, and CEM."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .envs.dynamics import EnvModel, rollout_batch, rollout_grad
from .stl.semantics import horizon, robustness_batch
from .stl.signal import Trajectory
from .stl.smooth import SmoothConfig, smooth_robustness_batch


class HorizonTooShort(ValueError):
    pass


@dataclass(frozen=True)
class GradConfig:
    iters: int = 50
    lr: float = 0.05
    c1: float = 1.0
    c2: float = 0.01
    margin: float = 0.5
    restarts: int = 8
    beta: float = 10.0
    init_std: float = 0.5
    adam_b1: float = 0.9
    adam_b2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.iters < 1:
            raise ValueError("iters must be >= 1")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")

    @classmethod
    def lite(cls, **kw) -> "GradConfig":
        return cls(iters=10, **kw)


@dataclass(frozen=True)
class CemConfig:
    population: int = 64
    elite: int = 25
    iters: int = 100
    init_std: float = 0.5

    def __post_init__(self):
        if not 1 <= self.elite <= self.population:
            raise ValueError("need 1 <= elite <= population")
        if self.iters < 1:
            raise ValueError("iters must be >= 1")


class PlanResult(NamedTuple):
    controls: np.ndarray
    trajectory: Trajectory
    robustness: float


@dataclass
class GradRun:
    """Per-restart outcome of a batched gradient run."""

    controls: np.ndarray  # (R, T, m) clamped controls of each restart's best iterate
    states: np.ndarray  # (R, T+1, n)
    robustness: np.ndarray  # (R,) hard robustness
    loss_history: list = field(default_factory=list)  # mean loss per iteration


@dataclass
class CemRun:
    controls: np.ndarray
    states: np.ndarray
    robustness: float
    std_history: list = field(default_factory=list)  # mean fitted std per iteration


def _check_horizon(env: EnvModel, phi):
    if horizon(phi) > env.T:
        raise HorizonTooShort(f"formula horizon {horizon(phi)} exceeds environment horizon {env.T}")


def _rng(rng) -> np.random.Generator:
    return rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)


def grad_loss(env: EnvModel, x0, phi, u: np.ndarray, cfg: GradConfig):
    """Per-restart loss ``(R,)`` and its gradient w.r.t. raw controls ``(R, T, m)``.

    loss = max(margin - rho_soft, 0) + c1 * mean(max(u^2 - umax^2, 0)) + c2 * mean(u^2)
    """
    states, _ = rollout_batch(env, x0, u)
    rho, drho = smooth_robustness_batch(states, phi, SmoothConfig(cfg.beta))
    gap = cfg.margin - rho
    active = (gap > 0).astype(float)
    n = u.shape[1] * u.shape[2]
    umax2 = env.control_bounds[:, 1] ** 2
    over = u * u - umax2
    loss = (np.maximum(gap, 0.0) + cfg.c1 * np.maximum(over, 0).sum(axis=(1, 2)) / n
            + cfg.c2 * (u * u).sum(axis=(1, 2)) / n)
    upstream = -active[:, None, None] * drho
    grad = rollout_grad(env, x0, u, upstream)
    grad = grad + cfg.c1 * 2 * u * (over > 0) / n + cfg.c2 * 2 * u / n
    return loss, grad, states


def grad_optimize(env: EnvModel, x0, phi, cfg: GradConfig = GradConfig(), rng=None) -> GradRun:
    """Adam on the control sequence from ``cfg.restarts`` random starts at once."""
    _check_horizon(env, phi)
    rng = _rng(rng)
    R, T, m = cfg.restarts, env.T, env.m
    u = env.clamp(rng.normal(0.0, cfg.init_std, size=(R, T, m)))
    m1 = np.zeros_like(u)
    m2 = np.zeros_like(u)
    best_rho = np.full(R, -np.inf)
    best_u = u.copy()
    history = []
    for it in range(1, cfg.iters + 1):
        loss, grad, states = grad_loss(env, x0, phi, u, cfg)
        history.append(float(loss.mean()))
        hard = robustness_batch(states, phi)
        better = hard > best_rho
        best_rho = np.where(better, hard, best_rho)
        best_u[better] = u[better]
        m1 = cfg.adam_b1 * m1 + (1 - cfg.adam_b1) * grad
        m2 = cfg.adam_b2 * m2 + (1 - cfg.adam_b2) * grad * grad
        mhat = m1 / (1 - cfg.adam_b1 ** it)
        vhat = m2 / (1 - cfg.adam_b2 ** it)
        u = u - cfg.lr * mhat / (np.sqrt(vhat) + cfg.adam_eps)
    states, _ = rollout_batch(env, x0, u)
    hard = robustness_batch(states, phi)
    better = hard > best_rho
    best_rho = np.where(better, hard, best_rho)
    best_u[better] = u[better]
    states, clamped = rollout_batch(env, x0, best_u)
    return GradRun(clamped, states, robustness_batch(states, phi), history)


def _pick(env, states, controls, rho) -> PlanResult:
    i = int(np.argmax(rho))
    return PlanResult(controls[i], Trajectory(states[i], controls[i], env.dt), float(rho[i]))


def grad_plan(env: EnvModel, x0, phi, cfg: GradConfig = GradConfig(), rng=None) -> PlanResult:
    run = grad_optimize(env, x0, phi, cfg, rng)
    return _pick(env, run.states, run.controls, run.robustness)


def cem_optimize(env: EnvModel, x0, phi, cfg: CemConfig = CemConfig(), rng=None) -> CemRun:
    _check_horizon(env, phi)
    rng = _rng(rng)
    T, m = env.T, env.m
    mean = np.zeros((T, m))
    std = np.full((T, m), cfg.init_std)
    best_rho, best_u = -np.inf, None
    history = []
    for _ in range(cfg.iters):
        pop = env.clamp(mean + std * rng.standard_normal((cfg.population, T, m)))
        states, pop = rollout_batch(env, x0, pop)
        rho = robustness_batch(states, phi)
        # stable sort keeps ties in sampling order
        order = np.argsort(-rho, kind="stable")
        if rho[order[0]] > best_rho:
            best_rho, best_u = float(rho[order[0]]), pop[order[0]].copy()
        elite = pop[order[:cfg.elite]]
        mean = elite.mean(axis=0)
        std = elite.std(axis=0)
        history.append(float(std.mean()))
    states, clamped = rollout_batch(env, x0, best_u[None])
    return CemRun(clamped[0], states[0], best_rho, history)


def cem_plan(env: EnvModel, x0, phi, cfg: CemConfig = CemConfig(), rng=None) -> PlanResult:
    run = cem_optimize(env, x0, phi, cfg, rng)
    return PlanResult(run.controls, Trajectory(run.states, run.controls, env.dt), run.robustness)
