"""Linear (single integrator), Dubins car, and grid-maze point mass.

All functions accept a leading batch axis. Controls are clamped to the
environment bounds inside ``step`` so no caller can exceed them.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..stl.signal import Trajectory
from .maze import MazeLayout


@dataclass(frozen=True, eq=False)
class EnvModel:
    name: str  # "Linear" | "Dubins" | "GridMaze"
    n: int
    m: int
    dt: float
    T: int
    control_bounds: np.ndarray  # (m, 2) rows of [lo, hi]
    workspace: np.ndarray  # (2, 2) rows of [min, max] for x and y
    layout: Optional[MazeLayout] = field(default=None)

    @property
    def differentiable(self) -> bool:
        return self.name in ("Linear", "Dubins")

    def clamp(self, u: np.ndarray) -> np.ndarray:
        return np.clip(u, self.control_bounds[:, 0], self.control_bounds[:, 1])

    def to_json(self) -> dict:
        out = {"name": self.name, "T": self.T, "dt": self.dt}
        if self.layout is not None:
            out["layout"] = self.layout.to_json()
        return out


def linear_env(T: int = 64, dt: float = 0.5, workspace=((-5.0, 5.0), (-5.0, 5.0))) -> EnvModel:
    return EnvModel("Linear", 2, 2, dt, T, np.array([[-1.0, 1.0]] * 2), np.asarray(workspace, float))


def dubins_env(T: int = 64, dt: float = 0.5, workspace=((-5.0, 5.0), (-5.0, 5.0))) -> EnvModel:
    return EnvModel("Dubins", 4, 2, dt, T, np.array([[-1.0, 1.0]] * 2), np.asarray(workspace, float))


def gridmaze_env(layout: Optional[MazeLayout] = None, T: int = 128, dt: float = 0.2,
                 max_speed: float = 2.0) -> EnvModel:
    layout = layout if layout is not None else MazeLayout.default()
    return EnvModel("GridMaze", 2, 2, dt, T, np.array([[-max_speed, max_speed]] * 2),
                    layout.bounds(), layout)


def make_env(name: str, **kw) -> EnvModel:
    key = name.lower()
    if key == "linear":
        return linear_env(**kw)
    if key == "dubins":
        return dubins_env(**kw)
    if key in ("gridmaze", "maze"):
        return gridmaze_env(**kw)
    raise ValueError(f"unknown environment {name!r}")


def step(env: EnvModel, x, u) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    u = env.clamp(np.asarray(u, dtype=np.float64))
    dt = env.dt
    if env.name == "Linear":
        return x + u * dt
    if env.name == "Dubins":
        px, py, th, v = x[..., 0], x[..., 1], x[..., 2], x[..., 3]
        return np.stack([px + v * np.cos(th) * dt, py + v * np.sin(th) * dt,
                         th + u[..., 0] * dt, v + u[..., 1] * dt], axis=-1)
    if env.name == "GridMaze":
        return env.layout.slide(x, x + u * dt)
    raise ValueError(f"unknown environment {env.name!r}")


def rollout_batch(env: EnvModel, x0, controls) -> tuple[np.ndarray, np.ndarray]:
    """States ``(B, T+1, n)`` and the clamped controls ``(B, T, m)``."""
    controls = np.asarray(controls, dtype=np.float64)
    if not np.all(np.isfinite(controls)):
        raise ValueError("controls must be finite")
    squeeze = controls.ndim == 2
    if squeeze:
        controls = controls[None]
    B, T, _ = controls.shape
    x = np.broadcast_to(np.asarray(x0, dtype=np.float64), (B, env.n)).copy()
    u = env.clamp(controls)
    states = np.empty((B, T + 1, env.n))
    states[:, 0] = x
    for t in range(T):
        x = step(env, x, u[:, t])
        states[:, t + 1] = x
    return states, u


def rollout(env: EnvModel, x0, controls) -> Trajectory:
    states, u = rollout_batch(env, x0, np.asarray(controls, dtype=np.float64)[None])
    return Trajectory(states[0], u[0], env.dt)


def rollout_grad(env: EnvModel, x0, controls, upstream) -> np.ndarray:
    """Pull a gradient w.r.t. states ``(.., T+1, n)`` back to the raw controls ``(.., T, m)``.

    Exact reverse accumulation through the recurrence, including the clamp
    (zero gradient where a control sits outside its bounds).
    """
    if not env.differentiable:
        raise ValueError(f"{env.name} dynamics are not differentiable")
    controls = np.asarray(controls, dtype=np.float64)
    upstream = np.asarray(upstream, dtype=np.float64)
    squeeze = controls.ndim == 2
    if squeeze:
        controls, upstream = controls[None], upstream[None]
    lo, hi = env.control_bounds[:, 0], env.control_bounds[:, 1]
    inside = (controls >= lo) & (controls <= hi)
    dt = env.dt
    B, T, m = controls.shape
    if env.name == "Linear":
        # x_T-dependence on u_t is dt for every later state
        tail = np.cumsum(upstream[:, ::-1], axis=1)[:, ::-1]
        grad = tail[:, 1:] * dt
    else:
        states, _ = rollout_batch(env, x0, controls)
        grad = np.zeros_like(controls)
        lam = upstream[:, T].copy()
        for t in range(T - 1, -1, -1):
            th, v = states[:, t, 2], states[:, t, 3]
            grad[:, t, 0] = lam[:, 2] * dt
            grad[:, t, 1] = lam[:, 3] * dt
            prev = upstream[:, t].copy()
            prev[:, 0] += lam[:, 0]
            prev[:, 1] += lam[:, 1]
            prev[:, 2] += lam[:, 2] + dt * v * (-np.sin(th) * lam[:, 0] + np.cos(th) * lam[:, 1])
            prev[:, 3] += lam[:, 3] + dt * (np.cos(th) * lam[:, 0] + np.sin(th) * lam[:, 1])
            lam = prev
    grad = grad * inside
    return grad[0] if squeeze else grad
