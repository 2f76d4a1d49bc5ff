"""Demonstration collection and interval inference."""
from __future__ import annotations

import enum
import itertools
import math

import numpy as np

from ..envs.dynamics import EnvModel
from ..envs.maze import Unreachable, astar_plan, track_waypoints
from ..planners import CemConfig, GradConfig, cem_optimize, grad_optimize
from ..stl.ast import Always, And, Eventually, Not, Or, StlExpr, Until, children
from ..stl.semantics import eval_bool, horizon, robustness, robustness_signal
from ..stl.signal import Trajectory
from .scene import SceneSpec


class Solver(str, enum.Enum):
    GRAD = "Grad"
    CEM = "Cem"
    ASTAR_TRACK = "AstarTrack"


class InferenceFailed(RuntimeError):
    pass


def satisfies(traj: Trajectory, spec: StlExpr) -> bool:
    """Both semantics paths must agree that the trajectory satisfies ``spec``."""
    return robustness(traj, 0, spec) >= 0 and eval_bool(traj, 0, spec)


def collect_demo(env: EnvModel, spec: StlExpr, scene: SceneSpec, solver, k: int = 2, rng=None,
                 grad_cfg: GradConfig | None = None, cem_cfg: CemConfig | None = None) -> list:
    """Up to ``k`` satisfying trajectories from ``scene.agent_init``; may be empty."""
    solver = Solver(solver)
    rng = np.random.default_rng(rng)
    x0 = scene.agent_init
    if solver is Solver.ASTAR_TRACK:
        if env.layout is None:
            raise ValueError("AstarTrack needs a maze environment")
        return _astar_demos(env, spec, scene, k, rng)
    if env.layout is not None and solver is Solver.GRAD:
        raise ValueError("Grad needs differentiable dynamics")
    found = []
    if solver is Solver.GRAD:
        cfg = grad_cfg or GradConfig(restarts=max(8, k))
        run = grad_optimize(env, x0, spec, cfg, rng)
        for i in np.argsort(-run.robustness, kind="stable"):
            found.append(Trajectory(run.states[i], run.controls[i], env.dt))
    else:
        cfg = cem_cfg or CemConfig()
        for _ in range(k):
            run = cem_optimize(env, x0, spec, cfg, rng)
            found.append(Trajectory(run.states, run.controls, env.dt))
    return [tr for tr in found if satisfies(tr, spec)][:k]


def _astar_demos(env, spec, scene, k, rng, max_orders: int = 64, jitter: float = 0.15) -> list:
    """Try goal visiting orders (shortest first, shuffled within a length) until ``k`` succeed."""
    layout = env.layout
    start = tuple(int(v) for v in layout.cell_of(scene.agent_init[:2]))
    goal_cells = [tuple(int(v) for v in layout.cell_of(g.center[:2])) for g in scene.goals]
    obstacle_cells = {tuple(int(v) for v in layout.cell_of(o.center[:2])) for o in scene.obstacles}
    orders = []
    for size in range(1, len(goal_cells) + 1):
        perms = list(itertools.permutations(range(len(goal_cells)), size))
        rng.shuffle(perms)
        orders.extend(perms)
    out = []
    for order in orders[:max_orders]:
        cells = [goal_cells[i] for i in order]
        # each leg avoids obstacles and goals that come later in the order
        strict = [obstacle_cells | set(cells[j + 1:]) for j in range(len(cells))]
        for blocked in (strict, [obstacle_cells] * len(cells)):
            try:
                wps = astar_plan(layout, start, cells, blocked)
            except Unreachable:
                continue
            # first the exact cell-centre path, then jittered copies for variety
            got = 0
            for rep in range(k - len(out)):
                pts = wps
                if rep:
                    pts = [w + rng.uniform(-jitter, jitter, 2) * layout.cell_size for w in wps[:-1]] + wps[-1:]
                traj = track_waypoints(env, scene.agent_init, pts)
                if satisfies(traj, spec):
                    out.append(traj)
                    got += 1
                elif not rep:
                    break
            if got:
                break
        if len(out) >= k:
            break
    return out


class _Retry(Exception):
    pass


def _rebuild(node, kids):
    if isinstance(node, Not):
        return Not(kids[0])
    if isinstance(node, And):
        return And(tuple(kids))
    if isinstance(node, Or):
        return Or(tuple(kids))
    if isinstance(node, Always):
        return Always(node.a, node.b, kids[0])
    if isinstance(node, Until):
        return Until(node.a, node.b, kids[0], kids[1])
    return node


def infer_intervals(skeleton: StlExpr, traj: Trajectory, rng=None, retries: int = 100) -> StlExpr:
    """Replace every ``F`` window of ``skeleton`` with one that ``traj`` witnesses.

    Walks top-down carrying the time each subformula is evaluated at. For an
    ``F`` node the child's satisfaction set after that time is computed, a
    witness is drawn from it and a window containing the witness is sampled;
    the child is then processed at the witness time. The result is re-verified
    and the draw repeated on failure.
    """
    if not satisfies(traj, skeleton):
        raise InferenceFailed("trajectory does not satisfy the widened skeleton")
    rng = np.random.default_rng(rng)
    states = traj.states[None]
    T = traj.T
    w8 = int(math.ceil(T / 8))

    def window_around(rel: int, cap: int) -> tuple[int, int]:
        b = min(max(rel + int(rng.integers(0, w8 + 1)), w8), cap)
        b = max(b, rel)
        a_hi = min(rel, max(b - w8, 0))
        a = int(rng.integers(max(0, a_hi - w8), a_hi + 1))
        return a, b

    def assign(node, t0: int, optional: bool):
        if isinstance(node, Eventually):
            sat = np.nonzero(robustness_signal(states, node.child)[0, t0:] >= 0)[0] + t0
            if sat.size == 0:
                if not optional:
                    raise _Retry
                a, b = window_around(int(rng.integers(0, T - t0 + 1)), T - t0)
                return Eventually(a, b, node.child)
            w = int(rng.choice(sat))
            a, b = window_around(w - t0, T - t0)
            return Eventually(a, b, assign(node.child, w, False))
        kids = children(node)
        if not kids:
            return node
        in_or = isinstance(node, Or)
        return _rebuild(node, [assign(c, t0, optional or in_or) for c in kids])

    for _ in range(retries):
        try:
            spec = assign(skeleton, 0, False)
        except _Retry:
            continue
        if horizon(spec) <= T and satisfies(traj, spec):
            return spec
    raise InferenceFailed("no interval assignment verified against the trajectory")
