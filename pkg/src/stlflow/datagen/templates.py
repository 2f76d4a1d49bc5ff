"""The four STL template families: Single, Multi, Sequential, Partial.

Every spec is ``reach_part & avoid_part`` where the avoid part is one
``G[0,T] ~O`` per obstacle. Reach windows are sampled with a minimum width of
``T/8`` and, when an environment is given, a lower bound on ``t_b`` from the
fastest possible travel time so that generated specs are rarely infeasible.
"""
from __future__ import annotations

import enum
import math

import numpy as np

from ..envs.dynamics import EnvModel
from ..stl.ast import (
    Always, And, Ap, Eventually, Or, Polarity, StlExpr, Until, conj, walk,
)
from .scene import SceneSpec

DWELL_PROB = 0.3
DWELL_RANGE = (3, 9)


class Template(str, enum.Enum):
    SINGLE = "Single"
    MULTI = "Multi"
    SEQUENTIAL = "Sequential"
    PARTIAL = "Partial"


class InsufficientGoals(ValueError):
    pass


MIN_GOALS = {Template.SINGLE: 1, Template.MULTI: 1, Template.SEQUENTIAL: 2, Template.PARTIAL: 2}


def min_travel_steps(env: EnvModel | None, start_xy, goal) -> int:
    """Lower bound on steps to enter ``goal`` from ``start_xy`` (0 without an env)."""
    if env is None:
        return 0
    d = max(np.hypot(start_xy[0] - goal.center[0], start_xy[1] - goal.center[1]) - goal.extent, 0.0)
    if env.name == "Dubins":
        # starting from rest with unit acceleration: distance after k steps is dt^2 k(k-1)/2
        k = 0
        while env.dt ** 2 * k * (k - 1) / 2 < d:
            k += 1
        return k
    vmax = float(np.linalg.norm(env.control_bounds[:, 1]))
    return int(math.ceil(d / (vmax * env.dt)))


def sample_interval(rng, T: int, lo_b: int = 0, hi_b: int | None = None) -> tuple[int, int]:
    """``0 <= a <= b <= hi_b`` with ``b >= lo_b`` and ``b - a >= T/8`` whenever room allows."""
    hi_b = T if hi_b is None else hi_b
    w = int(math.ceil(T / 8))
    lo = min(max(lo_b, w), hi_b)
    b = int(rng.integers(lo, hi_b + 1))
    a = int(rng.integers(0, max(b - w, 0) + 1))
    return a, b


def _slack(k: int, T: int) -> int:
    return min(T, int(math.ceil(1.5 * k)) + 2)


class _Builder:
    def __init__(self, scene: SceneSpec, rng, T: int, env, dwell_prob: float, skeleton: bool):
        self.scene, self.rng, self.T, self.env = scene, rng, T, env
        self.dwell_prob = 0.0 if skeleton else dwell_prob
        self.skeleton = skeleton

    def reach(self, goal, lo_steps: int = 0, budget: int | None = None, inner=None) -> StlExpr:
        """``F[a,b](O [& inner])``, or the dwell form ``F[a,b](G[0,td] O [& inner])``."""
        budget = self.T if budget is None else budget
        body = Ap(goal)
        td = 0
        if self.rng.random() < self.dwell_prob:
            td = int(self.rng.integers(DWELL_RANGE[0], DWELL_RANGE[1] + 1))
            if td >= budget:
                td = 0
            else:
                body = Always(0, td, body)
        if inner is not None:
            body = And((body, inner))
        if self.skeleton:
            return Eventually(0, self.T, body)
        a, b = sample_interval(self.rng, self.T, _slack(lo_steps, budget - td), budget - td)
        return Eventually(a, b, body)

    def avoid(self) -> list:
        return [Always(0, self.T, Ap(o)) for o in self.scene.obstacles]

    def start_xy(self):
        return self.scene.agent_init[:2]


def sample_spec(template, scene: SceneSpec, rng=None, T: int = 64, env: EnvModel | None = None,
                dwell_prob: float = DWELL_PROB, skeleton: bool = False) -> StlExpr:
    """Instantiate one template over ``scene``.

    ``skeleton=True`` gives every reach window the placeholder ``[0, T]`` (for
    interval inference from a demonstration afterwards) and disables dwell.
    """
    template = Template(template)
    if len(scene.goals) < MIN_GOALS[template]:
        raise InsufficientGoals(f"{template.value} needs at least {MIN_GOALS[template]} goals, "
                                f"scene has {len(scene.goals)}")
    rng = np.random.default_rng(rng)
    bld = _Builder(scene, rng, T, env, dwell_prob, skeleton)
    goals = list(scene.goals)
    if template is Template.SINGLE:
        g = goals[0]
        reach = bld.reach(g, min_travel_steps(env, bld.start_xy(), g))
    elif template is Template.MULTI:
        reach = _multi(bld, goals)
    elif template is Template.SEQUENTIAL:
        k = int(rng.integers(2, len(goals) + 1))
        order = [goals[i] for i in rng.permutation(len(goals))[:k]]
        reach = _sequential(bld, order)
    else:
        k = int(rng.integers(2, len(goals) + 1))
        order = [goals[i] for i in rng.permutation(len(goals))[:k]]
        reach = _partial(bld, order)
    return conj(reach, *bld.avoid())


def _multi(bld: _Builder, goals) -> StlExpr:
    rng = bld.rng
    if len(goals) == 1:
        return bld.reach(goals[0], min_travel_steps(bld.env, bld.start_xy(), goals[0]))
    k = int(rng.integers(2, len(goals) + 1))
    used = [goals[i] for i in rng.permutation(len(goals))[:k]]
    leaves = [bld.reach(g, min_travel_steps(bld.env, bld.start_xy(), g)) for g in used]
    outer, inner = (And, Or) if rng.random() < 0.5 else (Or, And)
    # random split into consecutive groups; groups of two or more become the inner operator
    cuts = sorted(rng.choice(np.arange(1, k), size=int(rng.integers(1, k)), replace=False).tolist())
    groups = [leaves[i:j] for i, j in zip([0] + cuts, cuts + [k])]
    kids = tuple(grp[0] if len(grp) == 1 else inner(tuple(grp)) for grp in groups)
    return kids[0] if len(kids) == 1 else outer(kids)


def sequential_chain(reaches) -> StlExpr:
    """``F(O1 & F(O2 & ...))`` from a list of ``(goal, a, b)``; one goal gives ``F[a,b] O``."""
    body = None
    for goal, a, b in reversed(list(reaches)):
        inner = Ap(goal) if body is None else And((Ap(goal), body))
        body = Eventually(a, b, inner)
    return body


def _sequential(bld: _Builder, order) -> StlExpr:
    k = len(order)
    budget = bld.T // k
    starts = [bld.start_xy()] + [np.asarray(g.center[:2]) for g in order[:-1]]
    body = None
    for i in range(k - 1, -1, -1):
        lo = min_travel_steps(bld.env, starts[i], order[i])
        body = bld.reach(order[i], lo, budget, inner=body)
    return body


def _partial(bld: _Builder, order) -> StlExpr:
    """``order`` is the forced visiting order: each goal is kept out of until the previous one is reached."""
    parts = []
    for prev, nxt in zip(order[:-1], order[1:]):
        parts.append(Until(0, bld.T, Ap(nxt.negated()), Ap(prev)))
    pos = bld.start_xy()
    travel = 0
    for i, g in enumerate(order):
        travel += min_travel_steps(bld.env, pos, g)
        pos = np.asarray(g.center[:2])
        if i > 0:
            parts.append(bld.reach(g, travel))
    return conj(*parts)


def reach_predicate_count(phi: StlExpr) -> int:
    return sum(1 for n in walk(phi) if isinstance(n, Ap) and n.pred.polarity is Polarity.REACH)


def conforms(phi: StlExpr, template) -> bool:
    """Structural invariants each template guarantees."""
    template = Template(template)
    nodes = list(walk(phi))
    if template is Template.SINGLE:
        return reach_predicate_count(phi) == 1 and not any(isinstance(n, (Or, Until)) for n in nodes)
    if template is Template.SEQUENTIAL:
        return not any(isinstance(n, (Or, Until)) for n in nodes)
    if template is Template.PARTIAL:
        return any(isinstance(n, Until) for n in nodes)
    return not any(isinstance(n, Until) for n in nodes)
