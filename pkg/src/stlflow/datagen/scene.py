"""Object placement for reach/avoid scenes."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..envs.dynamics import EnvModel
from ..stl.ast import Polarity, Predicate, Shape

MAX_GOALS = 4
MAX_OBSTACLES = 6
CLEARANCE = 0.1
GOAL_RADIUS = (0.5, 0.75)
OBSTACLE_RADIUS = (0.75, 1.5)
MAZE_EXTENT = 0.4  # box half-side, in cells
# obstacle count distribution for 0..6 obstacles
OBSTACLE_PROBS = (0.2, 0.15, 0.15, 0.15, 0.15, 0.1, 0.1)


class PlacementFailed(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class SceneSpec:
    goals: tuple  # Predicate, Reach polarity
    obstacles: tuple  # Predicate, Avoid polarity
    agent_init: np.ndarray
    env_name: str

    def __post_init__(self):
        object.__setattr__(self, "goals", tuple(self.goals))
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        x = np.array(self.agent_init, dtype=np.float64)
        x.flags.writeable = False
        object.__setattr__(self, "agent_init", x)

    def __eq__(self, other):
        if not isinstance(other, SceneSpec):
            return NotImplemented
        return (self.goals == other.goals and self.obstacles == other.obstacles
                and self.env_name == other.env_name and np.array_equal(self.agent_init, other.agent_init))

    @property
    def objects(self) -> tuple:
        return self.goals + self.obstacles

    def to_json(self) -> dict:
        def pj(p):
            return {"shape": p.shape.value, "center": list(p.center), "extent": p.extent}
        return {"env": self.env_name, "agent_init": self.agent_init.tolist(),
                "goals": [pj(p) for p in self.goals], "obstacles": [pj(p) for p in self.obstacles]}

    @classmethod
    def from_json(cls, obj: dict) -> "SceneSpec":
        def pl(d, pol):
            return Predicate(Shape(d["shape"]), tuple(d["center"]), d["extent"], pol)
        return cls(tuple(pl(d, Polarity.REACH) for d in obj["goals"]),
                   tuple(pl(d, Polarity.AVOID) for d in obj["obstacles"]),
                   np.asarray(obj["agent_init"], dtype=np.float64), obj["env"])


def clearance_ok(objects) -> bool:
    """Pairwise center distance >= sum of extents + CLEARANCE."""
    for i, p in enumerate(objects):
        for q in objects[i + 1:]:
            d = np.hypot(p.center[0] - q.center[0], p.center[1] - q.center[1])
            if d < p.extent + q.extent + CLEARANCE:
                return False
    return True


def in_free_space(scene: SceneSpec) -> bool:
    xy = scene.agent_init[:2]
    for p in scene.objects:
        if np.hypot(xy[0] - p.center[0], xy[1] - p.center[1]) < p.extent + CLEARANCE:
            return False
    return True


def sample_obstacle_count(rng) -> int:
    return int(rng.choice(len(OBSTACLE_PROBS), p=OBSTACLE_PROBS))


def place_scene(env: EnvModel, counts, rng=None, max_rejections: int = 10_000) -> SceneSpec:
    n_goals, n_obs = (int(c) for c in counts)
    if not (0 <= n_goals <= MAX_GOALS and 0 <= n_obs <= MAX_OBSTACLES):
        raise ValueError(f"counts must be within 0..{MAX_GOALS} goals and 0..{MAX_OBSTACLES} obstacles")
    rng = np.random.default_rng(rng)
    if env.layout is not None:
        return _place_maze(env, n_goals, n_obs, rng)
    return _place_continuous(env, n_goals, n_obs, rng, max_rejections)


def _place_continuous(env, n_goals, n_obs, rng, max_rejections) -> SceneSpec:
    ws = env.workspace
    rejections = 0
    placed: list = []
    plan = [(Polarity.REACH, GOAL_RADIUS)] * n_goals + [(Polarity.AVOID, OBSTACLE_RADIUS)] * n_obs
    for polarity, (rlo, rhi) in plan:
        while True:
            r = rng.uniform(rlo, rhi)
            c = rng.uniform(ws[:, 0] + r, ws[:, 1] - r)
            cand = Predicate(Shape.CIRCLE, (c[0], c[1]), r, polarity)
            if clearance_ok(placed + [cand]):
                placed.append(cand)
                break
            rejections += 1
            if rejections >= max_rejections:
                raise PlacementFailed(f"could not place {n_goals} goals and {n_obs} obstacles")
    goals, obstacles = placed[:n_goals], placed[n_goals:]
    while True:
        xy = rng.uniform(ws[:, 0], ws[:, 1])
        x0 = np.zeros(env.n)
        x0[:2] = xy
        if env.name == "Dubins":
            x0[2] = rng.uniform(-np.pi, np.pi)
        scene = SceneSpec(goals, obstacles, x0, env.name)
        if in_free_space(scene):
            return scene
        rejections += 1
        if rejections >= max_rejections:
            raise PlacementFailed("no free space for the agent")


def _place_maze(env, n_goals, n_obs, rng) -> SceneSpec:
    layout = env.layout
    free = layout.free_cells()
    need = n_goals + n_obs + 1
    if need > len(free):
        raise PlacementFailed(f"maze has {len(free)} free cells, need {need}")
    ext = MAZE_EXTENT * layout.cell_size
    for _ in range(1000):
        pick = [free[i] for i in rng.choice(len(free), size=need, replace=False)]
        obstacle_cells = frozenset(pick[1 + n_goals:])
        # goals and the start must stay mutually reachable around obstacle cells
        if layout.connected(pick[:1 + n_goals], obstacle_cells):
            break
    else:
        raise PlacementFailed("could not find a connected maze placement")
    goals = tuple(Predicate(Shape.BOX, tuple(layout.center(c)), ext, Polarity.REACH)
                  for c in pick[1:1 + n_goals])
    obstacles = tuple(Predicate(Shape.BOX, tuple(layout.center(c)), ext, Polarity.AVOID)
                      for c in pick[1 + n_goals:])
    return SceneSpec(goals, obstacles, layout.center(pick[0]), env.name)
