"""Self-contained grid maze: layout, A* waypoints, PD waypoint tracking."""
from __future__ import annotations

import heapq
import json
from dataclasses import dataclass
from importlib import resources
from typing import Iterable, Optional, Sequence

import numpy as np


class Unreachable(RuntimeError):
    def __init__(self, goal_index: int):
        self.goal_index = goal_index
        super().__init__(f"goal {goal_index} is unreachable")


@dataclass(frozen=True, eq=False)
class MazeLayout:
    """Occupancy grid; row ``r``, column ``c`` covers
    ``[ox + c*s, ox + (c+1)*s] x [oy + r*s, oy + (r+1)*s]``."""

    occupied: np.ndarray  # (R, C) bool, True = wall
    cell_size: float = 1.0
    origin: tuple = (0.0, 0.0)

    def __post_init__(self):
        occ = np.array(self.occupied, dtype=bool)
        occ.flags.writeable = False
        object.__setattr__(self, "occupied", occ)
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))

    @property
    def rows(self) -> int:
        return self.occupied.shape[0]

    @property
    def cols(self) -> int:
        return self.occupied.shape[1]

    def bounds(self) -> np.ndarray:
        ox, oy = self.origin
        return np.array([[ox, ox + self.cols * self.cell_size], [oy, oy + self.rows * self.cell_size]])

    def center(self, cell) -> np.ndarray:
        r, c = cell
        return np.array([self.origin[0] + (c + 0.5) * self.cell_size,
                         self.origin[1] + (r + 0.5) * self.cell_size])

    def cell_of(self, xy) -> tuple[np.ndarray, np.ndarray]:
        xy = np.asarray(xy, dtype=np.float64)
        c = np.floor((xy[..., 0] - self.origin[0]) / self.cell_size).astype(int)
        r = np.floor((xy[..., 1] - self.origin[1]) / self.cell_size).astype(int)
        return r, c

    def blocked_at(self, xy) -> np.ndarray:
        r, c = self.cell_of(xy)
        outside = (r < 0) | (r >= self.rows) | (c < 0) | (c >= self.cols)
        rr = np.clip(r, 0, self.rows - 1)
        cc = np.clip(c, 0, self.cols - 1)
        return outside | self.occupied[rr, cc]

    def is_free(self, cell) -> bool:
        r, c = cell
        return 0 <= r < self.rows and 0 <= c < self.cols and not self.occupied[r, c]

    def free_cells(self) -> list[tuple[int, int]]:
        return [(int(r), int(c)) for r, c in zip(*np.nonzero(~self.occupied))]

    def slide(self, old, new) -> np.ndarray:
        """Move from ``old`` toward ``new`` one axis at a time, refusing any
        axis move that would enter a wall or leave the grid."""
        old = np.asarray(old, dtype=np.float64)
        new = np.asarray(new, dtype=np.float64)
        out = old.copy()
        cand = out.copy()
        cand[..., 0] = new[..., 0]
        ok = ~self.blocked_at(cand)
        out[..., 0] = np.where(ok, new[..., 0], old[..., 0])
        cand = out.copy()
        cand[..., 1] = new[..., 1]
        ok = ~self.blocked_at(cand)
        out[..., 1] = np.where(ok, new[..., 1], old[..., 1])
        return out

    def neighbors(self, cell, blocked: frozenset = frozenset()):
        r, c = cell
        for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            nxt = (r + dr, c + dc)
            if self.is_free(nxt) and nxt not in blocked:
                yield nxt

    def connected(self, cells: Iterable, blocked: frozenset = frozenset()) -> bool:
        cells = list(cells)
        if not cells:
            return True
        seen = {cells[0]}
        todo = [cells[0]]
        while todo:
            cur = todo.pop()
            for nxt in self.neighbors(cur, blocked):
                if nxt not in seen:
                    seen.add(nxt)
                    todo.append(nxt)
        return all(c in seen for c in cells)

    # --- serialization ----------------------------------------------------

    def to_json(self) -> dict:
        cells = "".join("#" if v else "." for v in self.occupied.ravel())
        return {"rows": self.rows, "cols": self.cols, "cells": cells,
                "cell_size": self.cell_size, "origin": list(self.origin)}

    @classmethod
    def from_json(cls, obj: dict) -> "MazeLayout":
        R, C, cells = int(obj["rows"]), int(obj["cols"]), obj["cells"]
        if len(cells) != R * C or set(cells) - {"#", "."}:
            raise ValueError("maze 'cells' must be rows*cols characters of '#' and '.'")
        occ = np.array([ch == "#" for ch in cells]).reshape(R, C)
        return cls(occ, float(obj.get("cell_size", 1.0)), tuple(obj.get("origin", (0.0, 0.0))))

    @classmethod
    def load(cls, path) -> "MazeLayout":
        with open(path) as fh:
            return cls.from_json(json.load(fh))

    @classmethod
    def default(cls) -> "MazeLayout":
        text = resources.files("stlflow").joinpath("data/maze_default.json").read_text()
        return cls.from_json(json.loads(text))


def astar_cells(layout: MazeLayout, start, goal, blocked: frozenset = frozenset()) -> Optional[list]:
    """Shortest 4-connected cell path from ``start`` to ``goal`` (inclusive), or None."""
    start, goal = tuple(start), tuple(goal)
    if start == goal:
        return [start]

    def h(cell):
        return abs(cell[0] - goal[0]) + abs(cell[1] - goal[1])

    open_heap = [(h(start), 0, start)]
    came = {start: None}
    cost = {start: 0}
    while open_heap:
        _, g, cur = heapq.heappop(open_heap)
        if cur == goal:
            path = [cur]
            while came[path[-1]] is not None:
                path.append(came[path[-1]])
            return path[::-1]
        if g > cost[cur]:
            continue
        for nxt in layout.neighbors(cur, blocked):
            ng = g + 1
            if ng < cost.get(nxt, 1 << 30):
                cost[nxt] = ng
                came[nxt] = cur
                heapq.heappush(open_heap, (ng + h(nxt), ng, nxt))
    return None


def astar_plan(layout: MazeLayout, start_cell, goal_cells: Sequence, blocked_per_leg=None) -> list[np.ndarray]:
    """Waypoints (cell centres) visiting ``goal_cells`` in order.

    ``blocked_per_leg`` optionally gives, for each leg, a set of cells the
    leg may not pass through (used for "avoid until" constraints).
    """
    cells = [tuple(start_cell)]
    cur = tuple(start_cell)
    for i, goal in enumerate(goal_cells):
        blocked = frozenset(blocked_per_leg[i]) if blocked_per_leg is not None else frozenset()
        blocked = blocked - {tuple(goal)}
        path = astar_cells(layout, cur, goal, blocked)
        if path is None:
            raise Unreachable(i)
        cells.extend(path[1:])
        cur = tuple(goal)
    return [layout.center(c) for c in cells]


@dataclass(frozen=True)
class PDGains:
    kp: float = 3.0
    kd: float = 0.1
    capture: float = 0.3  # in cells


def track_waypoints(env, x0, waypoints, gains: PDGains = PDGains(), T: Optional[int] = None):
    """Drive a point mass through ``waypoints`` with a PD law on position error.

    The active waypoint advances once the agent is within ``capture``
    cell sizes of it; the last one is held. Returns a full-horizon trajectory.
    """
    from .dynamics import step  # circular at import time
    from ..stl.signal import Trajectory

    if len(waypoints) == 0:
        raise ValueError("need at least one waypoint")
    T = env.T if T is None else T
    cell = env.layout.cell_size if env.layout is not None else 1.0
    radius = gains.capture * cell
    wps = [np.asarray(w, dtype=np.float64) for w in waypoints]
    x = np.asarray(x0, dtype=np.float64).copy()
    states = [x.copy()]
    controls = []
    k = 0
    e_prev = wps[0] - x
    for _ in range(T):
        e = wps[k] - x
        while k < len(wps) - 1 and np.linalg.norm(e) < radius:
            k += 1
            e = wps[k] - x
            e_prev = e
        u = env.clamp(gains.kp * e + gains.kd * (e - e_prev) / env.dt)
        e_prev = e
        x = step(env, x, u)
        states.append(x.copy())
        controls.append(u)
    return Trajectory(np.array(states), np.array(controls), env.dt)


def arrival_step(traj, target, radius: float) -> Optional[int]:
    d = np.linalg.norm(traj.positions - np.asarray(target)[None], axis=1)
    hits = np.nonzero(d <= radius)[0]
    return int(hits[0]) if hits.size else None
