"""Scene and trajectory export as JSON data plus a standalone SVG."""
from __future__ import annotations

import json
from importlib import resources
from typing import Optional

import numpy as np

from .datagen.scene import SceneSpec
from .envs.maze import MazeLayout

GOAL_COLOR = "#1f4fd1"
OBSTACLE_COLOR = "#8c8c8c"
BEST_COLOR = "#8b0000"
OTHER_COLOR = "#c8a0a0"
WALL_COLOR = "#303030"


def plot_schema() -> dict:
    return json.loads(resources.files("stlflow").joinpath("data/plot_schema.json").read_text())


def _region(p) -> dict:
    return {"shape": p.shape.value, "center": [p.center[0], p.center[1]], "extent": p.extent}


def plot_data(trajectories, scene: SceneSpec, workspace, best: Optional[int] = None,
              layout: Optional[MazeLayout] = None) -> dict:
    ws = np.asarray(workspace, dtype=np.float64)
    out = {
        "workspace": {"xmin": ws[0, 0], "xmax": ws[0, 1], "ymin": ws[1, 0], "ymax": ws[1, 1]},
        "agent_init": [float(v) for v in scene.agent_init[:2]],
        "goals": [_region(p) for p in scene.goals],
        "obstacles": [_region(p) for p in scene.obstacles],
        "trajectories": [np.asarray(t.positions).tolist() for t in trajectories],
        "best": best,
    }
    if layout is not None:
        walls = []
        for r, c in zip(*np.nonzero(layout.occupied)):
            x0 = layout.origin[0] + c * layout.cell_size
            y0 = layout.origin[1] + r * layout.cell_size
            walls.append([float(x0), float(y0), float(layout.cell_size), float(layout.cell_size)])
        out["walls"] = walls
    return out


class SvgFrame:
    """Affine map from workspace coordinates to a ``width x height`` viewBox (y pointing up)."""

    def __init__(self, workspace, width: float = 500.0):
        ws = np.asarray(workspace, dtype=np.float64)
        self.x0, self.x1 = ws[0]
        self.y0, self.y1 = ws[1]
        self.width = float(width)
        self.height = self.width * (self.y1 - self.y0) / (self.x1 - self.x0)
        self.scale = self.width / (self.x1 - self.x0)

    def xy(self, x, y) -> tuple[float, float]:
        return ((x - self.x0) * self.scale, (self.y1 - y) * self.scale)


def render_svg(data: dict, width: float = 500.0) -> str:
    w = data["workspace"]
    frame = SvgFrame(((w["xmin"], w["xmax"]), (w["ymin"], w["ymax"])), width)
    s = frame.scale
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {frame.width:g} {frame.height:g}" '
             f'width="{frame.width:g}" height="{frame.height:g}">',
             f'<rect x="0" y="0" width="{frame.width:g}" height="{frame.height:g}" fill="white" stroke="black"/>']
    for x, y, cw, ch in data.get("walls", []):
        px, py = frame.xy(x, y + ch)
        parts.append(f'<rect x="{px:g}" y="{py:g}" width="{cw * s:g}" height="{ch * s:g}" fill="{WALL_COLOR}"/>')

    def region(p, color):
        cx, cy = frame.xy(*p["center"])
        e = p["extent"] * s
        if p["shape"] == "Box":
            return (f'<rect x="{cx - e:g}" y="{cy - e:g}" width="{2 * e:g}" height="{2 * e:g}" '
                    f'fill="{color}" fill-opacity="0.6"/>')
        return f'<circle cx="{cx:g}" cy="{cy:g}" r="{e:g}" fill="{color}" fill-opacity="0.6"/>'

    parts += [region(p, OBSTACLE_COLOR) for p in data["obstacles"]]
    parts += [region(p, GOAL_COLOR) for p in data["goals"]]
    order = [i for i in range(len(data["trajectories"])) if i != data.get("best")]
    if data.get("best") is not None:
        order.append(data["best"])  # drawn last so it sits on top
    for i in order:
        pts = " ".join("{:g},{:g}".format(*frame.xy(x, y)) for x, y in data["trajectories"][i])
        best = i == data.get("best")
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{BEST_COLOR if best else OTHER_COLOR}" '
                     f'stroke-width="{2.5 if best else 1}"/>')
    ax, ay = frame.xy(*data["agent_init"])
    parts.append(f'<circle cx="{ax:g}" cy="{ay:g}" r="4" fill="black"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def export_plot_data(trajectories, scene: SceneSpec, path, workspace, svg_path=None,
                     best: Optional[int] = None, layout: Optional[MazeLayout] = None) -> dict:
    """Write the plot JSON to ``path`` and, if ``svg_path`` is given, the rendered SVG."""
    data = plot_data(list(trajectories), scene, workspace, best, layout)
    with open(path, "w") as fh:
        json.dump(data, fh, indent=1)
    if svg_path is not None:
        with open(svg_path, "w") as fh:
            fh.write(render_svg(data))
    return data
