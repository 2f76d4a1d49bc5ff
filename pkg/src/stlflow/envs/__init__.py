from .dynamics import (
    EnvModel, dubins_env, gridmaze_env, linear_env, make_env, rollout, rollout_batch,
    rollout_grad, step,
)
from .maze import (
    MazeLayout, PDGains, Unreachable, arrival_step, astar_cells, astar_plan, track_waypoints,
)

__all__ = [
    "EnvModel", "dubins_env", "gridmaze_env", "linear_env", "make_env", "rollout",
    "rollout_batch", "rollout_grad", "step", "MazeLayout", "PDGains", "Unreachable",
    "arrival_step", "astar_cells", "astar_plan", "track_waypoints",
]
