from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class Trajectory:
    """States ``x_0..x_T`` (shape ``(T+1, n)``) and controls ``u_0..u_{T-1}`` (``(T, m)``)."""

    states: np.ndarray
    controls: np.ndarray
    dt: float = 0.5

    def __post_init__(self):
        states = np.array(self.states, dtype=np.float64)
        controls = np.array(self.controls, dtype=np.float64)
        if states.ndim != 2:
            raise ValueError(f"states must be 2-d, got shape {states.shape}")
        if controls.ndim == 1 and controls.size == 0:
            controls = controls.reshape(0, 0)
        if controls.ndim != 2 or controls.shape[0] != states.shape[0] - 1:
            raise ValueError(f"controls shape {controls.shape} does not match {states.shape[0]} states")
        if not (np.all(np.isfinite(states)) and np.all(np.isfinite(controls))):
            raise ValueError("trajectory contains non-finite entries")
        states.flags.writeable = False
        controls.flags.writeable = False
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "controls", controls)
        object.__setattr__(self, "dt", float(self.dt))

    @property
    def T(self) -> int:
        return self.states.shape[0] - 1

    @property
    def positions(self) -> np.ndarray:
        return self.states[:, :2]

    def __eq__(self, other):
        if not isinstance(other, Trajectory):
            return NotImplemented
        return (self.dt == other.dt and np.array_equal(self.states, other.states)
                and np.array_equal(self.controls, other.controls))

    def to_json(self) -> dict:
        return {"states": self.states.tolist(), "controls": self.controls.tolist(), "dt": self.dt}

    @classmethod
    def from_json(cls, obj: dict) -> "Trajectory":
        states = np.asarray(obj["states"], dtype=np.float64)
        controls = np.asarray(obj["controls"], dtype=np.float64)
        if controls.size == 0:
            controls = controls.reshape(max(states.shape[0] - 1, 0), 0)
        return cls(states, controls, obj.get("dt", 0.5))
