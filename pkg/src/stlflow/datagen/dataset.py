"""Dataset records, JSON-lines persistence, generation loop, and train/validation split."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass

import numpy as np

from ..envs.dynamics import EnvModel
from ..stl.ast import StlExpr, from_json, to_json
from ..stl.signal import Trajectory
from ..stl.semantics import eval_bool, robustness
from .demos import InferenceFailed, Solver, collect_demo, infer_intervals
from .scene import MAX_GOALS, PlacementFailed, SceneSpec, clearance_ok, place_scene, sample_obstacle_count
from .templates import MIN_GOALS, Template, sample_spec

log = logging.getLogger(__name__)

FORMAT_VERSION = 1


class DatasetError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True, eq=False)
class DatasetRecord:
    spec: StlExpr
    template: Template
    scene: SceneSpec
    trajectories: tuple
    robustness: tuple

    def __post_init__(self):
        object.__setattr__(self, "template", Template(self.template))
        object.__setattr__(self, "trajectories", tuple(self.trajectories))
        object.__setattr__(self, "robustness", tuple(float(r) for r in self.robustness))
        if not self.trajectories:
            raise ValueError("a record needs at least one trajectory")
        if len(self.robustness) != len(self.trajectories):
            raise ValueError("one robustness value per trajectory")

    @classmethod
    def build(cls, spec, template, scene, trajectories) -> "DatasetRecord":
        return cls(spec, template, scene, trajectories, [robustness(t, 0, spec) for t in trajectories])

    def __eq__(self, other):
        if not isinstance(other, DatasetRecord):
            return NotImplemented
        return (self.spec == other.spec and self.template == other.template and self.scene == other.scene
                and self.trajectories == other.trajectories and self.robustness == other.robustness)

    def to_json(self) -> dict:
        return {"spec": to_json(self.spec), "template": self.template.value, "scene": self.scene.to_json(),
                "trajectories": [t.to_json() for t in self.trajectories],
                "robustness": list(self.robustness)}

    @classmethod
    def from_json(cls, obj: dict) -> "DatasetRecord":
        return cls(from_json(obj["spec"]), Template(obj["template"]), SceneSpec.from_json(obj["scene"]),
                   tuple(Trajectory.from_json(t) for t in obj["trajectories"]), tuple(obj["robustness"]))


def _line(obj) -> str:
    # json emits floats via repr, the shortest round-trip decimal
    return json.dumps(obj, separators=(",", ":"), allow_nan=False)


def write_dataset(records, path, env: EnvModel | dict | None = None) -> None:
    env_info = env.to_json() if isinstance(env, EnvModel) else env
    with open(path, "w") as fh:
        fh.write(_line({"version": FORMAT_VERSION, "env": env_info}) + "\n")
        for r in records:
            fh.write(_line(r.to_json()) + "\n")


def read_header(path) -> dict:
    with open(path) as fh:
        first = fh.readline()
    return _parse_header(first)


def _parse_header(text: str) -> dict:
    try:
        head = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DatasetError(f"bad header: {exc.msg}", 1) from None
    if not isinstance(head, dict) or "version" not in head:
        raise DatasetError("missing version header", 1)
    if head["version"] != FORMAT_VERSION:
        raise DatasetError(f"unsupported dataset version {head['version']!r}, expected {FORMAT_VERSION}", 1)
    return head


def read_dataset(path, verify: bool = True) -> list:
    """Load records; with ``verify`` every trajectory is re-checked with the boolean
    semantics and every scene's clearances are recomputed."""
    records = []
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise DatasetError("empty file, no header", 1)
    _parse_header(lines[0])
    for no, text in enumerate(lines[1:], start=2):
        if not text.strip():
            continue
        try:
            rec = DatasetRecord.from_json(json.loads(text))
        except json.JSONDecodeError as exc:
            raise DatasetError(f"parse error: {exc.msg}", no) from None
        except (KeyError, TypeError, ValueError) as exc:
            raise DatasetError(f"schema mismatch: {exc}", no) from None
        if verify:
            for tr in rec.trajectories:
                if not eval_bool(tr, 0, rec.spec):
                    raise DatasetError("stored trajectory does not satisfy its spec", no)
            if not clearance_ok(list(rec.scene.objects)):
                raise DatasetError("scene objects violate the clearance", no)
        records.append(rec)
    return records


def split_dataset(records, rng=None, train_frac: float = 0.8) -> tuple[list, list]:
    rng = np.random.default_rng(rng)
    idx = rng.permutation(len(records))
    cut = int(round(train_frac * len(records)))
    return [records[i] for i in sorted(idx[:cut])], [records[i] for i in sorted(idx[cut:])]


def default_solver(env: EnvModel) -> Solver:
    return Solver.ASTAR_TRACK if env.layout is not None else Solver.GRAD


def sample_goal_count(template: Template, rng) -> int:
    if template is Template.SINGLE:
        return 1
    return int(rng.integers(MIN_GOALS[template] if template is not Template.MULTI else 2, MAX_GOALS + 1))


def generate_record(env: EnvModel, template, rng, k: int = 2, solver=None,
                    n_obstacles: int | None = None) -> DatasetRecord | None:
    """One attempt: scene, spec, demos. ``None`` when the spec went unsolved."""
    template = Template(template)
    solver = Solver(solver) if solver is not None else default_solver(env)
    n_obs = sample_obstacle_count(rng) if n_obstacles is None else n_obstacles
    try:
        scene = place_scene(env, (sample_goal_count(template, rng), n_obs), rng)
    except PlacementFailed:
        return None
    if solver is Solver.ASTAR_TRACK:
        skeleton = sample_spec(template, scene, rng, env.T, env, skeleton=True)
        demos = collect_demo(env, skeleton, scene, solver, k, rng)
        if not demos:
            return None
        try:
            spec = infer_intervals(skeleton, demos[0], rng)
        except InferenceFailed:
            return None
        demos = [d for d in demos if robustness(d, 0, spec) >= 0 and eval_bool(d, 0, spec)]
    else:
        spec = sample_spec(template, scene, rng, env.T, env)
        demos = collect_demo(env, spec, scene, solver, k, rng)
    if not demos:
        return None
    return DatasetRecord.build(spec, template, scene, demos)


def generate_dataset(env: EnvModel, template, count: int, rng=None, k: int = 2, solver=None,
                     max_attempts: int | None = None) -> list:
    """``count`` records; unsolved specs are discarded and resampled."""
    rng = np.random.default_rng(rng)
    max_attempts = max_attempts if max_attempts is not None else 20 * max(count, 1)
    out = []
    attempts = 0
    while len(out) < count and attempts < max_attempts:
        attempts += 1
        rec = generate_record(env, template, rng, k, solver)
        if rec is not None:
            out.append(rec)
    if len(out) < count:
        raise RuntimeError(f"only {len(out)}/{count} records after {attempts} attempts")
    log.info("generated %d %s records in %d attempts", count, Template(template).value, attempts)
    return out
