from .dataset import (
    DatasetError, DatasetRecord, generate_dataset, generate_record, read_dataset, read_header,
    split_dataset, write_dataset,
)
from .demos import InferenceFailed, Solver, collect_demo, infer_intervals, satisfies
from .scene import PlacementFailed, SceneSpec, clearance_ok, place_scene, sample_obstacle_count
from .templates import InsufficientGoals, Template, conforms, sample_spec, sequential_chain

__all__ = [
    "DatasetError", "DatasetRecord", "generate_dataset", "generate_record", "read_dataset",
    "read_header", "split_dataset", "write_dataset", "InferenceFailed", "Solver", "collect_demo",
    "infer_intervals", "satisfies", "PlacementFailed", "SceneSpec", "clearance_ok", "place_scene", "sample_obstacle_count",
    "InsufficientGoals", "Template", "conforms", "sample_spec", "sequential_chain",
]
