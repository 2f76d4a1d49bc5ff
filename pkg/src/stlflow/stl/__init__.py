from .ast import (
    Always, And, Ap, Eventually, IntervalError, Not, Or, Polarity, Predicate, Shape,
    StlExpr, Top, Until, canonical_key, conj, depth, disj, dumps, from_json, loads,
    negate, predicates, size, to_json, walk,
)
from .parser import StlSyntaxError, parse, unparse
from .semantics import (
    HorizonError, eval_bool, horizon, predicate_value, robustness, robustness_batch,
    robustness_signal,
)
from .signal import Trajectory
from .smooth import Mode, SmoothConfig, smooth_robustness, smooth_robustness_batch

__all__ = [
    "Always", "And", "Ap", "Eventually", "IntervalError", "Not", "Or", "Polarity", "Predicate",
    "Shape", "StlExpr", "Top", "Until", "canonical_key", "conj", "depth", "disj", "dumps",
    "from_json", "loads", "negate", "predicates", "size", "to_json", "walk",
    "StlSyntaxError", "parse", "unparse", "HorizonError", "eval_bool", "horizon",
    "predicate_value", "robustness", "robustness_batch", "robustness_signal", "Trajectory",
    "Mode", "SmoothConfig", "smooth_robustness", "smooth_robustness_batch",
]
