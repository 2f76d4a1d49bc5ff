"""STL syntax tree.

Nodes are frozen dataclasses, so formulas are hashable and safe to share
between threads. Derived operators (Or, Eventually, Always) are first-class
nodes rather than sugar over Until/Not: the graph encoder wants one node per
surface operator.
"""
from __future__ import annotations

import enum
import json
import operator
from dataclasses import dataclass
from typing import Iterator, Union


class Shape(str, enum.Enum):
    CIRCLE = "Circle"
    BOX = "Box"


class Polarity(str, enum.Enum):
    REACH = "Reach"
    AVOID = "Avoid"


@dataclass(frozen=True)
class Predicate:
    """A reach/avoid region. ``extent`` is the radius (Circle) or half-side (Box)."""

    shape: Shape
    center: tuple[float, float, float]
    extent: float
    polarity: Polarity = Polarity.REACH

    def __post_init__(self):
        if not self.extent > 0:
            raise ValueError(f"predicate extent must be positive, got {self.extent}")
        if len(self.center) == 2:
            object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1]), 0.0))
        elif len(self.center) != 3:
            raise ValueError("predicate center must have 2 or 3 coordinates")
        else:
            object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        object.__setattr__(self, "shape", Shape(self.shape))
        object.__setattr__(self, "polarity", Polarity(self.polarity))
        object.__setattr__(self, "extent", float(self.extent))

    def negated(self) -> "Predicate":
        flipped = Polarity.AVOID if self.polarity is Polarity.REACH else Polarity.REACH
        return Predicate(self.shape, self.center, self.extent, flipped)

    def as_reach(self) -> "Predicate":
        return Predicate(self.shape, self.center, self.extent, Polarity.REACH)


@dataclass(frozen=True)
class Top:
    pass


@dataclass(frozen=True)
class Ap:
    pred: Predicate


@dataclass(frozen=True)
class Not:
    child: "StlExpr"


@dataclass(frozen=True)
class And:
    children: tuple["StlExpr", ...]

    def __post_init__(self):
        object.__setattr__(self, "children", tuple(self.children))
        if len(self.children) < 2:
            raise ValueError("And needs at least two children")


@dataclass(frozen=True)
class Or:
    children: tuple["StlExpr", ...]

    def __post_init__(self):
        object.__setattr__(self, "children", tuple(self.children))
        if len(self.children) < 2:
            raise ValueError("Or needs at least two children")


def _check_interval(node):
    a, b = operator.index(node.a), operator.index(node.b)
    if a < 0 or b < a:
        raise IntervalError(a, b)
    object.__setattr__(node, "a", a)
    object.__setattr__(node, "b", b)


@dataclass(frozen=True)
class Eventually:
    a: int
    b: int
    child: "StlExpr"

    def __post_init__(self):
        _check_interval(self)


@dataclass(frozen=True)
class Always:
    a: int
    b: int
    child: "StlExpr"

    def __post_init__(self):
        _check_interval(self)


@dataclass(frozen=True)
class Until:
    a: int
    b: int
    left: "StlExpr"
    right: "StlExpr"

    def __post_init__(self):
        _check_interval(self)


StlExpr = Union[Top, Ap, Not, And, Or, Eventually, Always, Until]

TEMPORAL = (Eventually, Always, Until)


class IntervalError(ValueError):
    def __init__(self, a, b, offset=None):
        self.a, self.b, self.offset = a, b, offset
        where = f" at offset {offset}" if offset is not None else ""
        super().__init__(f"invalid interval [{a},{b}]{where}: need 0 <= a <= b")


def children(node: StlExpr) -> tuple:
    if isinstance(node, (Top, Ap)):
        return ()
    if isinstance(node, Not):
        return (node.child,)
    if isinstance(node, (And, Or)):
        return node.children
    if isinstance(node, (Eventually, Always)):
        return (node.child,)
    if isinstance(node, Until):
        return (node.left, node.right)
    raise TypeError(f"not an STL node: {node!r}")


def walk(node: StlExpr) -> Iterator[StlExpr]:
    """Pre-order traversal."""
    stack = [node]
    while stack:
        cur = stack.pop()
        yield cur
        stack.extend(reversed(children(cur)))


def depth(node: StlExpr) -> int:
    kids = children(node)
    return 1 + max((depth(c) for c in kids), default=0)


def size(node: StlExpr) -> int:
    return sum(1 for _ in walk(node))


def predicates(node: StlExpr) -> list[Predicate]:
    return [n.pred for n in walk(node) if isinstance(n, Ap)]


def conj(*parts: StlExpr) -> StlExpr:
    """Flattened conjunction; drops Top operands, collapses singletons."""
    flat = []
    for p in parts:
        if isinstance(p, And):
            flat.extend(p.children)
        elif not isinstance(p, Top):
            flat.append(p)
    if not flat:
        return Top()
    if len(flat) == 1:
        return flat[0]
    return And(tuple(flat))


def disj(*parts: StlExpr) -> StlExpr:
    flat = []
    for p in parts:
        flat.extend(p.children if isinstance(p, Or) else (p,))
    if len(flat) == 1:
        return flat[0]
    return Or(tuple(flat))


def negate(node: StlExpr) -> StlExpr:
    """Negation that folds into predicates, mirroring the parser."""
    if isinstance(node, Ap):
        return Ap(node.pred.negated())
    return Not(node)


def canonical_key(node: StlExpr) -> str:
    """A string equal for formulas that differ only by And/Or child order."""
    if isinstance(node, Top):
        return "T"
    if isinstance(node, Ap):
        p = node.pred
        return f"{p.shape.value}{p.polarity.value}({p.center!r},{p.extent!r})"
    if isinstance(node, Not):
        return f"~({canonical_key(node.child)})"
    if isinstance(node, (And, Or)):
        op = "&" if isinstance(node, And) else "|"
        return op + "(" + ",".join(sorted(canonical_key(c) for c in node.children)) + ")"
    if isinstance(node, Eventually):
        return f"F[{node.a},{node.b}]({canonical_key(node.child)})"
    if isinstance(node, Always):
        return f"G[{node.a},{node.b}]({canonical_key(node.child)})"
    return f"U[{node.a},{node.b}]({canonical_key(node.left)},{canonical_key(node.right)})"


# --- JSON interchange -------------------------------------------------------

def to_json(node: StlExpr) -> dict:
    if isinstance(node, Top):
        return {"kind": "Top"}
    if isinstance(node, Ap):
        p = node.pred
        return {"kind": "Ap", "pred": {
            "shape": p.shape.value, "cx": p.center[0], "cy": p.center[1], "cz": p.center[2],
            "extent": p.extent, "polarity": p.polarity.value}}
    out: dict = {"kind": type(node).__name__}
    if isinstance(node, TEMPORAL):
        out["a"], out["b"] = node.a, node.b
    out["children"] = [to_json(c) for c in children(node)]
    return out


def from_json(obj: dict) -> StlExpr:
    kind = obj["kind"]
    if kind == "Top":
        return Top()
    if kind == "Ap":
        p = obj["pred"]
        return Ap(Predicate(Shape(p["shape"]), (p["cx"], p["cy"], p.get("cz", 0.0)),
                            p["extent"], Polarity(p["polarity"])))
    kids = [from_json(c) for c in obj.get("children", [])]
    if kind == "Not":
        return Not(kids[0])
    if kind == "And":
        return And(tuple(kids))
    if kind == "Or":
        return Or(tuple(kids))
    a, b = int(obj["a"]), int(obj["b"])
    if kind == "Eventually":
        return Eventually(a, b, kids[0])
    if kind == "Always":
        return Always(a, b, kids[0])
    if kind == "Until":
        return Until(a, b, kids[0], kids[1])
    raise ValueError(f"unknown node kind {kind!r}")


def dumps(node: StlExpr) -> str:
    return json.dumps(to_json(node))


def loads(text: str) -> StlExpr:
    return from_json(json.loads(text))
