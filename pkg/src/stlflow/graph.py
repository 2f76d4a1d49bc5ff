"""Syntax trees as directed feature graphs.

Each operator and predicate becomes a node with an 8-d feature row::

    [type_id, t_start, t_end, x, y, z, extent, until_left_flag]

Edges point from child to parent. Avoid-polarity predicates are emitted as a
``Not`` node over a reach predicate, so polarity is carried by structure.
"""
from __future__ import annotations

import hashlib
import json
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .stl.ast import (
    Always, And, Ap, Eventually, Not, Or, Polarity, StlExpr, Top, Until, children,
)

TYPE_IDS = {Top: 0, Ap: 1, Not: 2, And: 3, Or: 4, Eventually: 5, Always: 6, Until: 7}
FEATURE_DIM = 8


@dataclass(frozen=True, eq=False)
class SpecGraph:
    features: np.ndarray  # (V, 8)
    edges: tuple  # ((src, dst), ...) with src = child, dst = parent
    root: int = 0

    @property
    def num_nodes(self) -> int:
        return self.features.shape[0]

    def __eq__(self, other):
        if not isinstance(other, SpecGraph):
            return NotImplemented
        return (self.root == other.root and tuple(self.edges) == tuple(other.edges)
                and np.array_equal(self.features, other.features))

    def to_json(self) -> dict:
        return {"features": self.features.tolist(), "edges": [list(e) for e in self.edges], "root": self.root}

    @classmethod
    def from_json(cls, obj: dict) -> "SpecGraph":
        feats = np.asarray(obj["features"], dtype=np.float64).reshape(-1, FEATURE_DIM)
        return cls(feats, tuple((int(s), int(d)) for s, d in obj["edges"]), int(obj["root"]))

    def dumps(self) -> str:
        return json.dumps(self.to_json())

    @classmethod
    def loads(cls, text: str) -> "SpecGraph":
        return cls.from_json(json.loads(text))


def _row(node, until_left: bool) -> list[float]:
    row = [float(TYPE_IDS[type(node)]), -1.0, -1.0, -1.0, -1.0, -1.0, -1.0, float(until_left)]
    if isinstance(node, (Eventually, Always, Until)):
        row[1], row[2] = float(node.a), float(node.b)
    if isinstance(node, Ap):
        row[3:6] = node.pred.center
        row[6] = node.pred.extent
    return row


def to_graph(phi: StlExpr) -> SpecGraph:
    """Depth-first, root first, children left to right."""
    rows: list = []
    edges: list = []

    def visit(node, parent, until_left):
        if isinstance(node, Ap) and node.pred.polarity is Polarity.AVOID:
            me = len(rows)
            rows.append(_row(Not(node), until_left))
            if parent is not None:
                edges.append((me, parent))
            visit(Ap(node.pred.as_reach()), me, False)
            return
        me = len(rows)
        rows.append(_row(node, until_left))
        if parent is not None:
            edges.append((me, parent))
        kids = children(node)
        for i, c in enumerate(kids):
            visit(c, me, isinstance(node, Until) and i == 0)

    visit(phi, None, False)
    return SpecGraph(np.asarray(rows, dtype=np.float64), tuple(edges), 0)


def child_lists(g: SpecGraph) -> list[list[int]]:
    kids = [[] for _ in range(g.num_nodes)]
    for src, dst in g.edges:
        kids[dst].append(src)
    return kids


def canonical_order(g: SpecGraph) -> SpecGraph:
    """Relabel nodes so graphs differing only in sibling storage order become identical.

    Subtrees are keyed bottom-up by (features, sorted child keys); nodes are
    then laid out depth-first with siblings sorted by key.
    """
    kids = child_lists(g)
    keys: dict = {}

    def key(v):
        if v not in keys:
            keys[v] = (tuple(g.features[v].tolist()), tuple(sorted(key(c) for c in kids[v])))
        return keys[v]

    order: list = []
    stack = [g.root]
    while stack:
        v = stack.pop()
        order.append(v)
        stack.extend(sorted(kids[v], key=key, reverse=True))
    new_id = {old: i for i, old in enumerate(order)}
    edges = tuple(sorted((new_id[s], new_id[d]) for s, d in g.edges))
    return SpecGraph(g.features[order].copy(), edges, new_id[g.root])


# --- out-of-distribution augmentation -----------------------------------------

def _paths_to_nary(node, prefix=()):
    if isinstance(node, (And, Or)):
        yield prefix
    for i, c in enumerate(children(node)):
        yield from _paths_to_nary(c, prefix + (i,))


def _get(node, path):
    for i in path:
        node = children(node)[i]
    return node


def _replace(node, path, new):
    if not path:
        return new
    i, rest = path[0], path[1:]
    kids = list(children(node))
    kids[i] = _replace(kids[i], rest, new)
    if isinstance(node, Not):
        return Not(kids[0])
    if isinstance(node, And):
        return And(tuple(kids))
    if isinstance(node, Or):
        return Or(tuple(kids))
    if isinstance(node, Eventually):
        return Eventually(node.a, node.b, kids[0])
    if isinstance(node, Always):
        return Always(node.a, node.b, kids[0])
    return Until(node.a, node.b, kids[0], kids[1])


def augment_duplicate_children(phi: StlExpr, count: int, rng=None) -> StlExpr:
    """Apply ``count`` rounds of "pick a random And/Or node, append a copy of one of its children".

    Robustness is unchanged because min/max are idempotent.
    """
    if count < 0:
        raise ValueError("count must be nonnegative")
    rng = np.random.default_rng(rng)
    for _ in range(count):
        paths = list(_paths_to_nary(phi))
        if not paths:
            break
        path = paths[rng.integers(len(paths))]
        target = _get(phi, path)
        dup = target.children[rng.integers(len(target.children))]
        grown = type(target)(target.children + (dup,))
        phi = _replace(phi, path, grown)
    return phi


# --- 1-WL color refinement ------------------------------------------------------

def _digest(obj) -> str:
    return hashlib.sha1(repr(obj).encode()).hexdigest()[:16]


def wl_signature(g: SpecGraph, iterations: int | None = None) -> tuple:
    """Sorted color multiset after 1-WL refinement (in- and out-neighbours kept apart)."""
    n = g.num_nodes
    ins = [[] for _ in range(n)]
    outs = [[] for _ in range(n)]
    for s, d in g.edges:
        outs[s].append(d)
        ins[d].append(s)
    colors = [_digest(tuple(row)) for row in g.features.tolist()]
    for _ in range(iterations if iterations is not None else n):
        new = [_digest((colors[v], tuple(sorted(colors[u] for u in ins[v])),
                        tuple(sorted(colors[u] for u in outs[v])))) for v in range(n)]
        # refinement on a fixed graph only splits classes; stop once stable
        if len(set(new)) == len(set(colors)):
            colors = new
            break
        colors = new
    return tuple(sorted(Counter(colors).items()))


def graph_distinguishability(phi1: StlExpr, phi2: StlExpr) -> bool:
    """True when 1-WL refinement tells the two spec graphs apart."""
    g1, g2 = to_graph(phi1), to_graph(phi2)
    if g1.num_nodes != g2.num_nodes:
        return True
    return wl_signature(g1) != wl_signature(g2)
