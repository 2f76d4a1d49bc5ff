"""Graph convolutional encoder for spec graphs.

Each layer computes ``H <- A_hat H W + b`` with
``A_hat = D^-1/2 (A + I) D^-1/2`` where ``A[parent, child] = 1``, so a node
aggregates itself and its children. ReLU sits between layers and the graph
embedding is the mean of the final node states.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ..stl.ast import Ap
from ..graph import FEATURE_DIM, TYPE_IDS, SpecGraph, canonical_order
from . import autodiff as ad
from .layers import Dense

N_TYPES = len(TYPE_IDS)
INPUT_DIM = N_TYPES + FEATURE_DIM - 1  # one-hot type plus the 7 numeric features


@dataclass(frozen=True)
class GcnConfig:
    layers: int = 4
    width: int = 64
    d_z: int = 64

    def __post_init__(self):
        if self.layers < 1:
            raise ValueError("need at least one layer")


def node_inputs(g: SpecGraph, T: int, workspace) -> np.ndarray:
    """One-hot type, times scaled by 1/T, coordinates and extent scaled to the workspace.

    Fields that do not apply to a node type are zero.
    """
    f = g.features
    ws = np.asarray(workspace, dtype=np.float64)
    mid = ws.mean(axis=1)
    half = 0.5 * (ws[:, 1] - ws[:, 0])
    scale = float(half.max())
    types = f[:, 0].astype(int)
    out = np.zeros((g.num_nodes, INPUT_DIM))
    out[np.arange(g.num_nodes), types] = 1.0
    timed = f[:, 1] >= 0
    out[timed, N_TYPES] = f[timed, 1] / T
    out[timed, N_TYPES + 1] = f[timed, 2] / T
    ap = types == TYPE_IDS[Ap]
    out[ap, N_TYPES + 2] = (f[ap, 3] - mid[0]) / half[0]
    out[ap, N_TYPES + 3] = (f[ap, 4] - mid[1]) / half[1]
    out[ap, N_TYPES + 4] = f[ap, 5] / scale
    out[ap, N_TYPES + 5] = f[ap, 6] / scale
    out[:, N_TYPES + 6] = f[:, 7]
    return out


def _adjacency_coo(g: SpecGraph):
    n = g.num_nodes
    e = np.asarray(g.edges, dtype=np.int64).reshape(-1, 2)
    rows = np.concatenate([e[:, 1], np.arange(n)])
    cols = np.concatenate([e[:, 0], np.arange(n)])
    deg = np.bincount(rows, minlength=n).astype(np.float64)  # children + self
    inv = 1.0 / np.sqrt(deg)
    return rows, cols, inv[rows] * inv[cols]


def normalized_adjacency(g: SpecGraph) -> sp.csr_matrix:
    rows, cols, vals = _adjacency_coo(g)
    return sp.csr_matrix((vals, (rows, cols)), shape=(g.num_nodes, g.num_nodes))


@dataclass(frozen=True, eq=False)
class PreparedGraph:
    """Encoder inputs for one graph, computed once and reused across batches."""

    x: np.ndarray
    rows: np.ndarray
    cols: np.ndarray
    vals: np.ndarray

    @property
    def num_nodes(self) -> int:
        return self.x.shape[0]


def prepare_graph(g: SpecGraph, T: int, workspace, canonical: bool = True) -> PreparedGraph:
    """With ``canonical`` the graph is first relabelled by ``canonical_order`` so graphs
    differing only in And/Or child order produce identical inputs."""
    if canonical:
        g = canonical_order(g)
    return PreparedGraph(node_inputs(g, T, workspace), *_adjacency_coo(g))


@dataclass
class GraphBatch:
    x: np.ndarray  # (V_total, INPUT_DIM)
    adj: sp.csr_matrix  # block diagonal (V_total, V_total)
    pool: sp.csr_matrix  # (B, V_total) mean-pooling rows


def batch_graphs(graphs, T: int = 64, workspace=((-5.0, 5.0), (-5.0, 5.0)), canonical: bool = True) -> GraphBatch:
    """Stack graphs (``SpecGraph`` or ``PreparedGraph``) into one block-diagonal problem."""
    preps = [g if isinstance(g, PreparedGraph) else prepare_graph(g, T, workspace, canonical) for g in graphs]
    sizes = np.array([p.num_nodes for p in preps])
    offs = np.concatenate([[0], np.cumsum(sizes)[:-1]])
    V = int(sizes.sum())
    rows = np.concatenate([p.rows + o for p, o in zip(preps, offs)])
    cols = np.concatenate([p.cols + o for p, o in zip(preps, offs)])
    vals = np.concatenate([p.vals for p in preps])
    adj = sp.csr_matrix((vals, (rows, cols)), shape=(V, V))
    prow = np.repeat(np.arange(len(preps)), sizes)
    pool = sp.csr_matrix((np.repeat(1.0 / sizes, sizes), (prow, np.arange(V))), shape=(len(preps), V))
    return GraphBatch(np.concatenate([p.x for p in preps], axis=0), adj, pool)


class GcnEncoder:
    def __init__(self, cfg: GcnConfig = GcnConfig(), rng=None):
        rng = np.random.default_rng(rng)
        self.cfg = cfg
        dims = [INPUT_DIM] + [cfg.width] * (cfg.layers - 1) + [cfg.d_z]
        self.layers = [Dense(dims[i], dims[i + 1], rng, f"gcn{i}") for i in range(cfg.layers)]

    def parameters(self) -> list:
        return [p for layer in self.layers for p in layer.parameters()]

    def forward(self, batch: GraphBatch) -> ad.Tensor:
        h = ad.Tensor(batch.x)
        for i, layer in enumerate(self.layers):
            h = layer(ad.spmm(batch.adj, h))
            if i < len(self.layers) - 1:
                h = ad.relu(h)
        return ad.spmm(batch.pool, h)


def gcn_forward(enc: GcnEncoder, g: SpecGraph, T: int = 64, workspace=((-5.0, 5.0), (-5.0, 5.0))) -> np.ndarray:
    """Embedding ``(d_z,)`` of one graph."""
    with ad.no_grad():
        return enc.forward(batch_graphs([g], T, workspace)).data[0].copy()
