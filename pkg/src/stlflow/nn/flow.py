"""Conditional flow matching over (state, control) blocks.

A trajectory is stored as a ``T x (n+m)`` block whose row ``t`` is
``[x_t, u_t]``. The velocity network sees the noisy block, the normalized
initial state, the spec embedding and a time embedding; the encoder and the
network are trained jointly on ``||H(X_t) - (X_1 - X_0)||^2``.
"""
from __future__ import annotations

import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ..envs.dynamics import EnvModel, rollout, rollout_batch, step
from ..envs.maze import MazeLayout
from ..graph import SpecGraph, to_graph
from ..stl.semantics import robustness_batch
from ..stl.signal import Trajectory
from . import autodiff as ad
from .gcn import GcnConfig, GcnEncoder, batch_graphs, prepare_graph
from .layers import Adam, Dense, cosine_lr

log = logging.getLogger(__name__)

MAGIC = "stlflow-checkpoint"
DECODE_MODES = ("rollout", "states")


@dataclass(frozen=True)
class FlowConfig:
    T: int = 64
    n: int = 2
    m: int = 2
    hidden: tuple = (512, 512)
    t_embed: int = 16  # 0 feeds the raw scalar t
    gcn: GcnConfig = field(default_factory=GcnConfig)
    decode: str = "rollout"  # "rollout": states from stepping the sampled controls; "states": raw rows

    def __post_init__(self):
        if self.decode not in DECODE_MODES:
            raise ValueError(f"decode must be one of {DECODE_MODES}")

    @property
    def block_dim(self) -> int:
        return self.T * (self.n + self.m)

    def to_json(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d

    @classmethod
    def from_json(cls, d: dict) -> "FlowConfig":
        d = dict(d)
        d["hidden"] = tuple(d["hidden"])
        d["gcn"] = GcnConfig(**d["gcn"])
        return cls(**d)


def time_embedding(t: np.ndarray, dim: int) -> np.ndarray:
    """``(B,) -> (B, dim)`` sinusoidal features; ``dim == 0`` returns ``t`` as one column."""
    t = np.asarray(t, dtype=np.float64).reshape(-1, 1)
    if dim == 0:
        return t
    half = dim // 2
    freqs = np.exp(np.linspace(0.0, math.log(1000.0), half))
    ang = t * freqs[None]
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=1)


class FlowNet:
    """MLP velocity field."""

    def __init__(self, cfg: FlowConfig, rng):
        self.cfg = cfg
        t_dim = cfg.t_embed if cfg.t_embed else 1
        dims = [cfg.block_dim + cfg.n + cfg.gcn.d_z + t_dim, *cfg.hidden, cfg.block_dim]
        self.layers = [Dense(dims[i], dims[i + 1], rng, f"flow{i}") for i in range(len(dims) - 1)]

    def parameters(self) -> list:
        return [p for layer in self.layers for p in layer.parameters()]

    def __call__(self, xt: ad.Tensor, x0: np.ndarray, z: ad.Tensor, t: np.ndarray) -> ad.Tensor:
        h = ad.concat([xt, ad.Tensor(x0), z, ad.Tensor(time_embedding(t, self.cfg.t_embed))], axis=1)
        for i, layer in enumerate(self.layers):
            h = layer(h)
            if i < len(self.layers) - 1:
                h = ad.relu(h)
        return h


@dataclass
class Normalizer:
    """Per-dimension standardization of the ``n+m`` block columns."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, blocks: np.ndarray) -> "Normalizer":
        flat = blocks.reshape(-1, blocks.shape[-1])
        std = flat.std(axis=0)
        return cls(flat.mean(axis=0), np.where(std > 1e-8, std, 1.0))

    @classmethod
    def identity(cls, dim: int) -> "Normalizer":
        return cls(np.zeros(dim), np.ones(dim))

    def encode(self, block: np.ndarray) -> np.ndarray:
        return (block - self.mean) / self.std

    def decode(self, block: np.ndarray) -> np.ndarray:
        return block * self.std + self.mean


class FlowModel:
    """Encoder, velocity network and normalization together; the unit that is saved."""

    def __init__(self, cfg: FlowConfig, env: EnvModel, seed: int = 0):
        if (env.n, env.m, env.T) != (cfg.n, cfg.m, cfg.T):
            raise ValueError("flow config does not match the environment dimensions")
        self.cfg, self.env, self.seed = cfg, env, seed
        rng = np.random.default_rng(seed)
        self.encoder = GcnEncoder(cfg.gcn, rng)
        self.net = FlowNet(cfg, rng)
        self.norm = Normalizer.identity(cfg.n + cfg.m)
        self.epoch = 0
        self.loss_history: list = []

    def parameters(self) -> list:
        return self.encoder.parameters() + self.net.parameters()

    def embed(self, graphs) -> ad.Tensor:
        return self.encoder.forward(batch_graphs(graphs, self.cfg.T, self.env.workspace))

    def norm_x0(self, x0: np.ndarray) -> np.ndarray:
        n = self.cfg.n
        return (np.atleast_2d(x0) - self.norm.mean[:n]) / self.norm.std[:n]

    def velocity(self, xt, x0n, z, t) -> ad.Tensor:
        return self.net(ad.as_tensor(xt), x0n, z, t)


def trajectory_block(traj: Trajectory) -> np.ndarray:
    """``(T, n+m)`` rows ``[x_t, u_t]`` for ``t < T``."""
    return np.concatenate([traj.states[:-1], traj.controls], axis=1)


def block_to_trajectory(block: np.ndarray, x0, env: EnvModel, decode: str = "states") -> Trajectory:
    """Turn a ``(T, n+m)`` block back into a trajectory.

    ``states``: rows are kept, row 0 is pinned to ``x0`` and ``x_T`` is one
    dynamics step past the last row (exact inverse of ``trajectory_block``).
    ``rollout``: only the controls are kept and the states are re-simulated
    from ``x0``, so the result always obeys the dynamics.
    """
    n = env.n
    controls = block[:, n:].copy()
    if decode == "rollout":
        return rollout(env, np.asarray(x0, dtype=np.float64), controls)
    states = block[:, :n].copy()
    states[0] = x0
    last = step(env, states[-1], controls[-1])
    return Trajectory(np.vstack([states, last[None]]), controls, env.dt)


# --- loss and training ------------------------------------------------------------

@dataclass
class FlowBatch:
    graphs: list
    x0: np.ndarray  # (B, n) raw
    x1: np.ndarray  # (B, T*(n+m)) normalized


def make_batch(model: FlowModel, pairs) -> FlowBatch:
    """``pairs`` of (SpecGraph, Trajectory)."""
    graphs = [g for g, _ in pairs]
    x0 = np.stack([tr.states[0] for _, tr in pairs])
    x1 = np.stack([model.norm.encode(trajectory_block(tr)).ravel() for _, tr in pairs])
    if x1.shape[1] != model.cfg.block_dim:
        raise ValueError(f"trajectory block has {x1.shape[1]} entries, model expects {model.cfg.block_dim}")
    return FlowBatch(graphs, x0, x1)


def flow_time_grid(n_steps: int) -> np.ndarray:
    """Training times ``{0, 1/N, ..., (N-1)/N}``: the points the Euler sampler evaluates."""
    return np.arange(n_steps) / n_steps


def flow_loss(model: FlowModel, batch: FlowBatch, rng, n_steps: int = 100) -> ad.Tensor:
    """Scalar flow-matching loss; call ``.backward()`` to fill parameter gradients."""
    rng = np.random.default_rng(rng)
    B, D = batch.x1.shape
    noise = rng.standard_normal((B, D))
    t = rng.choice(flow_time_grid(n_steps), size=B)
    xt = t[:, None] * batch.x1 + (1 - t[:, None]) * noise
    z = model.embed(batch.graphs)
    pred = model.velocity(xt, model.norm_x0(batch.x0), z, t)
    return ad.mse(pred, batch.x1 - noise)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    batch_size: int = 64
    lr: float = 5e-4
    lr_min: float = 5e-5
    decay_frac: float = 0.9
    n_steps: int = 100
    seed: int = 0


def training_pairs(model: FlowModel, records) -> list:
    pairs = []
    for r in records:
        g = prepare_graph(to_graph(r.spec), model.cfg.T, model.env.workspace)
        pairs.extend((g, tr) for tr in r.trajectories)
    return pairs


def train(model: FlowModel, records, cfg: TrainConfig = TrainConfig(), fit_norm: bool = True) -> FlowModel:
    """Minibatch Adam; every (spec, demonstration) pair is one example."""
    pairs = training_pairs(model, records)
    if not pairs:
        raise ValueError("empty dataset")
    if fit_norm:
        model.norm = Normalizer.fit(np.stack([trajectory_block(tr) for _, tr in pairs]))
    rng = np.random.default_rng(cfg.seed)
    params = model.parameters()
    opt = Adam(params, cfg.lr)
    for epoch in range(cfg.epochs):
        lr = cosine_lr(epoch, cfg.epochs, cfg.lr, cfg.lr_min, cfg.decay_frac)
        order = rng.permutation(len(pairs))
        total, seen = 0.0, 0
        for s in range(0, len(pairs), cfg.batch_size):
            idx = order[s:s + cfg.batch_size]
            batch = make_batch(model, [pairs[i] for i in idx])
            opt.zero_grad()
            loss = flow_loss(model, batch, rng, cfg.n_steps)
            loss.backward()
            opt.step(lr)
            total += float(loss.data) * len(idx)
            seen += len(idx)
        model.epoch += 1
        model.loss_history.append(total / seen)
        log.debug("epoch %d lr %.2e loss %.5f", model.epoch, lr, total / seen)
    return model


# --- sampling -------------------------------------------------------------------------

def sample(model: FlowModel, g: SpecGraph, x0, n_steps: int = 100, count: int = 64, rng=None) -> list:
    """``count`` trajectories by Euler integration of the learned field from ``t=0`` to ``t=1``,
    decoded per ``model.cfg.decode``."""
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    blocks = sample_blocks(model, g, x0, n_steps, count, rng)
    env = model.env
    if model.cfg.decode == "rollout":
        # one batched rollout instead of count separate ones
        states, u = rollout_batch(env, np.asarray(x0, dtype=np.float64), blocks[:, :, env.n:])
        return [Trajectory(s, c, env.dt) for s, c in zip(states, u)]
    return [block_to_trajectory(b, x0, env, "states") for b in blocks]


def sample_blocks(model: FlowModel, g: SpecGraph, x0, n_steps: int, count: int, rng=None) -> np.ndarray:
    rng = np.random.default_rng(rng)
    cfg = model.cfg
    psi = rng.standard_normal((count, cfg.block_dim))
    x0n = np.repeat(model.norm_x0(np.asarray(x0, dtype=np.float64)), count, axis=0)
    with ad.no_grad():
        z = model.embed([g])
        zb = ad.Tensor(np.repeat(z.data, count, axis=0))
        for i in range(n_steps):
            t = np.full(count, i / n_steps)
            psi = psi + model.velocity(psi, x0n, zb, t).data / n_steps
    return model.norm.decode(psi.reshape(count, cfg.T, cfg.n + cfg.m))


def best_of(samples, spec) -> tuple[Trajectory, float]:
    """Highest hard robustness at t=0; the lowest index wins ties."""
    if len(samples) == 0:
        raise ValueError("best_of needs at least one sample")
    scores = robustness_batch(np.stack([s.states for s in samples]), spec)
    i = int(np.argmax(scores))  # first maximum
    return samples[i], float(scores[i])


# --- checkpoints -------------------------------------------------------------------------

def save_checkpoint(model: FlowModel, path) -> None:
    """One JSON header line, then every parameter as little-endian float64 in header order."""
    params = model.parameters()
    header = {
        "format": MAGIC, "version": 1,
        "config": model.cfg.to_json(),
        "env": {"name": model.env.name, "T": model.env.T, "dt": model.env.dt,
                "layout": model.env.layout.to_json() if model.env.layout is not None else None},
        "params": [{"name": p.name, "shape": list(p.shape)} for p in params],
        "norm": {"mean": model.norm.mean.tolist(), "std": model.norm.std.tolist()},
        "seed": model.seed, "epoch": model.epoch, "loss_history": model.loss_history,
    }
    buf = io.BytesIO()
    for p in params:
        buf.write(np.ascontiguousarray(p.data, dtype="<f8").tobytes())
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode() + b"\n")
        fh.write(buf.getvalue())


def load_checkpoint(path) -> FlowModel:
    from ..envs.dynamics import make_env

    with open(path, "rb") as fh:
        head_line = fh.readline()
        body = fh.read()
    try:
        header = json.loads(head_line)
    except json.JSONDecodeError as exc:
        raise ValueError(f"not a checkpoint: {exc.msg}") from None
    if header.get("format") != MAGIC:
        raise ValueError("not a checkpoint file")
    cfg = FlowConfig.from_json(header["config"])
    e = header["env"]
    kw = {"T": e["T"], "dt": e["dt"]}
    if e.get("layout") is not None:
        kw["layout"] = MazeLayout.from_json(e["layout"])
    model = FlowModel(cfg, make_env(e["name"], **kw), header["seed"])
    params = model.parameters()
    if [list(p.shape) for p in params] != [d["shape"] for d in header["params"]]:
        raise ValueError("checkpoint parameter shapes do not match the config")
    total = sum(p.data.size for p in params)
    if len(body) != 8 * total:
        raise ValueError(f"checkpoint body has {len(body)} bytes, expected {8 * total}")
    flat = np.frombuffer(body, dtype="<f8")
    off = 0
    for p in params:
        p.data = flat[off:off + p.data.size].reshape(p.shape).astype(np.float64)
        off += p.data.size
    model.norm = Normalizer(np.asarray(header["norm"]["mean"]), np.asarray(header["norm"]["std"]))
    model.epoch = header["epoch"]
    model.loss_history = list(header["loss_history"])
    return model
