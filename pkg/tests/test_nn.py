import math

import numpy as np
import pytest

from stlflow.datagen import DatasetRecord, SceneSpec, Template
from stlflow.envs import linear_env, rollout
from stlflow.graph import SpecGraph, graph_distinguishability, to_graph
from stlflow.nn import autodiff as ad
from stlflow.nn.flow import (
    FlowConfig, FlowModel, Normalizer, TrainConfig, best_of, block_to_trajectory, flow_loss, flow_time_grid,
    load_checkpoint, make_batch, sample, sample_blocks, save_checkpoint, time_embedding, train, trajectory_block,
)
from stlflow.nn.gcn import GcnConfig, GcnEncoder, INPUT_DIM, batch_graphs, gcn_forward, node_inputs
from stlflow.nn.layers import Adam, Dense, cosine_lr
from stlflow.stl import And, Ap, Or, Polarity, Predicate, Shape, Top, Trajectory, parse, robustness, walk

import oracles
from strategies import random_formula

SMALL_GCN = GcnConfig(layers=2, width=8, d_z=8)


def param_grad_check(params, loss_fn, rng, picks=6, h=1e-6):
    """Backprop gradient vs central differences on a few random entries of each parameter."""
    for p in params:
        p.grad = None
    loss_fn().backward()
    errs = []
    for p in params:
        for _ in range(picks):
            i = tuple(int(rng.integers(s)) for s in p.shape)
            old = p.data[i]
            p.data[i] = old + h
            up = float(loss_fn().data)
            p.data[i] = old - h
            dn = float(loss_fn().data)
            p.data[i] = old
            fd = (up - dn) / (2 * h)
            errs.append(abs(p.grad[i] - fd) / max(1.0, abs(fd)))
    return max(errs)


# --- autodiff micro-models --------------------------------------------------------

def micro_cases(kind, n, seed):
    rng = np.random.default_rng(seed)
    errs = []
    for _ in range(n):
        B, d_in, d_out = (int(v) for v in rng.integers(2, 6, 3))
        layer = Dense(d_in, d_out, rng)
        layer.b.data = rng.normal(size=d_out)
        x = ad.Tensor(rng.normal(size=(B, d_in)))
        target = rng.normal(size=(B, d_out))
        adj = rng.uniform(0, 1, (B, B))
        pool = np.full((1, B), 1.0 / B)
        if kind == "dense":
            f = lambda: ad.tsum(ad.square(layer(x)))  # noqa: E731
        elif kind == "relu":
            f = lambda: ad.tsum(ad.square(ad.relu(layer(x))))  # noqa: E731
        elif kind == "mean_readout":
            f = lambda: ad.tsum(ad.square(ad.spmm(pool, ad.relu(layer(x)))))  # noqa: E731
        elif kind == "graph_aggregation":
            f = lambda: ad.tsum(ad.square(layer(ad.spmm(adj, ad.relu(layer(x)) if d_in == d_out else x))))  # noqa: E731
        else:
            f = lambda: ad.mse(layer(x), target)  # noqa: E731
        errs.append(param_grad_check(layer.parameters(), f, rng, picks=3))
    return errs


@pytest.mark.parametrize("kind", ["dense", "relu", "mean_readout", "graph_aggregation", "mse"])
def test_micro_model_gradients(kind):
    assert max(micro_cases(kind, 50, hash(kind) % 1000)) <= 1e-4


def test_autodiff_elementwise_ops():
    rng = np.random.default_rng(2)
    for op in (ad.exp, lambda t: ad.log(ad.exp(t) + 1.0), lambda t: ad.logsumexp(t, axis=-1),
               lambda t: ad.softmin_reduce(t, 3.0), lambda t: ad.norm(t), lambda t: ad.infnorm(t),
               lambda t: ad.logcumsumexp(t, axis=-1)):
        x0 = rng.normal(size=(3, 4))
        x = ad.Tensor(x0.copy(), requires_grad=True)
        w = rng.normal(size=op(ad.Tensor(x0)).shape)
        ad.tsum(op(x) * w).backward()
        fd = oracles.central_diff(lambda v: float(np.sum(op(ad.Tensor(v)).data * w)), x0)
        assert oracles.rel_err(x.grad, fd) <= 1e-6


def test_no_grad_builds_no_tape():
    x = ad.Tensor(np.ones(3), requires_grad=True)
    with ad.no_grad():
        y = ad.tsum(ad.square(x))
    assert y._parents == ()


# --- GCN --------------------------------------------------------------------------

def test_node_input_layout():
    g = to_graph(parse("F[0,32] circle(5,0,2.5)"))
    x = node_inputs(g, 64, ((-5, 5), (-5, 5)))
    assert x.shape == (2, INPUT_DIM)
    assert x[0, 5] == 1 and x[1, 1] == 1
    np.testing.assert_allclose(x[0, 8:10], [0, 0.5])
    np.testing.assert_allclose(x[1, 10:14], [1.0, 0.0, 0.0, 0.5])


def test_single_node_embedding():
    enc = GcnEncoder(SMALL_GCN, 0)
    g = to_graph(Top())
    z = gcn_forward(enc, g)
    h = node_inputs(g, 64, ((-5, 5), (-5, 5)))
    for i, layer in enumerate(enc.layers):
        h = h @ layer.w.data + layer.b.data  # self-loop only: A_hat = [[1]]
        if i < len(enc.layers) - 1:
            h = np.maximum(h, 0)
    np.testing.assert_allclose(z, h[0], rtol=1e-14)


def test_gcn_matches_dense_oracle():
    enc = GcnEncoder(GcnConfig(layers=3, width=6, d_z=5), 1)
    g = to_graph(parse("(F[0,5] circle(1,1,1) | G[2,9] ~box(0,0,1)) & T U[0,3] circle(2,2,0.5)"))
    n = g.num_nodes
    A = np.eye(n)
    for s, d in g.edges:
        A[d, s] = 1.0
    deg = A.sum(axis=1)
    A_hat = A / np.sqrt(deg[:, None] * deg[None, :])
    # canonical relabelling is a permutation, which mean pooling ignores
    h = node_inputs(g, 64, ((-5, 5), (-5, 5)))
    for i, layer in enumerate(enc.layers):
        h = A_hat @ h @ layer.w.data + layer.b.data
        if i < 2:
            h = np.maximum(h, 0)
    with ad.no_grad():
        z = enc.forward(batch_graphs([g], canonical=False)).data[0]
    np.testing.assert_allclose(z, h.mean(axis=0), rtol=1e-12)
    np.testing.assert_allclose(gcn_forward(enc, g), z, rtol=1e-12)


def test_gcn_parameter_gradients():
    rng = np.random.default_rng(3)
    errs = []
    for k in range(50):
        enc = GcnEncoder(GcnConfig(layers=2, width=4, d_z=3), k)
        phis = [random_formula(rng, depth=3) for _ in range(2)]
        batch = batch_graphs([to_graph(p) for p in phis])
        target = rng.normal(size=(2, 3))
        errs.append(param_grad_check(enc.parameters(), lambda: ad.mse(enc.forward(batch), target), rng, picks=2))
    assert max(errs) <= 1e-4


def test_permutation_invariance():
    enc = GcnEncoder(GcnConfig(), 0)
    rng = np.random.default_rng(0)
    for _ in range(20):
        kids = tuple(random_formula(rng, depth=2) for _ in range(4))
        perm = tuple(kids[i] for i in rng.permutation(4))
        for op in (And, Or):
            assert np.array_equal(gcn_forward(enc, to_graph(op(kids))), gcn_forward(enc, to_graph(op(perm))))


def wl_distinct_pairs(count, seed):
    rng = np.random.default_rng(seed)
    pairs = []
    while len(pairs) < count:
        a, b = random_formula(rng, depth=3), random_formula(rng, depth=3)
        if graph_distinguishability(a, b):
            pairs.append((a, b))
    return pairs


def test_random_encoders_separate_wl_distinct_pairs():
    sep = 0
    for i, (a, b) in enumerate(wl_distinct_pairs(100, 1)):
        enc = GcnEncoder(GcnConfig(), i)
        sep += not np.allclose(gcn_forward(enc, to_graph(a)), gcn_forward(enc, to_graph(b)), rtol=0, atol=1e-12)
    assert sep >= 99


def test_batching_matches_single():
    enc = GcnEncoder(SMALL_GCN, 0)
    graphs = [to_graph(random_formula(np.random.default_rng(i))) for i in range(5)]
    with ad.no_grad():
        zb = enc.forward(batch_graphs(graphs)).data
    for g, z in zip(graphs, zb):
        np.testing.assert_allclose(z, gcn_forward(enc, g), rtol=1e-12, atol=1e-15)


# --- flow model ------------------------------------------------------------------

def tiny_model(T=4, hidden=(16,), seed=0, decode="rollout"):
    return FlowModel(FlowConfig(T=T, hidden=hidden, gcn=SMALL_GCN, decode=decode), linear_env(T=T), seed)


def demo(T=4, seed=0):
    env = linear_env(T=T)
    rng = np.random.default_rng(seed)
    return rollout(env, rng.uniform(-2, 2, 2), rng.uniform(-1, 1, (T, 2)))


def test_lr_schedule():
    assert cosine_lr(0, 1000) == 5e-4
    assert cosine_lr(900, 1000) == pytest.approx(5e-5)
    assert cosine_lr(999, 1000) == 5e-5
    assert cosine_lr(450, 1000) == pytest.approx(2.75e-4)
    lrs = [cosine_lr(e, 1000) for e in range(1000)]
    assert all(a >= b for a, b in zip(lrs, lrs[1:]))


def test_time_grid_and_embedding():
    np.testing.assert_allclose(flow_time_grid(4), [0, 0.25, 0.5, 0.75])
    e = time_embedding(np.array([0.0, 0.5]), 16)
    assert e.shape == (2, 16)
    np.testing.assert_array_equal(e[0, :8], 0)
    np.testing.assert_array_equal(e[0, 8:], 1)
    np.testing.assert_array_equal(time_embedding(np.array([0.3]), 0), [[0.3]])


def test_block_round_trip():
    tr = demo()
    back = block_to_trajectory(trajectory_block(tr), tr.states[0], linear_env(T=4))
    assert back == tr


def test_normalizer():
    blocks = np.random.default_rng(0).normal(3, 2, (10, 4, 4))
    norm = Normalizer.fit(blocks)
    np.testing.assert_allclose(norm.decode(norm.encode(blocks)), blocks)
    enc = norm.encode(blocks).reshape(-1, 4)
    np.testing.assert_allclose(enc.mean(0), 0, atol=1e-12)
    np.testing.assert_allclose(enc.std(0), 1)


def test_config_must_match_env():
    with pytest.raises(ValueError):
        FlowModel(FlowConfig(T=8), linear_env(T=4))


def test_flow_loss_teacher_forced_is_zero():
    model = tiny_model()
    tr = demo()
    batch = make_batch(model, [(to_graph(Top()), tr)] * 8)
    x1 = batch.x1
    model.velocity = lambda xt, x0n, z, t: ad.Tensor((x1 - xt.data) / (1 - t[:, None]))
    assert float(flow_loss(model, batch, 0, 100).data) == pytest.approx(0, abs=1e-20)


def test_flow_loss_zero_model_oracle():
    model = tiny_model()
    tr = demo()
    batch = make_batch(model, [(to_graph(Top()), tr)] * 4000)
    model.velocity = lambda xt, x0n, z, t: ad.Tensor(np.zeros_like(xt.data))
    loss = float(flow_loss(model, batch, 0).data)
    noise = np.random.default_rng(0).standard_normal(batch.x1.shape)
    assert loss == pytest.approx(np.mean((batch.x1 - noise) ** 2), rel=1e-12)
    # E||X1 - X0||^2 per entry = mean(X1^2) + 1 for standard normal X0
    assert loss == pytest.approx(np.mean(batch.x1[0] ** 2) + 1, rel=0.02)


def test_flow_loss_shape_mismatch():
    model = tiny_model(T=4)
    with pytest.raises(ValueError):
        make_batch(model, [(to_graph(Top()), demo(T=6))])


def test_flow_loss_parameter_gradients():
    rng = np.random.default_rng(5)
    errs = []
    for k in range(50):
        model = tiny_model(seed=k)
        pairs = [(to_graph(random_formula(rng, depth=2)), demo(seed=k + j)) for j in range(3)]
        batch = make_batch(model, pairs)
        params = model.parameters()
        picks = [params[i] for i in rng.choice(len(params), 3, replace=False)]
        errs.append(param_grad_check(picks, lambda: flow_loss(model, batch, k, 10), rng, picks=1))
    assert max(errs) <= 1e-4


def test_zero_velocity_sampler_returns_noise():
    model = tiny_model(decode="states")
    model.norm = Normalizer(np.array([1.0, 2.0, 0.0, 0.0]), np.array([2.0, 0.5, 1.0, 3.0]))
    model.velocity = lambda xt, x0n, z, t: ad.Tensor(np.zeros_like(np.asarray(getattr(xt, "data", xt))))
    x0 = np.array([0.3, -0.7])
    out = sample(model, to_graph(Top()), x0, 5, 3, 9)
    noise = model.norm.decode(np.random.default_rng(9).standard_normal((3, 16)).reshape(3, 4, 4))
    for tr, blk in zip(out, noise):
        np.testing.assert_array_equal(tr.states[0], x0)
        np.testing.assert_allclose(tr.states[1:4], blk[1:, :2])
        np.testing.assert_allclose(tr.controls, blk[:, 2:])


def test_rollout_decoding_obeys_dynamics():
    model = tiny_model()
    model.velocity = lambda xt, x0n, z, t: ad.Tensor(np.zeros_like(np.asarray(getattr(xt, "data", xt))))
    x0 = np.array([0.3, -0.7])
    for tr in sample(model, to_graph(Top()), x0, 3, 4, 2):
        assert np.array_equal(tr.states, rollout(model.env, x0, tr.controls).states)
    with pytest.raises(ValueError):
        FlowConfig(decode="euler")


def test_single_euler_step():
    model = tiny_model()
    seen = []

    def vel(xt, x0n, z, t):
        seen.append(t.copy())
        return ad.Tensor(np.full(np.shape(getattr(xt, "data", xt)), 2.0))
    model.velocity = vel
    blocks = sample_blocks(model, to_graph(Top()), [0, 0], 1, 2, 4)
    assert len(seen) == 1 and np.all(seen[0] == 0)
    np.testing.assert_allclose(blocks.reshape(2, -1), np.random.default_rng(4).standard_normal((2, 16)) + 2.0)
    with pytest.raises(ValueError):
        sample(model, to_graph(Top()), [0, 0], 0)


def test_best_of():
    s = [Trajectory(np.array([[x, 0.0], [x, 0.0]]), np.zeros((1, 2))) for x in (3.0, 1.0, -1.0, 1.0)]
    spec = parse("F[0,1] circle(0,0,2)")
    assert best_of(s[:1], spec) == (s[0], -1.0)
    tr, r = best_of(s, spec)
    assert tr is s[1] and r == 1.0
    assert r == max(robustness(x, 0, spec) for x in s)
    with pytest.raises(ValueError):
        best_of([], spec)


def test_checkpoint_round_trip(tmp_path):
    model = tiny_model(hidden=(8, 8))
    train(model, [DatasetRecord.build(Top(), Template.SINGLE, SceneSpec((), (), [0, 0], "Linear"), [demo()])],
          TrainConfig(epochs=3, n_steps=5))
    path = tmp_path / "m.ckpt"
    save_checkpoint(model, path)
    back = load_checkpoint(path)
    assert back.epoch == 3 and back.loss_history == model.loss_history
    assert back.cfg == model.cfg
    np.testing.assert_array_equal(back.norm.mean, model.norm.mean)
    g = to_graph(parse("F[0,3] circle(1,1,1)"))
    a = sample_blocks(model, g, [0.1, 0.2], 7, 4, 0)
    b = sample_blocks(back, g, [0.1, 0.2], 7, 4, 0)
    assert np.array_equal(a, b)
    head = path.read_bytes().split(b"\n", 1)[0]
    assert b'"stlflow-checkpoint"' in head
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(ValueError):
        load_checkpoint(bad)


def test_training_is_deterministic():
    recs = [DatasetRecord.build(Top(), Template.SINGLE, SceneSpec((), (), [0, 0], "Linear"), [demo(seed=i)])
            for i in range(3)]
    a, b = tiny_model(), tiny_model()
    train(a, recs, TrainConfig(epochs=4, batch_size=2, n_steps=5))
    train(b, recs, TrainConfig(epochs=4, batch_size=2, n_steps=5))
    assert a.loss_history == b.loss_history
    for p, q in zip(a.parameters(), b.parameters()):
        assert np.array_equal(p.data, q.data)


@pytest.fixture(scope="module")
def overfit():
    """A small model trained for 2000 steps on one record (its demo repeated to fill a batch)."""
    env = linear_env(T=2)
    tr = rollout(env, [0.5, -0.5], np.array([[1, 0.5], [0.2, -0.4]]))
    spec = parse("F[0,2] circle(1,0,1)")
    rec = DatasetRecord.build(spec, Template.SINGLE, SceneSpec((), (), [0.5, -0.5], "Linear"), [tr] * 256)
    model = FlowModel(FlowConfig(T=2, hidden=(256, 256), gcn=GcnConfig(layers=1, width=8, d_z=8)), env, 0)
    cfg = TrainConfig(epochs=2000, batch_size=256, lr=5e-3, lr_min=5e-5, n_steps=2)
    train(model, [rec], cfg)
    return model, spec, tr, cfg


def test_overfit_one_record(overfit):
    model, spec, tr, cfg = overfit
    batch = make_batch(model, [(to_graph(spec), tr)] * 1024)
    with ad.no_grad():
        loss = float(flow_loss(model, batch, 123, cfg.n_steps).data)
    assert loss < 1e-3


def test_samples_approach_memorized_trajectory(overfit):
    model, spec, tr, cfg = overfit
    for s in sample(model, to_graph(spec), tr.states[0], cfg.n_steps, 32, 7):
        assert np.max(np.abs(s.states - tr.states)) <= 0.05
        assert np.max(np.abs(s.controls - tr.controls)) <= 0.05
