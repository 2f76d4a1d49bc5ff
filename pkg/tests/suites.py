"""Seeded problem suites shared by unit and acceptance tests."""
import numpy as np

from stlflow.datagen import Template, place_scene, sample_obstacle_count, sample_spec


def single_goal_suite(env, count, seed=0):
    """``count`` (scene, spec) pairs from the single-goal template."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        scene = place_scene(env, (1, sample_obstacle_count(rng)), rng)
        out.append((scene, sample_spec(Template.SINGLE, scene, rng, T=env.T, env=env)))
    return out


TOY_RECORDS = 500
TOY_EPOCHS = 1000
TOY_DATA_SEED = 123


def build_toy_flow():
    """Generate the single-goal Linear corpus and train the toy flow model on its train split.

    Returns a dict with the records, splits, trained and untrained models, and wall times.
    """
    import time

    from stlflow.datagen import generate_dataset, split_dataset
    from stlflow.envs import linear_env
    from stlflow.nn.flow import FlowConfig, FlowModel, TrainConfig, train

    env = linear_env()
    t0 = time.perf_counter()
    recs = generate_dataset(env, Template.SINGLE, TOY_RECORDS, np.random.default_rng(TOY_DATA_SEED), k=2)
    gen_s = time.perf_counter() - t0
    tr, va = split_dataset(recs, 0)
    untrained = FlowModel(FlowConfig(T=env.T, n=env.n, m=env.m), env, seed=0)
    model = FlowModel(FlowConfig(T=env.T, n=env.n, m=env.m), env, seed=0)
    t0 = time.perf_counter()
    train(model, tr, TrainConfig(epochs=TOY_EPOCHS, seed=0))
    train_s = time.perf_counter() - t0
    return {"env": env, "records": recs, "train": tr, "val": va, "model": model,
            "untrained": untrained, "gen_seconds": gen_s, "train_seconds": train_s}
