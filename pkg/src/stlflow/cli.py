"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 runtime error.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict, fields, replace

import numpy as np

from . import __version__
from .datagen import (
    DatasetError, Template, generate_dataset, read_dataset, read_header, split_dataset, write_dataset,
)
from .envs import EnvModel, MazeLayout, make_env
from .evaluation import EvalConfig, Method, ablate_augmentation, ablate_ode_steps, evaluate, write_table
from .graph import to_graph
from .nn.flow import FlowConfig, FlowModel, TrainConfig, best_of, load_checkpoint, sample, save_checkpoint, train
from .nn.gcn import GcnConfig
from .planners import CemConfig, GradConfig, cem_plan, grad_plan
from .plotting import export_plot_data
from .stl import Trajectory, eval_bool, parse, robustness, to_json, unparse

log = logging.getLogger("stlflow")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# --- config ---------------------------------------------------------------------------

def _merge(dc, overrides: dict):
    if not overrides:
        return dc
    names = {f.name for f in fields(dc)}
    unknown = set(overrides) - names
    if unknown:
        raise UsageError(f"unknown config keys for {type(dc).__name__}: {sorted(unknown)}")
    vals = dict(overrides)
    if "hidden" in vals:
        vals["hidden"] = tuple(vals["hidden"])
    if "gcn" in vals and isinstance(vals["gcn"], dict):
        vals["gcn"] = GcnConfig(**vals["gcn"])
    return replace(dc, **vals)


def load_config(path) -> dict:
    """JSON with optional sections grad, grad_lite, cem, flow, train, eval, env, datagen."""
    cfg = {}
    if path:
        with open(path) as fh:
            cfg = json.load(fh)
        if not isinstance(cfg, dict):
            raise UsageError("config file must hold a JSON object")
    return cfg


def _env(args, cfg) -> EnvModel:
    kw = dict(cfg.get("env", {}))
    name = kw.pop("name", None) or args.env
    if getattr(args, "maze", None):
        kw["layout"] = MazeLayout.load(args.maze)
    return make_env(name, **kw)


def _out(args, name: str) -> str:
    os.makedirs(args.out, exist_ok=True)
    return os.path.join(args.out, name)


def _x0(text: str, env: EnvModel) -> np.ndarray:
    vals = [float(v) for v in text.split(",")]
    x = np.zeros(env.n)
    if len(vals) > env.n:
        raise UsageError(f"--x0 has {len(vals)} values, state has {env.n}")
    x[:len(vals)] = vals
    return x


def _spec_text(args) -> str:
    if args.spec.startswith("@"):
        with open(args.spec[1:]) as fh:
            return fh.read().strip()
    return args.spec


def _records(args):
    recs = read_dataset(args.data)
    split = getattr(args, "split", "all")
    if split != "all":
        tr, va = split_dataset(recs, args.seed)
        recs = tr if split == "train" else va
    limit = getattr(args, "limit", None)
    if limit is not None and limit < 1:
        raise UsageError("--limit must be >= 1")
    return recs[:limit] if limit is not None else recs


def _env_from_dataset(path) -> EnvModel:
    head = read_header(path)
    e = head.get("env") or {}
    kw = {k: e[k] for k in ("T", "dt") if k in e}
    if e.get("layout"):
        kw["layout"] = MazeLayout.from_json(e["layout"])
    return make_env(e.get("name", "Linear"), **kw)


# --- commands ------------------------------------------------------------------------

def cmd_parse(args, cfg):
    phi = parse(_spec_text(args))
    print(json.dumps(to_json(phi)) if args.json else unparse(phi))


def cmd_eval_spec(args, cfg):
    phi = parse(_spec_text(args))
    with open(args.traj) as fh:
        traj = Trajectory.from_json(json.load(fh))
    rho = robustness(traj, args.t, phi, strict=args.strict)
    print(json.dumps({"robustness": rho, "satisfied": eval_bool(traj, args.t, phi, strict=args.strict)}))


def cmd_plan(args, cfg):
    env = _env(args, cfg)
    phi = parse(_spec_text(args))
    x0 = _x0(args.x0, env)
    rng = np.random.default_rng(args.seed)
    if args.method == "cem":
        res = cem_plan(env, x0, phi, _merge(CemConfig(), cfg.get("cem")), rng)
    else:
        base = GradConfig() if args.method == "grad" else GradConfig.lite()
        res = grad_plan(env, x0, phi, _merge(base, cfg.get(args.method.replace("-", "_"))), rng)
    path = _out(args, "plan.json")
    with open(path, "w") as fh:
        json.dump({"spec": unparse(phi), "robustness": res.robustness, "trajectory": res.trajectory.to_json()}, fh)
    print(json.dumps({"robustness": res.robustness, "satisfied": res.robustness >= 0, "out": path}))


def cmd_gen_data(args, cfg):
    env = _env(args, cfg)
    dcfg = cfg.get("datagen", {})
    k = int(dcfg.get("k", args.k))
    recs = generate_dataset(env, Template(args.template), args.count, np.random.default_rng(args.seed), k=k)
    path = _out(args, f"{env.name.lower()}_{args.template.lower()}.jsonl")
    write_dataset(recs, path, env)
    print(json.dumps({"records": len(recs), "out": path}))


def cmd_train(args, cfg):
    env = _env_from_dataset(args.data)
    recs = read_dataset(args.data)
    tr, _ = split_dataset(recs, args.seed)
    fcfg = _merge(FlowConfig(T=env.T, n=env.n, m=env.m), cfg.get("flow"))
    tcfg = _merge(TrainConfig(seed=args.seed), cfg.get("train"))
    if args.epochs is not None:
        tcfg = replace(tcfg, epochs=args.epochs)
    model = train(FlowModel(fcfg, env, seed=args.seed), tr, tcfg)
    path = _out(args, "model.ckpt")
    save_checkpoint(model, path)
    print(json.dumps({"epochs": model.epoch, "final_loss": model.loss_history[-1], "out": path}))


def cmd_sample(args, cfg):
    model = load_checkpoint(args.ckpt)
    phi = parse(_spec_text(args))
    x0 = _x0(args.x0, model.env)
    trajs = sample(model, to_graph(phi), x0, args.steps, args.count, np.random.default_rng(args.seed))
    best, rho = best_of(trajs, phi)
    path = _out(args, "samples.json")
    with open(path, "w") as fh:
        json.dump({"spec": unparse(phi), "best_robustness": rho, "best": trajs.index(best),
                   "trajectories": [t.to_json() for t in trajs]}, fh)
    print(json.dumps({"best_robustness": rho, "satisfied": rho >= 0, "out": path}))


def _eval_cfg(args, cfg) -> EvalConfig:
    e = dict(cfg.get("eval", {}))
    base = EvalConfig(K=args.K, n_steps=args.steps, seed=args.seed,
                      grad=_merge(GradConfig(), cfg.get("grad")),
                      grad_lite=_merge(GradConfig.lite(), cfg.get("grad_lite")),
                      cem=_merge(CemConfig(), cfg.get("cem")))
    return _merge(base, e)


def cmd_evaluate(args, cfg):
    recs = _records(args)
    method = Method(args.method)
    if method is Method.FLOW and not args.ckpt:
        raise UsageError("--ckpt is required for Flow")
    model = load_checkpoint(args.ckpt) if method is Method.FLOW else None
    env = model.env if model is not None else _env_from_dataset(args.data)
    rep = evaluate(method, recs, _eval_cfg(args, cfg), model, env)
    stem = _out(args, f"eval_{method.value.lower()}")
    rep.write(stem)
    print(json.dumps(rep.summary()))


def cmd_ablate_ode(args, cfg):
    model = load_checkpoint(args.ckpt)
    rows = ablate_ode_steps(model, _records(args), [int(s) for s in args.steps_list.split(",")], args.K, args.seed)
    write_table(_out(args, "ablate_ode"), rows)
    print(json.dumps(rows))


def cmd_ablate_aug(args, cfg):
    model = load_checkpoint(args.ckpt)
    rows = ablate_augmentation(model, _records(args), [int(s) for s in args.counts.split(",")], args.K,
                               args.steps, args.seed)
    write_table(_out(args, "ablate_aug"), rows)
    print(json.dumps(rows))


def cmd_export_plot(args, cfg):
    recs = read_dataset(args.data)
    if not 0 <= args.index < len(recs):
        raise UsageError(f"--index must be in [0, {len(recs)})")
    rec = recs[args.index]
    env = _env_from_dataset(args.data)
    if args.ckpt:
        model = load_checkpoint(args.ckpt)
        trajs = sample(model, to_graph(rec.spec), rec.scene.agent_init, args.steps, args.K,
                       np.random.default_rng(args.seed))
    else:
        trajs = list(rec.trajectories)
    best = trajs.index(best_of(trajs, rec.spec)[0]) if trajs else None
    stem = _out(args, f"plot_{args.index}")
    export_plot_data(trajs, rec.scene, stem + ".json", env.workspace, stem + ".svg", best, env.layout)
    print(json.dumps({"json": stem + ".json", "svg": stem + ".svg"}))


# --- parser ----------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    def global_flags(defaults: bool) -> argparse.ArgumentParser:
        # subcommands repeat the flags without defaults so values given before the command survive
        d = (lambda v: v) if defaults else (lambda v: argparse.SUPPRESS)
        g = _Parser(add_help=False)
        g.add_argument("--seed", type=int, default=d(0), help="random seed")
        g.add_argument("--config", default=d(None), help="JSON config file")
        g.add_argument("--out", default=d("out"), help="output directory")
        g.add_argument("-v", "--verbose", action="store_true", default=d(False))
        return g

    common = global_flags(False)
    p = _Parser(prog="stlflow", description="STL tooling, classical planners and flow-matching planner",
                parents=[global_flags(True)])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, fn, help_):
        sp = sub.add_parser(name, help=help_, parents=[common])
        sp.set_defaults(fn=fn)
        return sp

    sp = add("parse", cmd_parse, "parse a formula and print it back")
    sp.add_argument("spec", help="formula text, or @file")
    sp.add_argument("--json", action="store_true", help="print the JSON syntax tree")

    sp = add("eval-spec", cmd_eval_spec, "robustness of a trajectory file")
    sp.add_argument("spec")
    sp.add_argument("--traj", required=True, help="trajectory JSON")
    sp.add_argument("--t", type=int, default=0)
    sp.add_argument("--strict", action="store_true", help="error if the formula reads past the signal")

    sp = add("plan", cmd_plan, "solve one spec with a classical planner")
    sp.add_argument("spec")
    sp.add_argument("--env", default="Linear", choices=["Linear", "Dubins", "GridMaze"])
    sp.add_argument("--maze", default=None, help="maze layout JSON")
    sp.add_argument("--x0", default="0,0")
    sp.add_argument("--method", default="grad", choices=["grad", "grad-lite", "cem"])

    sp = add("gen-data", cmd_gen_data, "generate a dataset")
    sp.add_argument("--env", default="Linear", choices=["Linear", "Dubins", "GridMaze"])
    sp.add_argument("--maze", default=None)
    sp.add_argument("--template", default="Single", choices=[t.value for t in Template])
    sp.add_argument("--count", type=int, default=200)
    sp.add_argument("--k", type=int, default=2, help="demonstrations per spec")

    sp = add("train", cmd_train, "train the flow model on a dataset")
    sp.add_argument("--data", required=True)
    sp.add_argument("--epochs", type=int, default=None)

    sp = add("sample", cmd_sample, "sample trajectories for one spec")
    sp.add_argument("spec")
    sp.add_argument("--ckpt", required=True)
    sp.add_argument("--x0", default="0,0")
    sp.add_argument("--steps", type=int, default=100, help="Euler steps")
    sp.add_argument("--count", type=int, default=64)

    for name, fn, help_ in (("evaluate", cmd_evaluate, "satisfaction and runtime over a split"),
                            ("ablate-ode", cmd_ablate_ode, "satisfaction/runtime versus Euler steps"),
                            ("ablate-aug", cmd_ablate_aug, "satisfaction versus duplicated children")):
        sp = add(name, fn, help_)
        sp.add_argument("--data", required=True)
        sp.add_argument("--split", default="val", choices=["train", "val", "all"])
        sp.add_argument("--K", type=int, default=64, help="candidates per spec")
        sp.add_argument("--limit", type=int, default=None, help="use only the first N specs of the split")
        sp.add_argument("--ckpt", default=None, required=name != "evaluate")
        if name == "evaluate":
            sp.add_argument("--method", default="Flow", choices=[m.value for m in Method])
        if name != "ablate-ode":
            sp.add_argument("--steps", type=int, default=100)
        if name == "ablate-ode":
            sp.add_argument("--steps-list", default="100,50,25,10,5,3,2,1")
        if name == "ablate-aug":
            sp.add_argument("--counts", default="0,1,2,4,6")

    sp = add("export-plot", cmd_export_plot, "scene and trajectories as JSON + SVG")
    sp.add_argument("--data", required=True)
    sp.add_argument("--index", type=int, default=0)
    sp.add_argument("--ckpt", default=None, help="plot model samples instead of stored demos")
    sp.add_argument("--K", type=int, default=16)
    sp.add_argument("--steps", type=int, default=100)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        cfg = load_config(args.config)
        args.fn(args, cfg)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except (ValueError, OSError, RuntimeError, KeyError, DatasetError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
