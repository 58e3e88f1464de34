"""Command line interface: ``rfloc {sample,train,flow,phi,ica,experiment} ...``.

Errors print one JSON line ``{"error": ..., "message": ...}`` to stderr and
exit with status 1.
"""
from __future__ import annotations

import argparse
import configparser
import json
import sys
import time
from pathlib import Path

import numpy as np

from .. import __version__
from ..flow import (Amplifier, FlowConfig, MarginalSpec, elliptical_constant, integrate_elliptical_flow,
                    integrate_flow, marginal_for, tabulate_amplifier)
from ..formats import amplifier_csv, batch_csv, config_hash, csv_text, to_binary, trajectory_csv
from ..ica import fastica
from ..nets import WeightTrajectory, TrainConfig, initial_weights, train, DEFAULT_TAU
from ..stimulus import StimulusModel, substream, task_sample
from .config import ExperimentConfig, load_config, parse_seeds, parse_value
from .experiments import REGISTRY, run_experiment


def _add_common(p, seed_default="0"):
    p.add_argument("--seed", default=seed_default, help="integer seed (experiment: list such as 0-9)")
    p.add_argument("--out", help="output file (experiment: directory); stdout if omitted")
    p.add_argument("--config", help="config file; its [params] section sets defaults")
    p.add_argument("--full", action="store_true", help="full-scale sizes (experiment only)")


def _add_model(p):
    p.add_argument("--variant", choices=["ising", "nlgp", "kur", "elliptical"], default="kur")
    p.add_argument("--n", type=int, default=40, help="input dimension")
    p.add_argument("--scales", type=float, nargs=2, default=None, metavar=("S0", "S1"),
                   help="class couplings J (ising) or lengthscales xi")
    p.add_argument("--g", type=float, default=1.0, help="NLGP gain")
    p.add_argument("--k", type=float, default=5.0, help="Kur shape")
    p.add_argument("--radial", choices=["student_t", "shell", "custom"], default="shell")
    p.add_argument("--nu", type=float, default=3.0, help="Student-t degrees of freedom")


def model_from_args(a) -> StimulusModel:
    if a.variant == "ising":
        return StimulusModel.ising(a.n, tuple(a.scales or (0.3, 0.7)))
    if a.variant == "nlgp":
        return StimulusModel.nlgp(a.n, a.g, tuple(a.scales or (0.3, 0.7)))
    if a.variant == "kur":
        return StimulusModel.kur(a.n, a.k, tuple(a.scales or (0.3, 0.7)))
    nu = a.nu if a.radial == "student_t" else None
    return StimulusModel.elliptical(a.n, a.radial, tuple(a.scales or (1.0, 3.0)), nu)


def _emit(text_or_bytes, out):
    if out is None:
        if isinstance(text_or_bytes, bytes):
            sys.stdout.buffer.write(text_or_bytes)
        else:
            sys.stdout.write(text_or_bytes)
        return
    path = Path(out)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True)
    if isinstance(text_or_bytes, bytes):
        path.write_bytes(text_or_bytes)
    else:
        path.write_text(text_or_bytes)


def _hash(a) -> str:
    d = {k: v for k, v in vars(a).items() if k not in ("out", "func", "config")}
    return config_hash(d)


# --- subcommands -------------------------------------------------------------

def cmd_sample(a):
    model = model_from_args(a)
    batch = task_sample(model, a.batch, substream(int(a.seed), 2))
    if a.format == "bin":
        X = np.column_stack([batch.inputs, batch.labels])
        _emit(to_binary(X), a.out)
    else:
        _emit(batch_csv(batch, _hash(a)), a.out)


def cmd_train(a):
    model = model_from_args(a)
    tau = a.tau if a.tau is not None else DEFAULT_TAU[a.preset]
    cfg = TrainConfig(tau=tau, steps=a.steps, batch_size=a.batch, init_variance=a.init_variance,
                      seed=int(a.seed), snapshot_stride=a.stride)
    tr = train(model, a.preset, cfg, M=a.hidden, activation=a.activation)
    _emit(trajectory_csv(tr, _hash(a)), a.out)


def cmd_flow(a):
    model = model_from_args(a)
    w0 = initial_weights(int(a.seed), model.n, a.init_variance).w1[0]
    cfg = FlowConfig(dt=a.dt, steps=a.steps, tau=a.tau, record_stride=a.stride, method=a.method)
    s0, s1 = model.data_covariance(0), model.data_covariance(1)
    if model.variant == "elliptical":
        C = a.C if a.C is not None else elliptical_constant(model.radial, model.n, model.nu)
        tr = integrate_elliptical_flow(s0, s1, C, w0, cfg)
    else:
        m = marginal_for(model)
        amp = {"exact": Amplifier.exact, "taylor3": Amplifier.taylor3}[a.amplifier](m) \
            if a.amplifier != "linear" else Amplifier.linear(np.sqrt(2 / np.pi) * m.m2)
        tr = integrate_flow(s0, s1, amp, w0, cfg)
    _emit(trajectory_csv(tr, _hash(a)), a.out)


def cmd_phi(a):
    if a.marginal == "two_point":
        m = MarginalSpec.two_point(a.value)
    elif a.marginal == "gaussian":
        m = MarginalSpec.gaussian(a.value)
    elif a.marginal == "alg_sigmoid":
        m = MarginalSpec.alg_sigmoid(a.k)
    else:
        m = marginal_for(StimulusModel.nlgp(2, a.g, (0.3, 0.7)))
    grid = np.linspace(-a.amax, a.amax, a.points)
    _emit(amplifier_csv(tabulate_amplifier(m, grid), _hash(a)), a.out)


def cmd_ica(a):
    model = model_from_args(a)
    X = task_sample(model, a.samples, substream(int(a.seed), 7)).inputs
    res = fastica(X, a.components, max_iter=a.max_iter, rng=substream(int(a.seed), 8),
                  contrast=a.contrast)
    comps = res.canonical()
    traj = WeightTrajectory([0], [float(res.n_iter)], comps[None], {"converged": res.converged})
    _emit(trajectory_csv(traj, _hash(a)), a.out)
    if not res.converged:
        print(json.dumps({"warning": "not_converged", "n_iter": res.n_iter}), file=sys.stderr)


def cmd_experiment(a):
    if a.list:
        for name, exp in sorted(REGISTRY.items()):
            print(f"{name:16s} {exp.describe}")
        return
    if a.id is None and a.config is None:
        raise ValueError("give an experiment id or --config")
    if a.config:
        cfg = load_config(a.config)
        if a.id and a.id != cfg.experiment:
            raise ValueError(f"config is for {cfg.experiment!r}, not {a.id!r}")
    else:
        cfg = ExperimentConfig(a.id)
    if a.seed is not None:
        cfg.seeds = parse_seeds(a.seed)
    if a.out is not None:
        cfg.out_dir = Path(a.out)
    cfg.full = cfg.full or a.full
    for kv in a.param or []:
        key, _, val = kv.partition("=")
        cfg.params[key.strip()] = parse_value(val)
    t0 = time.perf_counter()
    rep = run_experiment(cfg)
    line = {"experiment": rep.experiment, "config_hash": rep.config_hash,
            "rows": len(rep.rows), "failed_rows": rep.failures,
            "seconds": round(time.perf_counter() - t0, 1),
            "files": {k: str(v) for k, v in rep.files.items()}}
    if "passed" in rep.summary:
        line["passed"] = rep.summary["passed"]
    print(json.dumps(line))


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rfloc", description="Localized receptive fields from "
                                 "gradient descent on non-Gaussian inputs.")
    ap.add_argument("--version", action="version", version=f"rfloc {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="draw a labeled batch")
    _add_model(p)
    _add_common(p)
    p.add_argument("--batch", type=int, default=100)
    p.add_argument("--format", choices=["csv", "bin"], default="csv")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("train", help="train a network, write weight snapshots")
    _add_model(p)
    _add_common(p)
    p.add_argument("--preset", choices=["single", "scm", "scm_bias", "two_layer"], default="single")
    p.add_argument("--activation", choices=["relu", "sigmoid"], default=None)
    p.add_argument("--hidden", type=int, default=1, help="hidden units M")
    p.add_argument("--tau", type=float, default=None, help="learning rate")
    p.add_argument("--steps", type=int, default=1000)
    p.add_argument("--batch", type=int, default=1000)
    p.add_argument("--init-variance", type=float, default=0.1)
    p.add_argument("--stride", type=int, default=100, help="snapshot every this many steps")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("flow", help="integrate the early-time weight flow")
    _add_model(p)
    _add_common(p)
    p.add_argument("--amplifier", choices=["exact", "taylor3", "linear"], default="exact")
    p.add_argument("--dt", type=float, default=0.01)
    p.add_argument("--steps", type=int, default=10_000)
    p.add_argument("--tau", type=float, default=1.0, help="time scale (1 = training time)")
    p.add_argument("--stride", type=int, default=1000)
    p.add_argument("--method", choices=["euler", "rk4"], default="euler")
    p.add_argument("--init-variance", type=float, default=0.1)
    p.add_argument("--C", type=float, default=None, help="elliptical flow constant override")
    p.set_defaults(func=cmd_flow)

    p = sub.add_parser("phi", help="tabulate the amplifier and its cubic surrogate")
    _add_common(p)
    p.add_argument("--marginal", choices=["two_point", "gaussian", "alg_sigmoid", "nlgp"],
                   default="gaussian")
    p.add_argument("--value", type=float, default=1.0, help="two-point value or Gaussian sigma")
    p.add_argument("--k", type=float, default=10.0)
    p.add_argument("--g", type=float, default=1.0)
    p.add_argument("--amax", type=float, default=0.99)
    p.add_argument("--points", type=int, default=199)
    p.set_defaults(func=cmd_phi)

    p = sub.add_parser("ica", help="fit FastICA components to task inputs")
    _add_model(p)
    _add_common(p)
    p.add_argument("--samples", type=int, default=20000)
    p.add_argument("--components", type=int, default=10)
    p.add_argument("--max-iter", type=int, default=500)
    p.add_argument("--contrast", choices=["logcosh", "kurtosis"], default="logcosh")
    p.set_defaults(func=cmd_ica)

    p = sub.add_parser("experiment", help="run a registered experiment")
    p.add_argument("id", nargs="?", choices=sorted(REGISTRY))
    _add_common(p, seed_default=None)
    p.add_argument("--param", action="append", metavar="KEY=VALUE", help="override a parameter")
    p.add_argument("--list", action="store_true", help="list registered experiments")
    p.set_defaults(func=cmd_experiment)
    return ap


def _config_defaults(parser, sub_name, path):
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    with open(path) as fh:
        cp.read_file(fh)
    if not cp.has_section("params"):
        return
    sub = parser._subparsers._group_actions[0].choices[sub_name]
    known = {a.dest for a in sub._actions}
    vals = {}
    for k, v in cp["params"].items():
        dest = k.replace("-", "_")
        if dest not in known:
            raise ValueError(f"config key {k!r} is not an option of {sub_name!r}")
        vals[dest] = parse_value(v)
    sub.set_defaults(**vals)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.config and args.command != "experiment":
            _config_defaults(parser, args.command, args.config)
            args = parser.parse_args(argv)
        args.func(args)
    except Exception as e:
        print(json.dumps({"error": type(e).__name__, "message": str(e),
                          "command": args.command}), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
