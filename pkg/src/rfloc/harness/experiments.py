"""Experiment registry and runner.

Each experiment is a list of independent cells ``(config_id, seed, params)``.
A cell returns metric rows; cells run in order in-process, or on a process
pool when ``RFLOC_WORKERS`` > 1. Results are written in cell order, so the
CSV is byte-identical for identical configs whatever the worker count.
"""
from __future__ import annotations

import json
import logging
import os
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import __version__
from ..flow import (Amplifier, FlowConfig, integrate_elliptical_flow, integrate_flow,
                    elliptical_constant, marginal_for)
from ..formats import METRIC_COLUMNS, CsvWriter, config_hash
from ..ica import fastica
from ..metrics import IPR_THRESHOLD, circular_distance, excess_kurtosis, ipr, metric_row
from ..nets import TrainConfig, initial_weights, train
from ..stimulus import StimulusModel, radial_second_moment, substream, task_sample
from . import svg
from .config import ExperimentConfig

log = logging.getLogger(__name__)

WORKERS_ENV = "RFLOC_WORKERS"
ROW_COLUMNS = METRIC_COLUMNS + ["unit", "source", "time", "value", "status", "error"]


@dataclass
class ExperimentReport:
    experiment: str
    rows: list
    aggregates: list
    summary: dict
    config_hash: str
    version: str = __version__
    files: dict = field(default_factory=dict)

    @property
    def failures(self) -> int:
        return sum(r["status"] != "ok" for r in self.rows)


@dataclass
class Experiment:
    name: str
    describe: str
    defaults: dict
    full: dict
    seeds: list
    full_seeds: list
    cells: callable            # (params, seeds) -> [(config_id, seed, cell_params)]
    summarize: callable        # (rows, params) -> (summary, svg text)


REGISTRY: dict[str, Experiment] = {}


def register(exp: Experiment):
    REGISTRY[exp.name] = exp
    return exp


# ---------------------------------------------------------------------------
# shared helpers
# ---------------------------------------------------------------------------

def build_model(spec: dict) -> StimulusModel:
    """Stimulus model from a flat dict (``variant``, ``n`` and variant fields)."""
    v, n = spec["variant"], int(spec.get("n", 40))
    if v == "ising":
        return StimulusModel.ising(n, tuple(spec.get("J", (0.3, 0.7))))
    xi = tuple(spec.get("xi", (0.3, 0.7)))
    if v == "nlgp":
        return StimulusModel.nlgp(n, float(spec["g"]), xi)
    if v == "kur":
        return StimulusModel.kur(n, float(spec["k"]), xi)
    if v == "elliptical":
        return StimulusModel.elliptical(n, spec["radial"], xi, spec.get("nu"))
    raise ValueError(f"unknown variant {v!r}")


def measured_excess_kurtosis(model: StimulusModel, vectors: int = 5000, seed: int = 0) -> float:
    """Excess kurtosis of the pooled input coordinates of one fixed sample."""
    X = task_sample(model, vectors, substream(seed, 99)).inputs
    return excess_kurtosis(X.ravel())


def _row(seed, config_id, w=None, **extra):
    row = {"seed": seed, "config_id": config_id, "status": "ok", "error": ""}
    if w is not None:
        row.update(metric_row(w))
    row.update(extra)
    return row


def _train_cfg(p: dict, seed: int, stride: int | None = None) -> TrainConfig:
    steps = int(p["steps"])
    return TrainConfig(tau=float(p["tau"]), steps=steps, batch_size=int(p["batch"]),
                       init_variance=float(p.get("init_variance", 0.1)), seed=seed,
                       snapshot_stride=int(stride or steps))


def _flow_to(model, w0, T: float, dt: float, amplifier, stride=None):
    steps = max(1, int(round(T / dt)))
    cfg = FlowConfig(dt=dt, steps=steps, record_stride=int(stride or steps))
    return integrate_flow(model.data_covariance(0), model.data_covariance(1), amplifier, w0, cfg)


def _ok(rows):
    return [r for r in rows if r["status"] == "ok"]


def aggregate(rows, keys=("config_id", "source", "time"), values=("ipr", "fit_rel_residual")):
    """Mean and population std of ``values`` grouped by ``keys`` over ok rows."""
    groups: dict = {}
    for r in _ok(rows):
        groups.setdefault(tuple(r.get(k, "") for k in keys), []).append(r)
    out = []
    for key, rs in groups.items():
        agg = dict(zip(keys, key))
        agg["count"] = len(rs)
        for v in values:
            x = np.array([float(r.get(v, np.nan)) for r in rs], dtype=float)
            agg[f"{v}_mean"] = float(np.mean(x))
            agg[f"{v}_std"] = float(np.std(x))
        out.append(agg)
    return out


def _heatmap(rows, title, source=None):
    W = [r["_w"] for r in rows if "_w" in r and (source is None or r.get("source") == source)]
    return svg.weight_heatmap(np.array(W), title=title) if W else None


# ---------------------------------------------------------------------------
# kurtosis_sweep: single neuron IPR against input excess kurtosis
# ---------------------------------------------------------------------------

def _sweep_configs(p):
    cfgs = [("nlgp", g) for g in p["g"]] + [("kur", k) for k in p["k"]]
    return [({"variant": v, "n": p["n"], "xi": p["xi"], ("g" if v == "nlgp" else "k"): x},
             f"{v}({x:g})") for v, x in cfgs]


def _sweep_cells(p, seeds):
    return [(cid, s, dict(p, model=spec)) for spec, cid in _sweep_configs(p) for s in seeds]


def _sweep_cell(seed, config_id, p):
    model = build_model(p["model"])
    tr = train(model, "single", _train_cfg(p, seed))
    w = tr.final[0]
    row = _row(seed, config_id, w, unit=0, source="train", time=float(tr.times[-1]))
    row["excess_kurtosis"] = measured_excess_kurtosis(model)
    row["value"] = float(p["model"].get("g", p["model"].get("k")))
    row["_w"] = w
    return [row]


def _sweep_summary(rows, p):
    agg = aggregate(rows, keys=("config_id",), values=("ipr", "excess_kurtosis"))
    checks = {}
    for a in agg:
        ek, m = a["excess_kurtosis_mean"], a["ipr_mean"]
        if ek <= -0.5:
            checks[a["config_id"]] = bool(m >= 0.3)
        elif ek >= 0.5:
            checks[a["config_id"]] = bool(m <= 0.1)
    plot = svg.scatter_errorbars([(a["config_id"], a["excess_kurtosis_mean"], a["ipr_mean"], a["ipr_std"])
                                  for a in agg], title="final IPR vs input excess kurtosis",
                                 xlabel="excess kurtosis (dimensionless)", ylabel="IPR (dimensionless)")
    return {"configs": agg, "band_checks": checks, "passed": all(checks.values()) and bool(checks)}, plot


register(Experiment(
    "kurtosis_sweep", "single ReLU neuron: final IPR against input excess kurtosis",
    defaults=dict(n=40, xi=[0.3, 0.7], g=[0.01, 0.5, 1, 3, 100], k=[4, 5, 8, 10, 30],
                  tau=0.1, batch=500, steps=3000),
    full=dict(steps=10000, batch=1000),
    seeds=list(range(10)), full_seeds=list(range(30)),
    cells=_sweep_cells, summarize=_sweep_summary))


# ---------------------------------------------------------------------------
# peak_prediction: trained neuron vs integrated early-time flow on the Ising task
# ---------------------------------------------------------------------------

def _peak_cells(p, seeds):
    return [("ising", s, p) for s in seeds]


def _peak_cell(seed, config_id, p):
    model = build_model({"variant": "ising", "n": p["n"], "J": p["J"]})
    cfg = _train_cfg(p, seed)
    tr = train(model, "single", cfg)
    T = float(tr.times[-1])
    w0 = initial_weights(seed, model.n, cfg.init_variance).w1[0]
    amp = Amplifier.exact(marginal_for(model))
    fl = _flow_to(model, w0, T, float(p["flow_dt"]), amp)
    wt, wf = tr.final[0], fl.final[0]
    d = circular_distance(int(np.argmax(np.abs(wt))), int(np.argmax(np.abs(wf))), model.n)
    return [_row(seed, config_id, wt, unit=0, source="train", time=T, value=d, _w=wt),
            _row(seed, config_id, wf, unit=0, source="flow", time=T, value=d, _w=wf)]


def _peak_summary(rows, p):
    dist = [int(r["value"]) for r in _ok(rows) if r["source"] == "train"]
    hist = {str(d): dist.count(d) for d in sorted(set(dist))}
    frac = float(np.mean([d == 0 for d in dist])) if dist else float("nan")
    n = int(p["n"])
    plot = svg.line_plot([("seeds", list(range(n // 2 + 1)),
                           [dist.count(d) for d in range(n // 2 + 1)])],
                         title="peak distance: trained vs integrated",
                         xlabel="circular distance (sites)", ylabel="seeds (count)")
    return {"seeds": len(dist), "exact_match_fraction": frac, "distance_histogram": hist,
            "passed": bool(len(dist) >= 20 and frac >= 0.7)}, plot


register(Experiment(
    "peak_prediction", "Ising task: peak of trained neuron vs integrated flow from the same init",
    defaults=dict(n=40, J=[0.3, 0.7], tau=0.05, batch=1000, steps=1000, flow_dt=0.05),
    full=dict(batch=4000, steps=2000),
    seeds=list(range(20)), full_seeds=list(range(28)),
    cells=_peak_cells, summarize=_peak_summary))


# ---------------------------------------------------------------------------
# elliptical: sinusoidal steady states
# ---------------------------------------------------------------------------

def _ell_cells(p, seeds):
    return [(law, s, dict(p, radial=law)) for law in p["laws"] for s in seeds]


def _ell_cell(seed, config_id, p):
    law = p["radial"]
    nu = float(p["nu"]) if law == "student_t" else None
    model = StimulusModel.elliptical(int(p["n"]), law, tuple(p["xi"]), nu)
    # same effective step size for every radial law: tau times the data variance
    var = radial_second_moment(law, model.n, nu) / model.n
    q = dict(p, tau=float(p["tau_var"]) / var)
    tr = train(model, "single", _train_cfg(q, seed))
    w = tr.final[0]
    T = float(tr.times[-1])
    C = elliptical_constant(law, model.n, nu)
    cfg = FlowConfig(dt=0.05, steps=max(1, int(T / 0.05)), record_stride=max(1, int(T / 0.05)))
    w0 = initial_weights(seed, model.n, q.get("init_variance", 0.1)).w1[0]
    fl = integrate_elliptical_flow(model.data_covariance(0), model.data_covariance(1), C, w0, cfg)
    return [_row(seed, config_id, w, unit=0, source="train", time=T, value=q["tau"], _w=w),
            _row(seed, config_id, fl.final[0], unit=0, source="flow", time=T, value=C,
                 _w=fl.final[0])]


def _ell_summary(rows, p):
    agg = aggregate([r for r in rows if r.get("source") == "train"], keys=("config_id",),
                    values=("fit_rel_residual", "ipr"))
    ok = {a["config_id"]: bool(a["fit_rel_residual_mean"] <= 0.15) for a in agg}
    series = [(r["config_id"], list(range(len(r["_w"]))), r["_w"]) for r in rows
              if r.get("source") == "train" and "_w" in r and r["seed"] == rows[0]["seed"]]
    plot = svg.line_plot(series, title="trained weights on elliptical data",
                         xlabel="input dimension i", ylabel="weight (a.u.)")
    return {"laws": agg, "residual_checks": ok,
            "passed": bool(ok) and all(ok.values()) and len(ok) == len(p["laws"])}, plot


register(Experiment(
    "elliptical", "single neuron on elliptical data: sinusoid fit residuals",
    defaults=dict(n=40, xi=[1, 3], laws=["student_t", "shell", "custom"], nu=3,
                  tau_var=0.06, batch=12000, steps=2000),
    full=dict(steps=6000),
    seeds=[0], full_seeds=[0, 1, 2],
    cells=_ell_cells, summarize=_ell_summary))


# ---------------------------------------------------------------------------
# theory_vs_sim: trained neuron vs flow with the cubic amplifier
# ---------------------------------------------------------------------------

def _tvs_cells(p, seeds):
    specs = [({"variant": "ising", "n": p["n"], "J": p["J"]}, "ising"),
             ({"variant": "nlgp", "n": p["n"], "g": p["g"], "xi": p["xi"]}, f"nlgp({p['g']:g})"),
             ({"variant": "kur", "n": p["n"], "k": p["k"], "xi": p["xi"]}, f"kur({p['k']:g})")]
    return [(cid, s, dict(p, model=spec)) for spec, cid in specs for s in seeds]


def _tvs_cell(seed, config_id, p):
    model = build_model(p["model"])
    cfg = _train_cfg(p, seed)
    tr = train(model, "single", cfg)
    T = float(tr.times[-1])
    w0 = initial_weights(seed, model.n, cfg.init_variance).w1[0]
    fl = _flow_to(model, w0, T, float(p["flow_dt"]), Amplifier.taylor3(marginal_for(model)))
    wt, wf = tr.final[0], fl.final[0]
    return [_row(seed, config_id, wt, unit=0, source="train", time=T, _w=wt),
            _row(seed, config_id, wf, unit=0, source="flow_taylor3", time=T, _w=wf)]


def _tvs_summary(rows, p):
    agg = aggregate(rows, keys=("config_id", "source"))
    return {"rows": agg}, _heatmap(rows, "trained (even rows) and cubic-flow (odd rows) weights")


register(Experiment(
    "theory_vs_sim", "Ising, NLGP(0.01), Kur(5): trained neuron vs cubic-amplifier flow",
    defaults=dict(n=40, J=[0.3, 0.7], xi=[0.3, 0.7], g=0.01, k=5, tau=0.05, batch=1000,
                  steps=2000, flow_dt=0.05),
    full=dict(steps=6000),
    seeds=[0], full_seeds=[0, 1, 2],
    cells=_tvs_cells, summarize=_tvs_summary))


# ---------------------------------------------------------------------------
# many-neuron networks: scm and two_layer
# ---------------------------------------------------------------------------

def _net_cells(p, seeds):
    return [(f"kur({k:g})/{act}", s, dict(p, k=k, activation=act))
            for k, act in zip(p["k"], p["activation"]) for s in seeds]


def _net_cell(seed, config_id, p):
    model = StimulusModel.kur(int(p["n"]), float(p["k"]), tuple(p["xi"]))
    act = p["activation"]
    tau = float(p["tau_relu"] if act == "relu" else p["tau_sigmoid"])
    tr = train(model, p["preset"], _train_cfg(dict(p, tau=tau), seed), M=int(p["M"]), activation=act)
    T = float(tr.times[-1])
    loss = float(np.mean(tr.losses[-min(50, len(tr.losses)):]))
    return [_row(seed, config_id, w, unit=m, source="train", time=T, value=loss, _w=w)
            for m, w in enumerate(tr.final)]


def _net_summary(rows, p):
    counts = {}
    for r in _ok(rows):
        key = f"{r['config_id']}/seed{r['seed']}"
        counts[key] = counts.get(key, 0) + int(r["ipr"] >= IPR_THRESHOLD)
    return {"localized_units": counts}, _heatmap(rows, "hidden-unit receptive fields")


register(Experiment(
    "scm", "soft committee machine (sigmoid, frozen 1/M readout) on Kur(10) and Kur(4)",
    defaults=dict(n=40, M=10, xi=[1, 3], k=[10, 4], activation=["sigmoid", "sigmoid"],
                  preset="scm_bias", tau_sigmoid=5.0, tau_relu=1.0, batch=500, steps=10000),
    full=dict(steps=40000),
    seeds=[0], full_seeds=[0, 1, 2],
    cells=_net_cells, summarize=_net_summary))

register(Experiment(
    "two_layer", "fully trainable two-layer network: Kur(4) sigmoid and Kur(30) ReLU",
    defaults=dict(n=40, M=10, xi=[0.3, 0.7], k=[4, 30], activation=["sigmoid", "relu"],
                  preset="two_layer", tau_sigmoid=0.5, tau_relu=0.2, batch=200, steps=20000),
    full=dict(steps=80000),
    seeds=[0], full_seeds=[0, 1, 2],
    cells=_net_cells, summarize=_net_summary))


# ---------------------------------------------------------------------------
# breakdown: where the early-time flow stops tracking training
# ---------------------------------------------------------------------------

def _brk_cells(p, seeds):
    return [(f"nlgp({g:g})", s, dict(p, g=g, batch=b, steps=st))
            for g, b, st in zip(p["g"], p["batch"], p["steps"]) for s in seeds]


def rising_onset(times, iprs, factor: float) -> float:
    """First time the IPR exceeds ``factor`` times its initial value (inf if never)."""
    idx = np.nonzero(np.asarray(iprs) > factor * iprs[0])[0]
    return float(times[idx[0]]) if idx.size else float("inf")


def _brk_cell(seed, config_id, p):
    model = StimulusModel.nlgp(int(p["n"]), float(p["g"]), tuple(p["xi"]))
    stride = int(p["stride"])
    cfg = TrainConfig(tau=float(p["tau"]), steps=int(p["steps"]), batch_size=int(p["batch"]),
                      seed=seed, snapshot_stride=stride, chunk_size=int(p["chunk"]))
    tr = train(model, "single", cfg)
    amp = Amplifier.exact(marginal_for(model))
    # flow step equal to the learning rate puts flow snapshots on the training times
    fl = integrate_flow(model.data_covariance(0), model.data_covariance(1), amp, tr.weights[0, 0],
                        FlowConfig(dt=cfg.tau, steps=cfg.steps, record_stride=stride))
    rows = []
    for t, wt, wf in zip(tr.times, tr.weights[:, 0], fl.weights[:, 0]):
        d = float(np.linalg.norm(wt - wf) / np.linalg.norm(wt))
        rows.append(_row(seed, config_id, wt, unit=0, source="train", time=float(t), value=d))
        rows.append(_row(seed, config_id, wf, unit=0, source="flow", time=float(t), value=d))
    return rows


def breakdown_verdict(rows, band: float, ipr_low: float, factor: float) -> dict:
    """Per config: first band exit, IPR rise onset and the band check."""
    out = {}
    for cid in sorted({r["config_id"] for r in _ok(rows)}):
        rs = [r for r in _ok(rows) if r["config_id"] == cid and r["source"] == "train"]
        seeds = sorted({r["seed"] for r in rs})
        per_seed = []
        for s in seeds:
            tr = sorted((r for r in rs if r["seed"] == s), key=lambda r: r["time"])
            t = np.array([r["time"] for r in tr])
            d = np.array([r["value"] for r in tr])
            q = np.array([r["ipr"] for r in tr])
            exits = np.nonzero(d > band)[0]
            t_exit = float(t[exits[0]]) if exits.size else float("inf")
            onset = rising_onset(t, q, factor)
            inside_low = bool(np.all(d[q < ipr_low] <= band))
            per_seed.append({"seed": s, "first_exit": t_exit, "ipr_onset": onset,
                             "band_holds_while_ipr_low": inside_low,
                             "max_distance": float(d.max()), "final_ipr": float(q[-1])})
        out[cid] = per_seed
    return out


def _brk_summary(rows, p):
    v = breakdown_verdict(rows, float(p["band"]), float(p["ipr_low"]), float(p["onset_factor"]))
    series = []
    for cid in sorted({r["config_id"] for r in _ok(rows)}):
        tr = sorted((r for r in _ok(rows) if r["config_id"] == cid and r["source"] == "train"
                     and r["seed"] == rows[0]["seed"]), key=lambda r: r["time"])
        fl = sorted((r for r in _ok(rows) if r["config_id"] == cid and r["source"] == "flow"
                     and r["seed"] == rows[0]["seed"]), key=lambda r: r["time"])
        series += [(f"{cid} IPR trained", [r["time"] for r in tr], [r["ipr"] for r in tr]),
                   (f"{cid} IPR flow", [r["time"] for r in fl], [r["ipr"] for r in fl]),
                   (f"{cid} distance", [r["time"] for r in tr], [r["value"] for r in tr])]
    plot = svg.line_plot(series, title="flow vs training over time",
                         xlabel="time (steps x learning rate)", ylabel="IPR / relative distance")
    return {"verdict": v}, plot


register(Experiment(
    "breakdown", "NLGP(100) and NLGP(0.01): relative distance of flow and training",
    defaults=dict(n=40, xi=[0.3, 0.7], g=[100, 0.01], tau=0.1, batch=[100000, 100000],
                  steps=[120, 200], stride=10, chunk=50000, band=0.1, ipr_low=0.15,
                  onset_factor=1.2),
    full=dict(n=100, batch=[1000000, 400000], steps=[600, 1000]),
    seeds=[0], full_seeds=[0, 1, 2],
    cells=_brk_cells, summarize=_brk_summary))


# ---------------------------------------------------------------------------
# ica_compare: ICA localizes where the neuron does not
# ---------------------------------------------------------------------------

def _ica_cells(p, seeds):
    return [("kur({:g})".format(p["k"]), s, p) for s in seeds]


def _ica_cell(seed, config_id, p):
    model = StimulusModel.kur(int(p["n"]), float(p["k"]), tuple(p["xi"]))
    X = task_sample(model, int(p["samples"]), substream(seed, 7)).inputs
    res = fastica(X, int(p["components"]), rng=substream(seed, 8))
    rows = [_row(seed, config_id, c, unit=i, source="ica", time=float(res.n_iter),
                 value=int(res.converged), _w=c) for i, c in enumerate(res.canonical())]
    tr = train(model, "single", _train_cfg(p, seed))
    rows.append(_row(seed, config_id, tr.final[0], unit=0, source="train",
                     time=float(tr.times[-1]), _w=tr.final[0]))
    return rows


def _ica_summary(rows, p):
    ica_loc = sum(r["ipr"] > IPR_THRESHOLD for r in _ok(rows) if r["source"] == "ica")
    ica_n = sum(r["source"] == "ica" for r in _ok(rows))
    neuron = [r["ipr"] for r in _ok(rows) if r["source"] == "train"]
    return {"ica_localized": int(ica_loc), "ica_components": int(ica_n),
            "neuron_ipr": neuron,
            "passed": bool(ica_n and ica_loc >= 0.5 * ica_n and neuron
                           and max(neuron) < IPR_THRESHOLD)}, _heatmap(rows, "ICA components", "ica")


register(Experiment(
    "ica_compare", "Kur(3): FastICA components vs the single neuron",
    defaults=dict(n=40, k=3, xi=[1, 3], samples=20000, components=10,
                  tau=0.05, batch=2000, steps=3000),
    full=dict(samples=100000, components=40),
    seeds=[0], full_seeds=[0, 1, 2],
    cells=_ica_cells, summarize=_ica_summary))


CELL_FUNCS = {"kurtosis_sweep": _sweep_cell, "peak_prediction": _peak_cell,
              "elliptical": _ell_cell, "theory_vs_sim": _tvs_cell, "scm": _net_cell,
              "two_layer": _net_cell, "breakdown": _brk_cell, "ica_compare": _ica_cell}


# ---------------------------------------------------------------------------
# runner
# ---------------------------------------------------------------------------

def resolve_params(cfg: ExperimentConfig) -> dict:
    exp = REGISTRY[cfg.experiment]
    p = dict(exp.defaults)
    if cfg.full:
        p.update(exp.full)
    unknown = set(cfg.params) - set(p)
    if unknown:
        raise ValueError(f"unknown parameters for {cfg.experiment}: {sorted(unknown)}")
    p.update(cfg.params)
    return p


def _run_cell(args):
    name, config_id, seed, p = args
    try:
        return CELL_FUNCS[name](seed, config_id, p)
    except Exception as e:  # a failed cell becomes a failure row, not a failed run
        log.warning("cell %s seed %s failed: %s", config_id, seed, e)
        return [{"seed": seed, "config_id": config_id, "status": "failed",
                 "error": f"{type(e).__name__}: {e}".replace("\n", " "),
                 "trace": traceback.format_exc()}]


def _workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        raise ValueError(f"{WORKERS_ENV} must be an integer") from None


def run_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    if cfg.experiment not in REGISTRY:
        raise KeyError(f"unknown experiment {cfg.experiment!r}; known: {sorted(REGISTRY)}")
    exp = REGISTRY[cfg.experiment]
    p = resolve_params(cfg)
    seeds = cfg.seeds if cfg.seeds is not None else (exp.full_seeds if cfg.full else exp.seeds)
    h = config_hash({"experiment": exp.name, "params": p, "seeds": seeds, "version": __version__})
    out = Path(cfg.out_dir or Path("results") / exp.name)
    out.mkdir(parents=True, exist_ok=True)
    cells = [(exp.name, cid, s, cp) for cid, s, cp in exp.cells(p, seeds)]

    rows = []
    csv_path = out / f"{exp.name}.csv"
    with CsvWriter(csv_path, exp.name, ROW_COLUMNS, h) as writer:
        n = _workers()
        if n > 1:
            with ProcessPoolExecutor(n) as pool:
                results = pool.map(_run_cell, cells)
                for res in results:
                    for r in res:
                        writer.write(r)
                    rows += res
        else:
            for c in cells:
                res = _run_cell(c)
                for r in res:
                    writer.write(r)
                rows += res

    aggs = aggregate(rows)
    agg_path = out / f"{exp.name}_aggregate.csv"
    cols = list(aggs[0]) if aggs else ["config_id"]
    with CsvWriter(agg_path, f"{exp.name}_aggregate", cols, h) as writer:
        for a in aggs:
            writer.write(a)

    files = {"rows": csv_path, "aggregate": agg_path}
    ok = _ok(rows)
    summary, plot = exp.summarize(ok, p) if ok else ({"passed": False}, None)
    summary = dict(summary, experiment=exp.name, config_hash=h, version=__version__,
                   cells=len(cells), failed_rows=sum(r["status"] != "ok" for r in rows))
    if plot is not None:
        files["svg"] = out / f"{exp.name}.svg"
        files["svg"].write_text(plot)
    files["summary"] = out / f"{exp.name}_summary.json"
    files["summary"].write_text(json.dumps(_jsonable(summary), indent=2, sort_keys=True) + "\n")
    return ExperimentReport(exp.name, rows, aggs, summary, h, __version__, files)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if np.isfinite(x) else str(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x
