"""Benchmark suites: generator settings and algorithm grids for each simulation setup.

``desk`` scale keeps every suite small enough for one machine; ``paper``
scale uses the full dataset counts, initializations and iteration limits.
"""

from __future__ import annotations

import dataclasses
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .. import metrics
from ..simgen import SimSpec, simulate
from ..solvers import AllFitsFailedError, SolveOptions, multi_init_fit
from ._parsing import format_constraints, format_ridge
from .evaluation import model_metrics, sim_cwsnr_rows

SUITES = ("setup1", "setup2", "setup3", "setup3b", "setup4", "setup5", "setup6", "sm1")

RESULT_COLUMNS = [
    "dataset", "setup", "eta", "J", "algo", "label", "constraints", "ridge", "rank", "n_init",
    "selected_seed", "fms", "fms_A", "fms_B", "fms_C", "rel_sse", "iters", "ms",
    "converged", "feasible", "tc", "n_excluded", "n_diverged", "status",
]


@dataclass
class Config:
    label: str
    opts: SolveOptions


@dataclass
class Dataset:
    dataset_id: str
    spec: SimSpec
    configs: list


@dataclass
class Plan:
    suite: str
    scale: str
    n_init: int
    datasets: list
    collect_sim: bool = False


NN_ALL = {"A": "nn", "B": "nn", "C": "nn"}
NN_AC = {"A": "nn", "C": "nn"}


def _opts(rank, algo, constraints, max_outer, ridge=None, **kw):
    return SolveOptions(rank=rank, algorithm=algo, constraints=dict(constraints), ridge=dict(ridge or {}), max_outer=max_outer, **kw)


def _three_way(rank, max_outer, **admm_kw):
    return [
        Config("aoadmm_nn", _opts(rank, "aoadmm", NN_ALL, max_outer, **admm_kw)),
        Config("als_nn_ac", _opts(rank, "als", NN_AC, max_outer)),
        Config("flexhals_nn", _opts(rank, "flexhals", NN_ALL, max_outer)),
    ]


def _scale(scale, desk, paper):
    return desk if scale == "desk" else paper


def build_plan(suite, scale="desk", replicates=None, n_init=None, max_outer=None, seed=0) -> Plan:
    """Datasets and fit configurations of ``suite``; ``None`` arguments take the scale's defaults."""
    if suite not in SUITES:
        raise ValueError(f"unknown suite {suite!r}; choose from {', '.join(SUITES)}")
    if scale not in ("desk", "paper"):
        raise ValueError("scale must be 'desk' or 'paper'")
    datasets = []
    collect_sim = False

    def reps(desk, paper):
        return int(replicates) if replicates is not None else _scale(scale, desk, paper)

    def iters(default):
        return int(max_outer) if max_outer is not None else default

    if suite == "setup1":
        n_init = n_init or _scale(scale, 5, 10)
        configs = _three_way(3, iters(2000))
        for i in range(reps(10, 50)):
            datasets.append(Dataset(f"setup1-{i:03d}", SimSpec("shift", 30, 40, 50, 3, 0.33, seed + i), configs))
    elif suite == "setup2":
        n_init = n_init or _scale(scale, 3, 20)
        grid = np.logspace(np.log10(0.5), np.log10(2.5), 10)
        etas = _scale(scale, grid[[0, 4, 9]], grid)
        configs = _three_way(3, iters(2000))
        for mix in (False, True):
            for eta in etas:
                for i in range(reps(2, 50)):
                    name = f"setup2-{'mix' if mix else 'plain'}-eta{eta:.3f}-{i:03d}"
                    datasets.append(Dataset(name, SimSpec("nn_crossproduct", eta=float(eta), seed=seed + i, mixC=mix), configs))
    elif suite in ("setup3", "setup3b"):
        n_init = n_init or _scale(scale, 5, 20)
        mo = iters(2000)
        tweaks = dict(als_warmstart_iters=1, rho_b_scale=10.0, max_inner_b=20)
        configs = [
            Config("aoadmm_nn", _opts(5, "aoadmm", NN_ALL, mo, **tweaks)),
            Config("aoadmm_nn_unimodal", _opts(5, "aoadmm", {"A": "nn", "B": "unimodal_nn", "C": "nn"}, mo, **tweaks)),
            Config("als_nn_ac", _opts(5, "als", NN_AC, mo)),
            Config("flexhals_nn", _opts(5, "flexhals", NN_ALL, mo)),
        ]
        exact = suite == "setup3b"
        for i in range(reps(5, 50)):
            datasets.append(Dataset(f"{suite}-{i:03d}", SimSpec("unimodal", 10, 50, 15, 5, 0.33, seed + i, pf2_exact=exact), configs))
    elif suite == "setup4":
        n_init = n_init or _scale(scale, 3, 20)
        mo = iters(_scale(scale, 2000, 5000))
        configs = [Config("als", _opts(3, "als", {"C": "nn"}, mo))]
        for ridge in (0.0, 0.1):
            for lam in np.logspace(0, 3, 4):
                cons = {"B": f"laplacian:{lam:g}", "C": "nn"}
                rd = {"A": ridge, "C": ridge} if ridge else {}
                configs.append(Config(f"aoadmm_lap{lam:g}_ridge{ridge:g}", _opts(3, "aoadmm", cons, mo, rd)))
        for i in range(reps(3, 20)):
            datasets.append(Dataset(f"setup4-{i:03d}", SimSpec("smooth_poly", 30, 200, 30, 3, 0.5, seed + i), configs))
    elif suite == "setup5":
        n_init = n_init or _scale(scale, 3, 20)
        mo = iters(_scale(scale, 2000, 5000))
        configs = [Config("als", _opts(3, "als", {"C": "nn"}, mo))]
        for ridge in (0.0, 0.1):
            for lam in np.logspace(-3, 1, 5):
                cons = {"B": f"tv:{lam:g}", "C": "nn"}
                rd = {"A": ridge, "C": ridge} if ridge else {}
                configs.append(Config(f"aoadmm_tv{lam:g}_ridge{ridge:g}", _opts(3, "aoadmm", cons, mo, rd)))
        for i in range(reps(3, 20)):
            datasets.append(Dataset(f"setup5-{i:03d}", SimSpec("piecewise_tv", 30, (200, 250), 30, 3, 0.5, seed + i), configs))
    elif suite == "setup6":
        collect_sim = True
        n_init = n_init or _scale(scale, 3, 50)
        K = _scale(scale, 40, 100)
        etas = _scale(scale, (0.33, 0.5), (0.1, 0.33, 0.5))
        mo = iters(2000)
        configs = [
            Config("aoadmm_nn", _opts(5, "aoadmm", NN_ALL, mo)),
            Config("als_nn_ac", _opts(5, "als", NN_AC, mo)),
        ]
        for eta in etas:
            for i in range(reps(3, 5)):
                datasets.append(Dataset(f"setup6-eta{eta:g}-{i:03d}", SimSpec("cwsnr_shift", 30, 40, K, 5, eta, seed + i), configs))
    elif suite == "sm1":
        n_init = n_init or _scale(scale, 3, 10)
        mo = iters(2000)
        configs = [
            Config("aoadmm_cmf", _opts(5, "aoadmm", NN_ALL, mo, update_scheme="cmf")),
            Config("aoadmm_cp", _opts(5, "aoadmm", NN_ALL, mo, update_scheme="cp")),
        ]
        for J in _scale(scale, (10, 100), (10, 100, 1000)):
            for i in range(reps(2, 10)):
                for eta in (0.33, 0.5):
                    datasets.append(Dataset(f"sm1-J{J}-eta{eta:g}-{i:03d}", SimSpec("sm1", 30, J, 70, 5, eta, seed + i), configs))
    return Plan(suite, scale, int(n_init), datasets, collect_sim)


def _init_seeds(dataset_index, n_init):
    return [10_000 + 1_000 * dataset_index + j for j in range(n_init)]


def run_dataset(plan: Plan, index: int):
    """Fit every configuration of one dataset; returns ``(rows, sim_rows)``."""
    ds = plan.datasets[index]
    sim = simulate(ds.spec)
    seeds = _init_seeds(index, plan.n_init)
    rows, sim_rows = [], []
    for cfg in ds.configs:
        opts = dataclasses.replace(cfg.opts, seed=seeds[0])
        row = {
            "dataset": ds.dataset_id,
            "setup": ds.spec.setup.value,
            "eta": ds.spec.eta,
            "J": "-".join(map(str, ds.spec.J)) if isinstance(ds.spec.J, tuple) else ds.spec.J,
            "algo": opts.algorithm.value,
            "label": cfg.label,
            "constraints": format_constraints(opts.constraints),
            "ridge": format_ridge(opts.ridge),
            "rank": opts.rank,
            "n_init": plan.n_init,
        }
        start = time.perf_counter()
        try:
            result = multi_init_fit(sim.noisy, opts, plan.n_init, seeds=seeds, exclude=metrics.is_degenerate)
        except AllFitsFailedError as err:
            row["n_diverged"] = sum(1 for r in err.reports if r is None or not np.isfinite(r.final_loss))
            row["status"] = "all_excluded_or_diverged"
            row["ms"] = int(1000 * (time.perf_counter() - start))
            rows.append(row)
            continue
        rep = result.best_report
        m = model_metrics(result.best, sim.truth, sim.noisy)
        row.update(
            selected_seed=seeds[result.best_index],
            fms=m["fms"], fms_A=m["fms_A"], fms_B=m["fms_B"], fms_C=m["fms_C"],
            rel_sse=m["rel_sse"], iters=rep.iterations, ms=rep.wall_ms,
            converged=rep.converged, feasible=rep.feasible, tc=m["triple_cosine"],
            n_excluded=int(sum(result.excluded)),
            n_diverged=int(sum(1 for x in result.models if x is None)),
            status="ok",
        )
        rows.append(row)
        if plan.collect_sim:
            for r in sim_cwsnr_rows(result.best, sim.truth, sim.noise, m["permutation"]):
                sim_rows.append({"dataset": ds.dataset_id, "eta": ds.spec.eta, "label": cfg.label, **r})
    return rows, sim_rows


def apply_exclusion(rows):
    """Drop datasets on which ALS produced only degenerate (or diverged) solutions."""
    bad = {r["dataset"] for r in rows if r["algo"] == "als" and r.get("status") != "ok"}
    kept = [r for r in rows if r["dataset"] not in bad]
    return kept, sorted(bad)


def run_plan(plan: Plan, workers=None):
    """Run every dataset of ``plan``, in order, with up to ``workers`` processes.

    ``workers`` defaults to the ``P2_THREADS`` environment variable (1 if unset).
    Row order never depends on the pool size.
    """
    if workers is None:
        workers = int(os.environ.get("P2_THREADS", "1") or 1)
    workers = max(1, int(workers))
    indices = range(len(plan.datasets))
    if workers == 1:
        results = [run_dataset(plan, i) for i in indices]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_dataset, [plan] * len(plan.datasets), indices))
    rows = [r for rs, _ in results for r in rs]
    sim_rows = [r for _, ss in results for r in ss]
    kept, dropped = apply_exclusion(rows)
    dropped_set = set(dropped)
    sim_rows = [r for r in sim_rows if r["dataset"] not in dropped_set]
    return kept, sim_rows, dropped
