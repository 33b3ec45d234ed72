"""``pf2admm`` command line: simulate, fit, evaluate, benchmark and replay.

Exit codes: 0 success, 2 usage or configuration error, 3 numerical failure.
Every run writes ``manifest.json`` into its output directory; ``pf2admm
replay MANIFEST -o DIR`` re-executes it.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import os
import sys
from pathlib import Path

import numpy as np
import scipy

from .. import __version__
from ..admm import InnerStopRule
from ..io import load_model, load_tensor, save_model, write_json
from ..prox import BACKEND
from ..simgen import GenerationError, Setup, SimSpec, read_simulation, simulate, write_simulation
from ..solvers import AllFitsFailedError, DivergenceError, SolveOptions, UnsupportedConstraintError, multi_init_fit
from ..solvers.options import InitializationError
from ..tensor import DimensionError
from . import suites
from ._parsing import ConfigError, parse_constraints, parse_dims, parse_ridge
from .evaluation import METRIC_COLUMNS, SIM_COLUMNS, model_metrics, sim_cwsnr_rows, write_csv

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3

# Fields that hold wall-clock measurements; everything else in the outputs is reproducible bitwise.
WALL_CLOCK_FIELDS = ("wall_ms", "ms")


class NumericFailure(RuntimeError):
    pass


def _manifest(args, argv, command, **extra):
    return {
        "command": command,
        "argv": list(argv),
        "cwd": os.getcwd(),
        "config": {k: v for k, v in sorted(vars(args).items()) if k != "func"},
        "version": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "backend": BACKEND,
        **extra,
    }


def _output_dir(path):
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ----------------------------------------------------------------------------
# simulate
# ----------------------------------------------------------------------------
def cmd_simulate(args, argv):
    if args.eta is not None and args.eta < 0:
        raise ConfigError("--eta must be non-negative")
    I = J = K = None
    if args.dims:
        I, J, K = parse_dims(args.dims)
    if args.setup == "sm1" and args.j is not None:
        J = args.j
    try:
        spec = SimSpec(args.setup, I, J, K, args.r, args.eta, args.seed, mixC=args.mix_c, pf2_exact=args.pf2_exact)
    except ValueError as err:
        raise ConfigError(str(err)) from None
    sim = simulate(spec)
    out = _output_dir(args.output)
    write_simulation(out, sim)
    write_json(out / "manifest.json", _manifest(args, argv, "simulate", spec=spec.to_dict()))
    print(f"wrote {spec.setup.value} dataset {spec.I}x{spec.J}x{spec.K} (R={spec.R}, eta={spec.eta:g}) to {out}")


# ----------------------------------------------------------------------------
# fit
# ----------------------------------------------------------------------------
def _resolve_rank(args, data_dir):
    if args.rank is not None:
        return args.rank
    meta = Path(data_dir) / "truth" / "meta.json"
    if meta.exists():
        return int(json.loads(meta.read_text())["R"])
    raise ConfigError("--rank is required when the dataset has no truth/ directory")


def options_from_args(args, rank) -> SolveOptions:
    try:
        return SolveOptions(
            rank=rank,
            algorithm=args.algo,
            constraints=parse_constraints(args.constraints),
            ridge=parse_ridge(args.ridge),
            max_outer=args.max_iter,
            eps_rel=args.eps_rel,
            eps_abs=args.eps_abs,
            inner=InnerStopRule(args.inner_eps, args.max_inner),
            max_inner_b=args.max_inner_b,
            rho_b_scale=args.rho_b_scale,
            als_warmstart_iters=args.als_warmstart_iters,
            update_scheme=args.update_scheme,
            seed=args.seed,
        )
    except ConfigError:
        raise
    except (ValueError, TypeError) as err:
        raise ConfigError(str(err)) from None


def cmd_fit(args, argv):
    if args.n_init < 1:
        raise ConfigError("--n-init must be at least 1")
    data = load_tensor(args.data)
    opts = options_from_args(args, _resolve_rank(args, args.data))
    seeds = [args.seed + i for i in range(args.n_init)]
    out = _output_dir(args.output)
    manifest = _manifest(args, argv, "fit", options=opts.to_dict(), seeds=seeds)
    write_json(out / "manifest.json", manifest)
    try:
        result = multi_init_fit(data, opts, args.n_init, seeds=seeds, workers=args.workers)
        best, index = result.best, result.best_index
        reports, models, excluded = result.reports, result.models, result.excluded
    except AllFitsFailedError as err:
        best, index, reports, models, excluded = None, None, err.reports, [None] * len(seeds), [False] * len(seeds)
    inits = []
    for i, (seed, rep) in enumerate(zip(seeds, reports)):
        entry = {"seed": seed, "selected": i == index, "excluded": bool(excluded[i]), "diverged": models[i] is None}
        entry.update(rep.to_dict() if rep is not None else {})
        inits.append(entry)
    report = {"algorithm": opts.algorithm.value, "selected": index, "selected_seed": None if index is None else seeds[index], "inits": inits}
    write_json(out / "report.json", report)
    if best is None:
        raise NumericFailure(f"all {args.n_init} initializations diverged; partial reports in {out / 'report.json'}")
    save_model(out / "model", best, {"algorithm": opts.algorithm.value, "seed": seeds[index]})
    rep = reports[index]
    print(
        f"selected seed {seeds[index]}: loss {rep.final_loss:.6g}, {rep.iterations} iterations, "
        f"converged={rep.converged}, feasible={rep.feasible}"
    )


# ----------------------------------------------------------------------------
# evaluate
# ----------------------------------------------------------------------------
def cmd_evaluate(args, argv):
    model_dir = Path(args.model)
    if (model_dir / "model" / "meta.json").exists():
        model_dir = model_dir / "model"
    est = load_model(model_dir)
    data = truth = noise = None
    if args.data:
        data, truth, noise, _ = read_simulation(args.data)
    if args.truth:
        truth = load_model(args.truth)
    if args.noise:
        noise = load_tensor(args.noise)
    try:
        m = model_metrics(est, truth, data)
    except DimensionError as err:
        raise ConfigError(str(err)) from None
    out = _output_dir(args.output)
    m["model"] = str(args.model)
    sim_rows = []
    if truth is not None and noise is not None:
        sim_rows = sim_cwsnr_rows(est, truth, noise, m.get("permutation"))
        write_csv(out / "sim_cwsnr.csv", sim_rows, SIM_COLUMNS)
    write_json(out / "metrics.json", {**m, "sim_cwsnr": sim_rows} if sim_rows else m)
    write_csv(out / "metrics.csv", [m], METRIC_COLUMNS)
    write_json(out / "manifest.json", _manifest(args, argv, "evaluate"))
    shown = {k: m[k] for k in METRIC_COLUMNS if k in m and k != "model"}
    print(" ".join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}" for k, v in shown.items()))


# ----------------------------------------------------------------------------
# benchmark
# ----------------------------------------------------------------------------
def cmd_benchmark(args, argv):
    try:
        plan = suites.build_plan(args.suite, args.scale, args.replicates, args.n_init, args.max_iter, args.seed)
    except ValueError as err:
        raise ConfigError(str(err)) from None
    out = _output_dir(args.output)
    write_json(out / "manifest.json", _manifest(args, argv, "benchmark", n_datasets=len(plan.datasets), n_init=plan.n_init))
    rows, sim_rows, dropped = suites.run_plan(plan, args.workers)
    write_csv(out / "results.csv", rows, suites.RESULT_COLUMNS)
    payload = {"suite": plan.suite, "scale": plan.scale, "n_init": plan.n_init, "excluded_datasets": dropped, "rows": rows}
    write_json(out / "results.json", payload)
    if sim_rows:
        write_csv(out / "sim_cwsnr.csv", sim_rows, ["dataset", "eta", "label", *SIM_COLUMNS])
    print(f"{plan.suite} ({plan.scale}): {len(rows)} rows, {len(dropped)} datasets excluded -> {out}")


# ----------------------------------------------------------------------------
# replay
# ----------------------------------------------------------------------------
@contextlib.contextmanager
def _working_directory(path):
    previous = os.getcwd()
    os.chdir(path)
    try:
        yield
    finally:
        os.chdir(previous)


def _replace_output(argv, output):
    argv = list(argv)
    for flag in ("-o", "--output"):
        if flag in argv:
            argv[argv.index(flag) + 1] = output
            return argv
    return argv + ["-o", output]


def cmd_replay(args, argv):
    manifest = json.loads(Path(args.manifest).read_text())
    output = str(Path(args.output).resolve())
    replay_argv = _replace_output(manifest["argv"], output)
    with _working_directory(manifest.get("cwd", ".")):
        code = main(replay_argv)
    if code:
        sys.exit(code)


# ----------------------------------------------------------------------------
def _add_fit_flags(p):
    p.add_argument("--algo", choices=["aoadmm", "als", "flexhals"], default="aoadmm")
    p.add_argument("--rank", type=int, default=None, help="number of components (default: rank of DATA/truth)")
    p.add_argument("--constraints", default="", help="MODE=KIND[:param] list, e.g. A=nn,B=tv:0.1,C=nn")
    p.add_argument("--ridge", default="", help="MODE=gamma list, e.g. A=0.1,C=0.1")
    p.add_argument("--n-init", type=int, default=1)
    p.add_argument("--seed", type=int, default=0, help="seed of the first initialization (others count up)")
    p.add_argument("--max-iter", type=int, default=2000)
    p.add_argument("--eps-rel", type=float, default=1e-8)
    p.add_argument("--eps-abs", type=float, default=1e-7)
    p.add_argument("--inner-eps", type=float, default=1e-5)
    p.add_argument("--max-inner", type=int, default=5)
    p.add_argument("--max-inner-b", type=int, default=None)
    p.add_argument("--rho-b-scale", type=float, default=1.0)
    p.add_argument("--als-warmstart-iters", type=int, default=0)
    p.add_argument("--update-scheme", choices=["cmf", "cp"], default="cmf")
    p.add_argument("--workers", type=int, default=1)


def build_parser():
    parser = argparse.ArgumentParser(prog="pf2admm", description="Constrained PARAFAC2 with AO-ADMM.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a simulated dataset")
    p.add_argument("--setup", required=True, choices=[s.value for s in Setup])
    p.add_argument("--r", type=int, default=None, help="number of components")
    p.add_argument("--dims", default=None, help="IxJxK, or IxJmin-JmaxxK for ragged tensors")
    p.add_argument("--j", type=int, default=None, help="J for the sm1 setup")
    p.add_argument("--eta", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mix-c", action="store_true", help="collinear C (nn_crossproduct)")
    p.add_argument("--pf2-exact", action="store_true", help="constant widths (unimodal)")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit a model with several initializations")
    p.add_argument("data")
    _add_fit_flags(p)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("evaluate", help="score a fitted model")
    p.add_argument("model", help="model directory (or a fit output directory)")
    p.add_argument("--data", default=None, help="dataset directory; its truth/ and noise/ are used when present")
    p.add_argument("--truth", default=None)
    p.add_argument("--noise", default=None)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("benchmark", help="run a simulation suite")
    p.add_argument("--suite", required=True, choices=list(suites.SUITES))
    p.add_argument("--scale", choices=["desk", "paper"], default="desk")
    p.add_argument("--replicates", type=int, default=None, help="datasets per cell (default depends on scale)")
    p.add_argument("--n-init", type=int, default=None)
    p.add_argument("--max-iter", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=None, help="process pool size (default: $P2_THREADS or 1)")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    p.add_argument("manifest")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_replay)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        args.func(args, argv)
    except (ConfigError, UnsupportedConstraintError, InitializationError, FileNotFoundError, DimensionError) as err:
        print(f"pf2admm: error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericFailure, DivergenceError, GenerationError, FloatingPointError, np.linalg.LinAlgError) as err:
        print(f"pf2admm: numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    except SystemExit as exc:
        return int(exc.code or 0)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
