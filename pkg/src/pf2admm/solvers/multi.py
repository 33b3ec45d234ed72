"""Algorithm dispatch and best-of-n multi-initialization fitting."""

from __future__ import annotations

import dataclasses
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from ..tensor import RaggedTensor
from .als import fit_als
from .aoadmm import fit_aoadmm
from .flexhals import fit_flex_hals
from .init import initialize
from .options import Algorithm, DivergenceError, FitReport, SolveOptions

__all__ = ["fit", "multi_init_fit", "MultiFitResult", "AllFitsFailedError", "select_best"]

_FITTERS = {
    Algorithm.AOADMM: fit_aoadmm,
    Algorithm.ALS: fit_als,
    Algorithm.FLEXHALS: fit_flex_hals,
}


class AllFitsFailedError(RuntimeError):
    """Every initialization diverged; ``reports`` holds their partial reports."""

    def __init__(self, message, reports):
        super().__init__(message)
        self.reports = reports


def fit(data: RaggedTensor, opts: SolveOptions, init=None):
    """Fit with the algorithm named in ``opts``; returns ``(model, report)``."""
    return _FITTERS[opts.algorithm](data, opts, init)


@dataclass
class MultiFitResult:
    best: object
    best_index: int
    models: list
    reports: list
    excluded: list

    @property
    def best_report(self) -> FitReport:
        return self.reports[self.best_index]


def select_best(reports, eligible=None) -> int | None:
    """Index of the lowest final loss among converged-and-feasible runs, else among all runs.

    ``eligible`` (a list of booleans) removes runs from consideration, e.g.
    diverged or degenerate ones. Ties go to the earlier run.
    """
    eligible = eligible if eligible is not None else [r is not None for r in reports]
    candidates = [i for i, r in enumerate(reports) if eligible[i] and r is not None]
    if not candidates:
        return None
    good = [i for i in candidates if reports[i].converged and reports[i].feasible]
    pool = good or candidates
    return min(pool, key=lambda i: (reports[i].final_loss, i))


def _run(data, opts, seed, init_fn):
    run_opts = dataclasses.replace(opts, seed=seed)
    init = init_fn(data, run_opts, seed) if init_fn is not None else initialize(data, run_opts, seed)
    try:
        return fit(data, run_opts, init)
    except DivergenceError as err:
        return None, err.report


def multi_init_fit(
    data: RaggedTensor,
    opts: SolveOptions,
    n_init: int,
    *,
    seeds=None,
    exclude=None,
    workers: int = 1,
    init_fn=None,
) -> MultiFitResult:
    """Run ``n_init`` seeded fits and select one.

    Parameters
    ----------
    seeds : sequence of int, optional
        Defaults to ``opts.seed, opts.seed + 1, ...``.
    exclude : callable, optional
        ``exclude(model) -> bool``; excluded runs (e.g. degenerate solutions)
        are never selected.
    workers : int
        Thread pool size. Results do not depend on it.
    init_fn : callable, optional
        ``init_fn(data, opts, seed) -> (model, state)``; defaults to
        :func:`initialize`.

    Raises
    ------
    AllFitsFailedError
        If every run diverged or was excluded.
    """
    if n_init < 1:
        raise ValueError("n_init must be at least 1")
    seeds = list(seeds) if seeds is not None else [opts.seed + i for i in range(n_init)]
    if len(seeds) != n_init:
        raise ValueError("need one seed per initialization")
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda s: _run(data, opts, s, init_fn), seeds))
    else:
        results = [_run(data, opts, s, init_fn) for s in seeds]
    models = [m for m, _ in results]
    reports = [r for _, r in results]
    excluded = [m is not None and exclude is not None and bool(exclude(m)) for m in models]
    eligible = [m is not None and not x for m, x in zip(models, excluded)]
    index = select_best(reports, eligible)
    if index is None:
        raise AllFitsFailedError(f"all {n_init} initializations diverged or were excluded", reports)
    return MultiFitResult(models[index], index, models, reports, excluded)
