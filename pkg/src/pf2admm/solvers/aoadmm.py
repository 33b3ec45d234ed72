"""AO-ADMM for constrained PARAFAC2: B-block, then A-block, then D-block per outer iteration."""

from __future__ import annotations

import time

import numpy as np

from .._batch import SliceBatches
from ..admm import (
    NumericalError,
    _projected_products,
    _xb,
    update_A_block_cmf,
    update_A_block_cp,
    update_B_block,
    update_D_block_cmf,
    update_D_block_cp,
)
from ..tensor import Parafac2Model, RaggedTensor
from .als import als_iterations
from .init import check_rank, initialize
from .options import DivergenceError, FitReport, SolveOptions

__all__ = ["fit_aoadmm", "regularized_loss", "feasibility_gaps", "outer_converged"]


def _sse(batches, model, XB=None):
    """``sum_k ||X_k - A D_k B_k^T||^2`` from cached ``X_k B_k`` without forming residual slices."""
    A, C = model.A, model.C
    XB = XB if XB is not None else _xb(batches, model.B)
    AtA = A.T @ A
    value = batches.sq_norms.sum()
    for XBg, idx in zip(XB, batches.groups):
        Cg = C[idx]
        cross = np.sum(A[None] * XBg, axis=1)
        value -= 2.0 * np.sum(Cg * cross)
    for k, Bk in enumerate(model.B):
        c = C[k]
        value += c @ ((AtA * (Bk.T @ Bk)) @ c)
    return max(float(value), 0.0)


def regularized_loss(model: Parafac2Model, state, opts: SolveOptions, sse: float) -> float:
    """``f + g``: regularizers are evaluated on the auxiliary variables, ridge terms on the factors."""
    g = opts.gamma("A") * float(np.sum(model.A**2))
    g += opts.gamma("B") * sum(float(np.sum(Bk**2)) for Bk in model.B)
    g += opts.gamma("C") * float(np.sum(model.C**2))
    if not opts.spec("A").is_none:
        g += opts.spec("A").penalty(state.ZA)
    if not opts.spec("B").is_none:
        spec = opts.spec("B")
        g += sum(spec.penalty(Z) for Z in state.ZB)
    if not opts.spec("C").is_none:
        g += opts.spec("C").penalty(state.ZC)
    return sse + g


def _rel_gap(X, Z):
    if isinstance(X, (list, tuple)):
        num = sum(float(np.sum((a - b) ** 2)) for a, b in zip(X, Z))
        den = sum(float(np.sum(a**2)) for a in X)
    else:
        num = float(np.sum((X - Z) ** 2))
        den = float(np.sum(X**2))
    return float(np.sqrt(num / den)) if den > 0 else float(np.sqrt(num))


def feasibility_gaps(model: Parafac2Model, state, opts: SolveOptions) -> dict:
    """Relative gaps ``||x - z|| / ||x||`` for every active split."""
    gaps = {}
    if not opts.spec("A").is_none:
        gaps["A"] = _rel_gap(model.A, state.ZA)
    if not opts.spec("B").is_none:
        gaps["B_Z"] = _rel_gap(list(model.B), state.ZB)
    gaps["B_Y"] = _rel_gap(list(model.B), state.coupling.Y())
    if not opts.spec("C").is_none:
        gaps["C"] = _rel_gap(model.C, state.ZC)
    return gaps


def outer_converged(report: FitReport, eps_abs: float, eps_rel: float) -> bool:
    """Both the loss condition and every gap condition (each absolute-or-relative-decrease) hold."""
    if len(report.loss) < 2:
        return False
    prev, cur = report.loss[-2], report.loss[-1]
    if not (cur < eps_abs or abs(prev - cur) < eps_rel * prev):
        return False
    for trace in report.gaps.values():
        g_prev, g = trace[-2], trace[-1]
        if not (g < eps_abs or abs(g_prev - g) < eps_rel * g_prev):
            return False
    return True


def fit_aoadmm(data: RaggedTensor, opts: SolveOptions, init=None):
    """Fit a constrained PARAFAC2 model with AO-ADMM.

    Parameters
    ----------
    data : RaggedTensor
    opts : SolveOptions
    init : (Parafac2Model, AdmmState), optional
        Starting point; copied, never modified. Defaults to
        :func:`initialize` with ``opts.seed``.

    Returns
    -------
    model : Parafac2Model
    report : FitReport
        ``converged`` means the outer stopping conditions held before
        ``max_outer``; ``feasible`` means every final relative gap is at most
        ``eps_abs``.

    Raises
    ------
    DivergenceError
        If the loss or a factor becomes non-finite; the partial report is attached.
    """
    check_rank(data, opts.rank)
    start = time.perf_counter()
    model, state = init if init is not None else initialize(data, opts, opts.seed)
    model.check_compatible(data)
    state = state.copy()
    batches = SliceBatches(data)

    if opts.als_warmstart_iters:
        model, state.coupling = als_iterations(
            data, model, state.coupling.DeltaB, opts, opts.als_warmstart_iters, batches=batches
        )

    specs = {m: opts.spec(m) for m in "ABC"}
    gamma = {m: opts.gamma(m) for m in "ABC"}
    report = FitReport(algorithm="aoadmm", seed=opts.seed)

    def record(model, XB=None):
        f = _sse(batches, model, XB)
        report.sse.append(f)
        report.loss.append(regularized_loss(model, state, opts, f))
        for name, value in feasibility_gaps(model, state, opts).items():
            report.gaps.setdefault(name, []).append(value)

    record(model)
    for t in range(1, opts.max_outer + 1):
        try:
            model, state, rb = update_B_block(
                data, model, state, specs["B"], gamma["B"], opts.inner_b,
                batches=batches, rho_scale=opts.rho_b_scale, sweeps=opts.projection_sweeps,
            )
            if opts.update_scheme == "cmf":
                XB = _xb(batches, model.B)
                model, state, ra = update_A_block_cmf(data, model, state, specs["A"], gamma["A"], opts.inner, batches=batches, XB=XB)
                model, state, rc = update_D_block_cmf(data, model, state, specs["C"], gamma["C"], opts.inner, batches=batches, XB=XB)
            else:
                TD = _projected_products(batches, state.coupling)
                model, state, ra = update_A_block_cp(data, model, state, specs["A"], gamma["A"], opts.inner, batches=batches, TD=TD)
                model, state, rc = update_D_block_cp(data, model, state, specs["C"], gamma["C"], opts.inner, batches=batches, TD=TD)
                XB = _xb(batches, model.B)
        except (NumericalError, np.linalg.LinAlgError) as err:
            report.iterations = t - 1
            report.wall_ms = int(1000 * (time.perf_counter() - start))
            raise DivergenceError(f"AO-ADMM diverged at outer iteration {t}: {err}", report) from err
        report.inner_iterations.append([rb.iterations, ra.iterations, rc.iterations])
        record(model, XB)
        report.iterations = t
        if not np.isfinite(report.loss[-1]):
            report.wall_ms = int(1000 * (time.perf_counter() - start))
            raise DivergenceError(f"AO-ADMM loss became non-finite at outer iteration {t}", report)
        if outer_converged(report, opts.eps_abs, opts.eps_rel):
            report.converged = True
            break

    report.feasible = all(trace[-1] <= opts.eps_abs for trace in report.gaps.values())
    report.wall_ms = int(1000 * (time.perf_counter() - start))
    report.coupling = state.coupling
    report.extra["rho_B_mean"] = float(np.mean(state.rhoB))
    return model, report
