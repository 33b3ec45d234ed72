"""Flexible-coupling PARAFAC2 fitted with hierarchical ALS (HALS).

The model is fitted as a coupled matrix factorization with the penalty
``mu_k ||B_k - P_k DeltaB||^2`` pulling each ``B_k`` towards the PARAFAC2
set. Column-wise (HALS) updates handle non-negativity on every mode.
"""

from __future__ import annotations

import time

import numpy as np

from .._batch import SliceBatches
from ..admm import _xb
from ..prox import ProxKind
from ..prox.projection import project_stacks
from ..tensor import CouplingVariables, Parafac2Model, RaggedTensor
from .init import check_rank, initialize
from .options import DivergenceError, FitReport, SolveOptions, UnsupportedConstraintError

__all__ = ["fit_flex_hals", "hals_columns"]

_TINY = 1e-300


def _check_constraints(opts):
    for mode in "ABC":
        if opts.spec(mode).kind not in (ProxKind.NONE, ProxKind.NONNEG):
            raise UnsupportedConstraintError(
                f"unsupported constraint {mode}={opts.spec(mode)} for flexible coupling: only non-negativity is available"
            )
    if any(opts.gamma(m) for m in "ABC"):
        raise UnsupportedConstraintError("flexible coupling does not take ridge penalties")


def hals_columns(F, G, RHS, nonneg=True, mu=None, target=None):
    """One HALS pass over the columns of ``F`` (stacked over a leading axis).

    Minimizes ``tr(F G F^T) - 2 tr(F^T RHS) + mu ||F - target||^2`` one column
    at a time:
    ``f_r = [RHS_r - sum_{s != r} f_s G_sr + mu target_r]_+ / (G_rr + mu)``.

    Parameters
    ----------
    F : ndarray (n, m, R)
        Updated in place and returned.
    G : ndarray (n, R, R)
    RHS : ndarray (n, m, R)
    mu : ndarray (n,), optional
    target : ndarray (n, m, R), optional
    """
    R = F.shape[-1]
    for r in range(R):
        numerator = RHS[:, :, r] - np.einsum("nms,ns->nm", F, G[:, :, r]) + F[:, :, r] * G[:, r, r, None]
        denominator = G[:, r, r].copy()
        if mu is not None:
            numerator = numerator + mu[:, None] * target[:, :, r]
            denominator = denominator + mu
        column = numerator / np.maximum(denominator, _TINY)[:, None]
        F[:, :, r] = np.maximum(column, 0.0) if nonneg else column
    return F


def fit_flex_hals(data: RaggedTensor, opts: SolveOptions, init=None):
    """Fit PARAFAC2 with flexible coupling and HALS updates.

    Each iteration updates ``P_k`` and DeltaB (one projection sweep weighted
    by ``mu_k``), then ``B_k``, A and C with one HALS pass each. The coupling
    strength starts at ``mu_k = flex_mu_init * SSE_k / ||B_k - P_k DeltaB||^2``
    and grows by ``flex_mu_growth`` per iteration until the relative coupling
    gap drops below ``eps_abs`` (or ``flex_max_mu`` is hit).

    Convergence uses the AO-ADMM rule with loss
    ``SSE + sum_k mu_k ||B_k - P_k DeltaB||^2`` and the relative coupling gap.

    Returns
    -------
    model : Parafac2Model
        The (non-negative) ``B_k``, which satisfy the PARAFAC2 constraint only
        approximately; see ``report.gaps["coupling"]``.
    report : FitReport
        ``extra["mu"]`` traces the mean coupling strength.
    """
    _check_constraints(opts)
    check_rank(data, opts.rank)
    start = time.perf_counter()
    model, state = init if init is not None else initialize(data, opts, opts.seed)
    model.check_compatible(data)
    batches = SliceBatches(data)
    groups = batches.groups
    nn = {m: opts.spec(m).kind is ProxKind.NONNEG for m in "ABC"}
    K = data.K

    A = model.A.copy()
    C = model.C.copy()
    B = batches.stack(list(model.B))
    Delta = state.coupling.DeltaB.copy()
    Ps = batches.stack(state.coupling.P)

    def slice_sse():
        out = np.empty(K)
        for g, idx in enumerate(groups):
            M = (A[None] * C[idx][:, None, :]) @ np.swapaxes(B[g], 1, 2)
            out[idx] = np.sum((batches.X[g] - M) ** 2, axis=(1, 2))
        return out

    def coupling_sq():
        out = np.empty(K)
        for g, idx in enumerate(groups):
            out[idx] = np.sum((B[g] - Ps[g] @ Delta) ** 2, axis=(1, 2))
        return out

    def rel_coupling(cs):
        den = sum(float(np.sum(Bg**2)) for Bg in B)
        return float(np.sqrt(cs.sum() / den)) if den > 0 else float(np.sqrt(cs.sum()))

    sse_k = slice_sse()
    cs = coupling_sq()
    mu = opts.flex_mu_init * sse_k / np.maximum(cs, _TINY)
    mu = np.clip(np.where(cs > 0, mu, opts.flex_mu_init), 1e-12, opts.flex_max_mu)

    report = FitReport(algorithm="flexhals", seed=opts.seed)
    report.sse.append(float(sse_k.sum()))
    report.loss.append(float(sse_k.sum() + mu @ cs))
    report.gaps["coupling"] = [rel_coupling(cs)]
    report.extra["mu"] = [float(mu.mean())]

    for t in range(1, opts.max_outer + 1):
        if t > 1 and report.gaps["coupling"][-1] >= opts.eps_abs:
            mu = np.minimum(mu * opts.flex_mu_growth, opts.flex_max_mu)

        Ps, Delta = project_stacks(groups, B, mu, Delta, 1)
        AtA = A.T @ A
        for g, idx in enumerate(groups):
            Cg = C[idx]
            G = AtA[None] * (Cg[:, :, None] * Cg[:, None, :])
            RHS = (batches.XT[g] @ A) * Cg[:, None, :]
            hals_columns(B[g], G, RHS, nn["B"], mu[idx], Ps[g] @ Delta)

        XB = _xb(batches, batches.unstack(B))
        BtB = np.empty((K, A.shape[1], A.shape[1]))
        for g, idx in enumerate(groups):
            BtB[idx] = np.swapaxes(B[g], 1, 2) @ B[g]
        rhs_A = sum(np.sum(XBg * C[idx][:, None, :], axis=0) for XBg, idx in zip(XB, groups))
        G_A = np.einsum("kr,ks,krs->rs", C, C, BtB)
        A = hals_columns(A[None].copy(), G_A[None], rhs_A[None], nn["A"])[0]

        rhs_C = np.empty_like(C)
        for XBg, idx in zip(XB, groups):
            rhs_C[idx] = np.sum(A[None] * XBg, axis=1)
        G_C = (A.T @ A)[None] * BtB
        C = hals_columns(C[:, None, :].copy(), G_C, rhs_C[:, None, :], nn["C"])[:, 0, :]

        sse_k = slice_sse()
        cs = coupling_sq()
        loss = float(sse_k.sum() + mu @ cs)
        report.sse.append(float(sse_k.sum()))
        report.loss.append(loss)
        report.gaps["coupling"].append(rel_coupling(cs))
        report.extra["mu"].append(float(mu.mean()))
        report.iterations = t
        if not np.isfinite(loss):
            report.wall_ms = int(1000 * (time.perf_counter() - start))
            raise DivergenceError(f"flexible coupling loss became non-finite at iteration {t}", report)
        prev = report.loss[-2]
        g_prev, g = report.gaps["coupling"][-2:]
        loss_ok = loss < opts.eps_abs or abs(prev - loss) < opts.eps_rel * prev
        gap_ok = g < opts.eps_abs or abs(g_prev - g) < opts.eps_rel * g_prev
        if loss_ok and gap_ok:
            report.converged = True
            break

    report.feasible = report.gaps["coupling"][-1] <= opts.eps_abs
    report.wall_ms = int(1000 * (time.perf_counter() - start))
    report.coupling = CouplingVariables(batches.unstack(Ps), Delta)
    return Parafac2Model(A, batches.unstack(B), C), report
