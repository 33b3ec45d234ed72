"""Classical PARAFAC2 alternating least squares.

Each outer iteration fixes A, C and DeltaB, solves one orthogonal
Procrustes problem per slice for ``P_k``, forms the projected tensor
``T_k = X_k P_k`` and runs a few CP-ALS sweeps on it. Non-negativity is
supported on A and C only.
"""

from __future__ import annotations

import functools
import time

import numpy as np
import scipy.linalg as sla
from scipy.optimize import nnls

from .._batch import SliceBatches
from ..prox import ProxKind
from ..tensor import CouplingVariables, Parafac2Model, RaggedTensor
from .init import check_rank, initialize
from .options import DivergenceError, FitReport, SolveOptions, UnsupportedConstraintError

NNLS_ENUMERATION_MAX_RANK = 6

__all__ = ["fit_als", "als_iterations", "nnls_rows", "check_als_constraints"]


def check_als_constraints(opts: SolveOptions):
    if not opts.spec("B").is_none:
        raise UnsupportedConstraintError(
            f"unsupported constraint B={opts.spec('B')} for ALS: the evolving mode only admits the PARAFAC2 coupling"
        )
    for mode in ("A", "C"):
        if opts.spec(mode).kind not in (ProxKind.NONE, ProxKind.NONNEG):
            raise UnsupportedConstraintError(
                f"unsupported constraint {mode}={opts.spec(mode)} for ALS: only non-negativity is available"
            )


@functools.lru_cache(maxsize=None)
def _support_masks(R):
    masks = (np.arange(1, 2**R)[:, None] >> np.arange(R)) & 1
    return masks.astype(bool)


def nnls_rows(G, RHS):
    """Rows ``x`` minimizing ``x G x^T - 2 x r^T`` subject to ``x >= 0``, one per row ``r`` of ``RHS``.

    For small R every support set is tried at once for all rows: the
    minimizer is the feasible support solution with the lowest objective.
    Larger R go through :func:`scipy.optimize.nnls` on the Cholesky form
    ``min ||L^T x - L^{-1} r||``.
    """
    R = G.shape[0]
    G = G + 1e-14 * max(np.trace(G), 1e-300) / R * np.eye(R)
    if R > NNLS_ENUMERATION_MAX_RANK:
        L = np.linalg.cholesky(G)
        targets = sla.solve_triangular(L, RHS.T, lower=True)
        return np.stack([nnls(L.T, targets[:, i], maxiter=50 * R)[0] for i in range(RHS.shape[0])])
    masks = _support_masks(R)
    outer = masks[:, :, None] & masks[:, None, :]
    # Off-support rows and columns become identity so each padded solve is the support solve.
    systems = np.where(outer, G[None], np.eye(R)[None])
    targets = np.where(masks[:, :, None], RHS.T[None], 0.0)
    x = np.linalg.solve(systems, targets)
    objective = -np.einsum("mrn,rn->mn", x, RHS.T)
    objective[np.any(x < 0, axis=1)] = np.inf
    best = np.argmin(objective, axis=0)
    out = x[best, :, np.arange(RHS.shape[0])]
    out[objective[best, np.arange(RHS.shape[0])] >= 0] = 0.0
    return out


def _ls_rows(G, RHS, nonneg):
    if nonneg:
        return nnls_rows(G, RHS)
    try:
        return sla.solve(G, RHS.T, assume_a="pos").T
    except (np.linalg.LinAlgError, ValueError):
        return np.linalg.lstsq(G, RHS.T, rcond=None)[0].T


def _procrustes(batches, A, C, Delta):
    """Optimal ``P_k`` for fixed A, C, DeltaB, and the projected slices ``T_k = X_k P_k`` (K x I x R)."""
    K, R = C.shape
    T = np.empty((K, A.shape[0], R))
    Ps = []
    for idx, XT, X in zip(batches.groups, batches.XT, batches.X):
        W = (XT @ A) * C[idx][:, None, :]
        U, _, Vt = np.linalg.svd(W @ Delta.T, full_matrices=False)
        P = U @ Vt
        Ps.append(P)
        T[idx] = X @ P
    return Ps, T


def _sse_projected(batches, T, A, C, Delta):
    # ||X_k - A D_k Delta^T P_k^T||^2 = ||X_k||^2 - ||T_k||^2 + ||T_k - A D_k Delta^T||^2
    M = np.einsum("ir,kr,sr->kis", A, C, Delta)
    value = batches.sq_norms.sum() - np.sum(T**2) + np.sum((T - M) ** 2)
    return max(float(value), 0.0)


def _cp_sweeps(T, A, C, Delta, nnA, nnC, gammas, sweeps):
    K, _, R = T.shape
    eye = np.eye(R)
    gA, gB, gC = gammas
    for _ in range(sweeps):
        rhs = np.einsum("kir,rs,ks->is", T, Delta, C)
        A = _ls_rows((Delta.T @ Delta) * (C.T @ C) + gA * eye, rhs, nnA)
        rhs = np.einsum("kir,is,ks->rs", T, A, C)
        Delta = _ls_rows((A.T @ A) * (C.T @ C) + K * gB * eye, rhs, False)
        rhs = np.einsum("ir,kiq,qr->kr", A, T, Delta)
        C = _ls_rows((A.T @ A) * (Delta.T @ Delta) + gC * eye, rhs, nnC)
    return A, C, Delta


def _ridge_value(A, C, Delta, K, gammas):
    gA, gB, gC = gammas
    return gA * float(np.sum(A**2)) + K * gB * float(np.sum(Delta**2)) + gC * float(np.sum(C**2))


def als_iterations(data: RaggedTensor, model: Parafac2Model, Delta, opts: SolveOptions, n_iter: int, batches=None):
    """Run ``n_iter`` ALS iterations from ``(A, C, DeltaB)``; returns ``(model, coupling)`` with ``B_k = P_k DeltaB``."""
    batches = batches if batches is not None else SliceBatches(data)
    nnA = opts.spec("A").kind is ProxKind.NONNEG
    nnC = opts.spec("C").kind is ProxKind.NONNEG
    gammas = (opts.gamma("A"), opts.gamma("B"), opts.gamma("C"))
    A, C, Delta = model.A, model.C, np.asarray(Delta, dtype=np.float64)
    Ps = None
    for _ in range(n_iter):
        Ps, T = _procrustes(batches, A, C, Delta)
        A, C, Delta = _cp_sweeps(T, A, C, Delta, nnA, nnC, gammas, opts.als_cp_sweeps)
    if Ps is None:
        Ps, _ = _procrustes(batches, A, C, Delta)
    P = batches.unstack(Ps)
    return Parafac2Model(A, [Pk @ Delta for Pk in P], C), CouplingVariables(P, Delta)


def fit_als(data: RaggedTensor, opts: SolveOptions, init=None):
    """Fit PARAFAC2 by ALS.

    Parameters
    ----------
    data : RaggedTensor
    opts : SolveOptions
        Only non-negativity (or nothing) on A and C; ridge on any mode.
    init : (Parafac2Model, AdmmState), optional
        A, C and ``state.coupling.DeltaB`` are used; defaults to
        :func:`initialize` with ``opts.seed``.

    Returns
    -------
    model : Parafac2Model
    report : FitReport
        ``loss[0]`` is the loss at the initial (A, C, DeltaB) with the
        optimal ``P_k``, since ``P_k`` are not free variables of ALS.

    Raises
    ------
    UnsupportedConstraintError
        For any B-mode constraint, or non-NN constraints on A or C.
    """
    check_als_constraints(opts)
    check_rank(data, opts.rank)
    start = time.perf_counter()
    model, state = init if init is not None else initialize(data, opts, opts.seed)
    model.check_compatible(data)
    batches = SliceBatches(data)
    nnA = opts.spec("A").kind is ProxKind.NONNEG
    nnC = opts.spec("C").kind is ProxKind.NONNEG
    gammas = (opts.gamma("A"), opts.gamma("B"), opts.gamma("C"))
    K = data.K
    A, C, Delta = model.A.copy(), model.C.copy(), state.coupling.DeltaB.copy()

    report = FitReport(algorithm="als", seed=opts.seed)
    Ps, T = _procrustes(batches, A, C, Delta)
    f = _sse_projected(batches, T, A, C, Delta)
    report.sse.append(f)
    report.loss.append(f + _ridge_value(A, C, Delta, K, gammas))

    for t in range(1, opts.max_outer + 1):
        if t > 1:
            Ps, T = _procrustes(batches, A, C, Delta)
        A, C, Delta = _cp_sweeps(T, A, C, Delta, nnA, nnC, gammas, opts.als_cp_sweeps)
        f = _sse_projected(batches, T, A, C, Delta)
        loss = f + _ridge_value(A, C, Delta, K, gammas)
        report.sse.append(f)
        report.loss.append(loss)
        report.iterations = t
        if not np.isfinite(loss):
            report.wall_ms = int(1000 * (time.perf_counter() - start))
            raise DivergenceError(f"ALS loss became non-finite at iteration {t}", report)
        prev = report.loss[-2]
        if loss < opts.eps_abs or abs(prev - loss) < opts.eps_rel * prev:
            report.converged = True
            break

    P = batches.unstack(Ps)
    fitted = Parafac2Model(A, [Pk @ Delta for Pk in P], C)
    report.feasible = True
    report.wall_ms = int(1000 * (time.perf_counter() - start))
    report.coupling = CouplingVariables(P, Delta)
    return fitted, report
