"""Inner ADMM solvers for the B-, A- and D-blocks of AO-ADMM PARAFAC2.

The loss is the plain (un-halved) sum of squared errors
``f = sum_k ||X_k - A D_k B_k^T||^2`` and all duals are scaled duals. Each
block runs a few ADMM iterations on a fixed outer state and writes the new
factors, auxiliaries and duals back.

Per-slice quantities are processed in stacks of equal ``J_k``
(:class:`~pf2admm._batch.SliceBatches`) so the Procrustes SVDs and normal
equation solves run batched.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from ._batch import SliceBatches
from .prox import ProxKind, ProxSpec
from .prox.projection import project_stacks
from .tensor import (
    BatchedCholesky,
    CholeskySolver,
    CouplingVariables,
    NotPositiveDefiniteError,
    Parafac2Model,
)

__all__ = [
    "NumericalError",
    "InnerStopRule",
    "AdmmState",
    "BlockResult",
    "inner_residuals",
    "penalty_heuristics",
    "update_B_block",
    "update_A_block_cmf",
    "update_D_block_cmf",
    "update_A_block_cp",
    "update_D_block_cp",
    "RHO_FLOOR",
]

RHO_FLOOR = 1e-12


class NumericalError(FloatingPointError):
    """Raised when an update produces non-finite values."""

    def __init__(self, message, iteration=None):
        super().__init__(message if iteration is None else f"{message} (inner iteration {iteration})")
        self.iteration = iteration


@dataclass(frozen=True)
class InnerStopRule:
    """Stop an inner ADMM loop once every relative residual is below ``eps`` or after ``max_inner`` iterations."""

    eps: float = 1e-5
    max_inner: int = 5

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if int(self.max_inner) < 1:
            raise ValueError("max_inner must be at least 1")


@dataclass
class AdmmState:
    """Auxiliary and scaled dual variables plus penalties for every split.

    Attributes
    ----------
    ZA, muA : ndarray (I, R)
    ZB, muZB : list of ndarray (J_k, R)
        Split ``B_k = Z_{B_k}`` for the B-mode regularizer.
    muDelta : list of ndarray (J_k, R)
        Dual of the split ``B_k = Y_k`` onto the PARAFAC2 set.
    coupling : CouplingVariables
        ``Y_k = P_k DeltaB``.
    ZC, muC : ndarray (K, R)
        Row ``k`` holds ``Z_{D_k}`` and its dual.
    rhoA : float
    rhoB, rhoC : ndarray (K,)
    """

    ZA: np.ndarray
    muA: np.ndarray
    ZB: list
    muZB: list
    muDelta: list
    coupling: CouplingVariables
    ZC: np.ndarray
    muC: np.ndarray
    rhoA: float = 1.0
    rhoB: np.ndarray = field(default=None)
    rhoC: np.ndarray = field(default=None)

    def __post_init__(self):
        K = len(self.ZB)
        if self.rhoB is None:
            self.rhoB = np.ones(K)
        if self.rhoC is None:
            self.rhoC = np.ones(K)

    @classmethod
    def from_model(cls, model: Parafac2Model, coupling: CouplingVariables | None = None):
        """State whose auxiliaries equal the primal factors and whose duals are zero."""
        B = [Bk.copy() for Bk in model.B]
        if coupling is None:
            coupling = _coupling_from(B)
        return cls(
            ZA=model.A.copy(),
            muA=np.zeros_like(model.A),
            ZB=B,
            muZB=[np.zeros_like(Bk) for Bk in B],
            muDelta=[np.zeros_like(Bk) for Bk in B],
            coupling=coupling,
            ZC=model.C.copy(),
            muC=np.zeros_like(model.C),
        )

    def copy(self) -> "AdmmState":
        return AdmmState(
            self.ZA.copy(),
            self.muA.copy(),
            [Z.copy() for Z in self.ZB],
            [m.copy() for m in self.muZB],
            [m.copy() for m in self.muDelta],
            self.coupling.copy(),
            self.ZC.copy(),
            self.muC.copy(),
            float(self.rhoA),
            np.array(self.rhoB, dtype=float),
            np.array(self.rhoC, dtype=float),
        )


def _coupling_from(B):
    """Exact PARAFAC2 parametrization of ``{B_k}`` assumed feasible: polar factors against ``B_0``."""
    U, s, Vt = np.linalg.svd(B[0], full_matrices=False)
    Delta = (s[:, None] * Vt)
    P = []
    for Bk in B:
        Uk, _, Vtk = np.linalg.svd(Bk @ Delta.T, full_matrices=False)
        P.append(Uk @ Vtk)
    return CouplingVariables(P, Delta)


@dataclass
class BlockResult:
    """Outcome of one block update: inner iterations run and last residuals."""

    iterations: int
    residuals: dict


def _floor(rho, name):
    rho = np.asarray(rho, dtype=np.float64)
    if np.any(~(rho >= RHO_FLOOR)):
        warnings.warn(f"penalty {name} fell below {RHO_FLOOR:g} (zero factor block); clamped", RuntimeWarning, stacklevel=3)
        rho = np.where(rho >= RHO_FLOOR, rho, RHO_FLOOR)
    return rho


def penalty_heuristics(model: Parafac2Model):
    """Automatic penalties ``rho_A``, ``rho_{B_k}``, ``rho_{D_k}``.

    Each penalty is the trace of the block's normal-equation matrix divided
    by ``R``:

    * ``rho_A = tr(sum_k D_k B_k^T B_k D_k) / R``
    * ``rho_{B_k} = tr(D_k A^T A D_k) / R``
    * ``rho_{D_k} = tr(A^T A * B_k^T B_k) / R``

    Returns
    -------
    rhoA : float
    rhoB, rhoD : ndarray of shape (K,)
    """
    return _rho_A(model), _rho_B(model), _rho_C(model)


def _rho_A(model):
    R = model.rank
    value = sum(np.sum(model.C[k] ** 2 * np.sum(Bk**2, axis=0)) for k, Bk in enumerate(model.B)) / R
    return float(_floor(value, "rho_A"))


def _rho_B(model):
    R = model.rank
    a_sq = np.sum(model.A**2, axis=0)
    return _floor((model.C**2) @ a_sq / R, "rho_B")


def _rho_C(model):
    R = model.rank
    a_sq = np.sum(model.A**2, axis=0)
    return _floor(np.array([a_sq @ np.sum(Bk**2, axis=0) for Bk in model.B]) / R, "rho_D")


def _rel(num_sq, den_sq, eps_floor=0.0):
    num = np.sqrt(num_sq)
    den = np.sqrt(den_sq)
    return float(num / den) if den > eps_floor else float(num)


def inner_residuals(x, z, z_prev):
    """Relative primal and dual residuals ``||x - z|| / ||x||`` and ``||z - z_prev|| / ||z||``.

    ``x``, ``z`` and ``z_prev`` may be arrays or equally long lists of arrays
    (e.g. all ``B_k``), in which case norms are taken over the whole
    collection. A zero denominator turns the matching residual absolute.
    """
    if isinstance(x, (list, tuple)):
        dx = sum(float(np.sum((a - b) ** 2)) for a, b in zip(x, z))
        dz = sum(float(np.sum((a - b) ** 2)) for a, b in zip(z, z_prev))
        nx = sum(float(np.sum(a**2)) for a in x)
        nz = sum(float(np.sum(a**2)) for a in z)
    else:
        x, z, z_prev = (np.asarray(v, dtype=np.float64) for v in (x, z, z_prev))
        dx = float(np.sum((x - z) ** 2))
        dz = float(np.sum((z - z_prev) ** 2))
        nx = float(np.sum(x**2))
        nz = float(np.sum(z**2))
    return _rel(dx, nx), _rel(dz, nz)


def _check_finite(value, what, q):
    if not np.isfinite(value):
        raise NumericalError(f"non-finite values in {what}", iteration=q)


def _prox_stack(spec: ProxSpec, M, rho):
    """Apply ``spec.prox`` to each matrix of the stack ``M`` with its own penalty ``rho[i]``."""
    kind = spec.kind
    if kind is ProxKind.NONNEG:
        return np.maximum(M, 0.0)
    if kind is ProxKind.NONE:
        return M.copy()
    if kind is ProxKind.RIDGE:
        r = rho[:, None, None]
        return M * (r / (2.0 * spec.strength + r))
    return np.stack([spec.prox(Mi, ri) for Mi, ri in zip(M, rho)])


def _prox_rows(spec: ProxSpec, M, rho):
    """Prox for C, whose row ``k`` has penalty ``rho[k]``.

    Kinds that couple rows (TV, Laplacian along k) cannot honour per-row
    penalties, so they use the mean penalty for the whole matrix.
    """
    kind = spec.kind
    if kind is ProxKind.RIDGE:
        r = rho[:, None]
        return M * (r / (2.0 * spec.strength + r))
    if kind in (ProxKind.TV, ProxKind.LAPLACIAN):
        return spec.prox(M, float(np.mean(rho)))
    return spec.prox(M, 1.0)


def _solve_with_fallback(G, RHS):
    """``RHS @ inv(G)`` by Cholesky, or by least squares if ``G`` is singular (unsplit blocks only)."""
    try:
        return CholeskySolver(G).solve(RHS)
    except NotPositiveDefiniteError:
        warnings.warn("singular normal equations; using a least-squares solution", RuntimeWarning, stacklevel=3)
        return np.linalg.lstsq(G, RHS.T, rcond=None)[0].T


# ----------------------------------------------------------------------------
# B-block
# ----------------------------------------------------------------------------
def update_B_block(
    data,
    model: Parafac2Model,
    state: AdmmState,
    spec: ProxSpec | None = None,
    ridge: float = 0.0,
    rule: InnerStopRule | None = None,
    *,
    batches: SliceBatches | None = None,
    rho=None,
    rho_scale: float = 1.0,
    sweeps: int = 1,
):
    """Inner ADMM for ``{B_k}`` under the PARAFAC2 constraint and an optional regularizer.

    Every inner iteration solves the regularized least-squares step for each
    ``B_k`` with the Cholesky factor of
    ``D_k A^T A D_k + (ridge + n_split * rho_k / 2) I`` (factored once per
    call), applies the prox of ``spec`` to get ``Z_{B_k}``, projects
    ``{B_k + mu_Delta_k}`` onto the PARAFAC2 set and takes dual ascent steps.
    Without a regularizer there is no ``Z`` split and ``n_split = 1``.

    Parameters
    ----------
    rho : array_like, optional
        Penalties ``rho_{B_k}``; by default the trace heuristic times
        ``rho_scale``.
    sweeps : int
        Projection sweeps per inner iteration.

    Returns
    -------
    model : Parafac2Model
    state : AdmmState
        The same object, updated in place.
    result : BlockResult
    """
    spec = spec if spec is not None else ProxSpec.none()
    rule = rule if rule is not None else InnerStopRule()
    batches = batches if batches is not None else SliceBatches(data)
    A, C = model.A, model.C
    R = model.rank
    if rho is None:
        rho = _rho_B(model) * rho_scale
    rho = np.asarray(rho, dtype=np.float64).reshape(-1)
    state.rhoB = rho
    split = not spec.is_none
    AtA = A.T @ A
    eye = np.eye(R)
    shift = ridge + (rho if split else rho / 2)

    groups = batches.groups
    XtAD, solvers = [], []
    for idx, XT in zip(groups, batches.XT):
        Cg = C[idx]
        XtAD.append((XT @ A) * Cg[:, None, :])
        G = AtA[None] * (Cg[:, :, None] * Cg[:, None, :]) + shift[idx][:, None, None] * eye
        solvers.append(BatchedCholesky(G))
    half_rho = [rho[idx][:, None, None] / 2 for idx in groups]

    B = batches.stack(list(model.B))
    muD = batches.stack(state.muDelta)
    Delta = state.coupling.DeltaB
    Ps = batches.stack(state.coupling.P)
    Y = [Pg @ Delta for Pg in Ps]
    if split:
        Z = batches.stack(state.ZB)
        muZ = batches.stack(state.muZB)

    residuals = {}
    q = 0
    for q in range(1, rule.max_inner + 1):
        for g in range(len(groups)):
            if split:
                rhs = XtAD[g] + half_rho[g] * ((Z[g] - muZ[g]) + (Y[g] - muD[g]))
            else:
                rhs = XtAD[g] + half_rho[g] * (Y[g] - muD[g])
            B[g] = solvers[g].solve(rhs)
        _check_finite(sum(float(np.sum(b)) for b in B), "B", q)

        if split:
            Z_prev = Z
            Z = [_prox_stack(spec, B[g] + muZ[g], rho[idx]) for g, idx in enumerate(groups)]
        Y_prev = Y
        Ps, Delta = project_stacks(groups, [B[g] + muD[g] for g in range(len(groups))], rho, Delta, sweeps)
        Y = [Pg @ Delta for Pg in Ps]
        for g in range(len(groups)):
            muD[g] = muD[g] + B[g] - Y[g]
            if split:
                muZ[g] = muZ[g] + B[g] - Z[g]

        residuals = {}
        residuals["primal_Y"], residuals["dual_Y"] = inner_residuals(B, Y, Y_prev)
        if split:
            residuals["primal_Z"], residuals["dual_Z"] = inner_residuals(B, Z, Z_prev)
        if max(residuals.values()) <= rule.eps:
            break

    state.muDelta = batches.unstack(muD)
    state.coupling = CouplingVariables(batches.unstack(Ps), Delta)
    if split:
        state.ZB = batches.unstack(Z)
        state.muZB = batches.unstack(muZ)
    new = Parafac2Model(A, batches.unstack(B), C)
    return new, state, BlockResult(q, residuals)


# ----------------------------------------------------------------------------
# A- and D-blocks
# ----------------------------------------------------------------------------
def _xb(batches, B):
    """Stacks of ``X_k B_k``, shared by the A- and D-block right-hand sides."""
    return [Xg @ Bg for Xg, Bg in zip(batches.X, batches.stack(list(B)))]


def _admm_matrix_block(rhs, G, Z, mu, spec, ridge, rho, rule, what):
    """ADMM on ``min ||.||^2-loss + ridge ||M||^2 + g(Z)`` with normal equations ``M G = rhs``."""
    R = G.shape[0]
    solver = CholeskySolver(G + (2 * ridge + rho) / 2 * np.eye(R))
    M = None
    residuals = {}
    q = 0
    for q in range(1, rule.max_inner + 1):
        M = solver.solve(rhs + rho / 2 * (Z - mu))
        _check_finite(float(np.sum(M)), what, q)
        Z_prev = Z
        Z = spec.prox(M + mu, rho)
        mu = mu + M - Z
        residuals = dict(zip(("primal", "dual"), inner_residuals(M, Z, Z_prev)))
        if max(residuals.values()) <= rule.eps:
            break
    return M, Z, mu, BlockResult(q, residuals)


def update_A_block_cmf(
    data,
    model: Parafac2Model,
    state: AdmmState,
    spec: ProxSpec | None = None,
    ridge: float = 0.0,
    rule: InnerStopRule | None = None,
    *,
    batches: SliceBatches | None = None,
    rho=None,
    XB=None,
):
    """A-block from the coupled-matrix view, ``Gamma_k = B_k D_k``.

    The data term enters through ``sum_k X_k Gamma_k`` and
    ``sum_k Gamma_k^T Gamma_k``, both formed once per call. Without a
    regularizer the block is solved exactly by (ridge-)least squares.
    ``XB`` optionally supplies the stacks of ``X_k B_k``.
    """
    spec = spec if spec is not None else ProxSpec.none()
    rule = rule if rule is not None else InnerStopRule()
    batches = batches if batches is not None else SliceBatches(data)
    XB = XB if XB is not None else _xb(batches, model.B)
    C = model.C
    rhs = sum(np.sum(XBg * C[idx][:, None, :], axis=0) for XBg, idx in zip(XB, batches.groups))
    G = sum(np.outer(C[k], C[k]) * (Bk.T @ Bk) for k, Bk in enumerate(model.B))
    if spec.is_none:
        A = _solve_with_fallback(G + ridge * np.eye(model.rank), rhs)
        _check_finite(float(np.sum(A)), "A", 1)
        return Parafac2Model(A, model.B, C), state, BlockResult(1, {})
    if rho is None:
        rho = _rho_A(model)
    state.rhoA = float(rho)
    A, state.ZA, state.muA, result = _admm_matrix_block(rhs, G, state.ZA, state.muA, spec, ridge, state.rhoA, rule, "A")
    return Parafac2Model(A, model.B, C), state, result


def _admm_rows_block(rhs, G, Z, mu, spec, ridge, rho, rule, what):
    """Row-wise ADMM for C: row ``k`` solves ``c_k (G_k + (2 ridge + rho_k)/2 I) = rhs_k + rho_k/2 (z_k - mu_k)``."""
    R = G.shape[1]
    solver = BatchedCholesky(G + ((2 * ridge + rho) / 2)[:, None, None] * np.eye(R))
    half = rho[:, None] / 2
    M = None
    residuals = {}
    q = 0
    for q in range(1, rule.max_inner + 1):
        M = solver.solve(rhs + half * (Z - mu))
        _check_finite(float(np.sum(M)), what, q)
        Z_prev = Z
        Z = _prox_rows(spec, M + mu, rho)
        mu = mu + M - Z
        residuals = dict(zip(("primal", "dual"), inner_residuals(M, Z, Z_prev)))
        if max(residuals.values()) <= rule.eps:
            break
    return M, Z, mu, BlockResult(q, residuals)


def _solve_rows(G, rhs, ridge):
    R = G.shape[1]
    try:
        return BatchedCholesky(G + ridge * np.eye(R)).solve(rhs)
    except NotPositiveDefiniteError:
        warnings.warn("singular normal equations for C; using least-squares solutions", RuntimeWarning, stacklevel=3)
        return np.stack([np.linalg.lstsq(Gk + ridge * np.eye(R), r, rcond=None)[0] for Gk, r in zip(G, rhs)])


def update_D_block_cmf(
    data,
    model: Parafac2Model,
    state: AdmmState,
    spec: ProxSpec | None = None,
    ridge: float = 0.0,
    rule: InnerStopRule | None = None,
    *,
    batches: SliceBatches | None = None,
    rho=None,
    XB=None,
):
    """D-block from the coupled-matrix view.

    Row ``k`` of C solves an R x R system with matrix
    ``A^T A * B_k^T B_k + ((2 ridge + rho_k) / 2) I`` and right-hand side
    ``diag(A^T X_k B_k) + (rho_k / 2) (z_k - mu_k)``.
    """
    spec = spec if spec is not None else ProxSpec.none()
    rule = rule if rule is not None else InnerStopRule()
    batches = batches if batches is not None else SliceBatches(data)
    XB = XB if XB is not None else _xb(batches, model.B)
    A = model.A
    K, R = model.C.shape
    rhs = np.empty((K, R))
    for XBg, idx in zip(XB, batches.groups):
        rhs[idx] = np.sum(A[None] * XBg, axis=1)
    AtA = A.T @ A
    G = np.stack([AtA * (Bk.T @ Bk) for Bk in model.B])
    if spec.is_none:
        C = _solve_rows(G, rhs, ridge)
        _check_finite(float(np.sum(C)), "C", 1)
        return Parafac2Model(A, model.B, C), state, BlockResult(1, {})
    if rho is None:
        rho = _rho_C(model)
    state.rhoC = np.asarray(rho, dtype=np.float64).reshape(-1) * np.ones(K)
    C, state.ZC, state.muC, result = _admm_rows_block(rhs, G, state.ZC, state.muC, spec, ridge, state.rhoC, rule, "C")
    return Parafac2Model(A, model.B, C), state, result


def _projected_products(batches, coupling):
    """Stacks of ``T_k DeltaB = X_k P_k DeltaB`` with ``T_k = X_k P_k``."""
    Delta = coupling.DeltaB
    return [(Xg @ Pg) @ Delta for Xg, Pg in zip(batches.X, batches.stack(coupling.P))]


def update_A_block_cp(
    data,
    model: Parafac2Model,
    state: AdmmState,
    spec: ProxSpec | None = None,
    ridge: float = 0.0,
    rule: InnerStopRule | None = None,
    *,
    batches: SliceBatches | None = None,
    rho=None,
    TD=None,
):
    """A-block from the CP view of the projected tensor ``T_k = X_k P_k``.

    Assumes ``B_k = P_k DeltaB``. The normal equations use the MTTKRP
    ``sum_k T_k DeltaB D_k`` and the Gram ``DeltaB^T DeltaB * C^T C``; the
    automatic penalty is ``tr(DeltaB^T DeltaB * C^T C) / R``. ``TD``
    optionally supplies the stacks of ``T_k DeltaB``.
    """
    spec = spec if spec is not None else ProxSpec.none()
    rule = rule if rule is not None else InnerStopRule()
    batches = batches if batches is not None else SliceBatches(data)
    TD = TD if TD is not None else _projected_products(batches, state.coupling)
    C = model.C
    Delta = state.coupling.DeltaB
    rhs = sum(np.sum(TDg * C[idx][:, None, :], axis=0) for TDg, idx in zip(TD, batches.groups))
    G = (Delta.T @ Delta) * (C.T @ C)
    if spec.is_none:
        A = _solve_with_fallback(G + ridge * np.eye(model.rank), rhs)
        _check_finite(float(np.sum(A)), "A", 1)
        return Parafac2Model(A, model.B, C), state, BlockResult(1, {})
    if rho is None:
        rho = float(_floor(np.trace(G) / model.rank, "rho_A"))
    state.rhoA = float(rho)
    A, state.ZA, state.muA, result = _admm_matrix_block(rhs, G, state.ZA, state.muA, spec, ridge, state.rhoA, rule, "A")
    return Parafac2Model(A, model.B, C), state, result


def update_D_block_cp(
    data,
    model: Parafac2Model,
    state: AdmmState,
    spec: ProxSpec | None = None,
    ridge: float = 0.0,
    rule: InnerStopRule | None = None,
    *,
    batches: SliceBatches | None = None,
    rho=None,
    TD=None,
):
    """C-block from the CP view: one shared system ``A^T A * DeltaB^T DeltaB`` for every row.

    Row ``k`` of the right-hand side is ``diag(A^T T_k DeltaB)``; the
    automatic penalty ``tr(A^T A * DeltaB^T DeltaB) / R`` is shared by all k.
    """
    spec = spec if spec is not None else ProxSpec.none()
    rule = rule if rule is not None else InnerStopRule()
    batches = batches if batches is not None else SliceBatches(data)
    TD = TD if TD is not None else _projected_products(batches, state.coupling)
    A = model.A
    K, R = model.C.shape
    Delta = state.coupling.DeltaB
    rhs = np.empty((K, R))
    for TDg, idx in zip(TD, batches.groups):
        rhs[idx] = np.sum(A[None] * TDg, axis=1)
    G = (A.T @ A) * (Delta.T @ Delta)
    if spec.is_none:
        C = _solve_with_fallback(G + ridge * np.eye(R), rhs)
        _check_finite(float(np.sum(C)), "C", 1)
        return Parafac2Model(A, model.B, C), state, BlockResult(1, {})
    if rho is None:
        rho = float(_floor(np.trace(G) / R, "rho_D"))
    state.rhoC = np.full(K, float(np.mean(rho)))
    Gs = np.broadcast_to(G, (K, R, R))
    C, state.ZC, state.muC, result = _admm_rows_block(rhs, Gs, state.ZC, state.muC, spec, ridge, state.rhoC, rule, "C")
    return Parafac2Model(A, model.B, C), state, result
