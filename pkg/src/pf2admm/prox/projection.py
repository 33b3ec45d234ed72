"""Approximate Euclidean projection onto the PARAFAC2 constraint set.

The set holds collections ``{Y_k}`` with equal cross-products, written as
``Y_k = P_k DeltaB`` with column-orthonormal ``P_k``. The weighted problem
``min sum_k (rho_k / 2) ||Bt_k - P_k DeltaB||^2`` is solved by alternating
orthogonal Procrustes steps for each ``P_k`` and a weighted average for
``DeltaB``.
"""

from __future__ import annotations


import numpy as np

from .._batch import groups_by_rows, scatter, stack
from ..tensor import CouplingVariables, DimensionError

__all__ = ["project_parafac2", "project_stacks", "projection_objective", "ProjectionInfo"]


class ProjectionInfo:
    """Diagnostics of one call: objective after each sweep and rank-deficiency flag."""

    def __init__(self):
        self.objective = []
        self.rank_deficient = False

    def __repr__(self):
        return f"ProjectionInfo(sweeps={len(self.objective)}, rank_deficient={self.rank_deficient})"


def projection_objective(Bt, rho, coupling: CouplingVariables) -> float:
    """``sum_k (rho_k / 2) ||Bt_k - P_k DeltaB||_F^2``."""
    D = coupling.DeltaB
    return float(sum(0.5 * r * np.sum((B - P @ D) ** 2) for B, r, P in zip(Bt, rho, coupling.P)))


def _procrustes(M):
    """Batched ``U V^T`` from the economy SVD of each ``M[i]``; also returns singular values."""
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    return U @ Vt, s


def project_stacks(groups, stacks, rho, Delta, sweeps=1, info: ProjectionInfo | None = None):
    """Core of :func:`project_parafac2` on slices pre-grouped into equal-``J`` stacks.

    Returns the stacked bases ``P`` (one array per group) and ``DeltaB``.
    """
    R = Delta.shape[0]
    Delta = np.array(Delta, dtype=np.float64)
    if not np.any(Delta):
        scale = np.mean([np.linalg.norm(Bs, axis=1).mean() for Bs in stacks])
        Delta = (scale if scale > 0 else 1.0) * np.eye(R)
    weights = [rho[idx][:, None, None] for idx in groups]
    total = rho.sum()
    for _ in range(sweeps):
        Ps = []
        for Bs in stacks:
            Pg, s = _procrustes(Bs @ Delta.T)
            if info is not None and s[:, -1].min() <= 1e-12 * max(s[:, 0].max(), np.finfo(float).tiny):
                info.rank_deficient = True
            Ps.append(Pg)
        Delta = sum(np.sum(w * (np.swapaxes(Pg, 1, 2) @ Bs), axis=0) for w, Pg, Bs in zip(weights, Ps, stacks)) / total
        if info is not None:
            info.objective.append(
                sum(0.5 * float(np.sum(w * (Bs - Pg @ Delta) ** 2)) for w, Pg, Bs in zip(weights, Ps, stacks))
            )
    return Ps, Delta


def project_parafac2(Bt, rho, warm: CouplingVariables, sweeps: int = 1, info: ProjectionInfo | None = None):
    """Project ``{Bt_k}`` onto the PARAFAC2 set by ``sweeps`` block sweeps.

    Parameters
    ----------
    Bt : list of ndarray, shapes (J_k, R)
    rho : sequence of float
        Positive slice weights.
    warm : CouplingVariables
        Starting point; only ``warm.DeltaB`` enters the first Procrustes step.
        An all-zero ``DeltaB`` is replaced by ``I_R`` times the mean column
        norm of ``Bt``.
    sweeps : int
    info : ProjectionInfo, optional
        Filled with the objective after each sweep.

    Returns
    -------
    coupling : CouplingVariables
    Y : list of ndarray
        ``P_k @ DeltaB``.
    """
    if sweeps < 1:
        raise ValueError("sweeps must be at least 1")
    K = len(Bt)
    rho = np.asarray(rho, dtype=np.float64).reshape(-1)
    if rho.shape[0] != K or np.any(rho <= 0):
        raise ValueError("rho needs one positive weight per slice")
    R = warm.DeltaB.shape[0]
    for k, B in enumerate(Bt):
        if B.ndim != 2 or B.shape[1] != R or B.shape[0] < R:
            raise DimensionError(f"Bt[{k}] has shape {B.shape}; need (J_k >= {R}, {R})")

    groups = groups_by_rows(Bt)
    stacks = [stack(Bt, idx) for idx in groups]
    Ps, Delta = project_stacks(groups, stacks, rho, warm.DeltaB, sweeps, info)
    P = [None] * K
    for idx, Pg in zip(groups, Ps):
        scatter(P, idx, Pg)
    coupling = CouplingVariables(P, Delta)
    return coupling, [Pk @ Delta for Pk in P]
