"""Seeded random initialization shared by all algorithms."""

from __future__ import annotations

import numpy as np

from ..admm import AdmmState
from ..tensor import CouplingVariables, Parafac2Model, RaggedTensor
from .options import InitializationError, SolveOptions

__all__ = ["initialize", "check_rank"]


def check_rank(data: RaggedTensor, rank: int):
    """Reject ranks exceeding some ``J_k``: no ``J_k x R`` matrix with orthonormal columns would exist."""
    short = [k for k, J in enumerate(data.J) if J < rank]
    if short:
        raise InitializationError(
            f"rank {rank} exceeds the column count of slice(s) {short[:5]} (J_k = {data.J[short[0]]}); "
            "PARAFAC2 needs R <= min_k J_k"
        )


def initialize(data: RaggedTensor, opts: SolveOptions, seed: int | None = None):
    """Draw factors, auxiliaries and duals from U(0, 1); ``P_k`` are the first R identity columns.

    The draws happen in a fixed order (A, each B_k, C, Z_A, mu_A, each Z_B,
    each mu_Z, each mu_Delta, DeltaB, Z_C, mu_C), so one seed gives the same
    starting point for every algorithm.

    Returns
    -------
    model : Parafac2Model
    state : AdmmState
    """
    R = opts.rank
    check_rank(data, R)
    rng = np.random.default_rng(opts.seed if seed is None else seed)
    I, J, K = data.I, data.J, data.K
    A = rng.uniform(size=(I, R))
    B = [rng.uniform(size=(Jk, R)) for Jk in J]
    C = rng.uniform(size=(K, R))
    ZA = rng.uniform(size=(I, R))
    muA = rng.uniform(size=(I, R))
    ZB = [rng.uniform(size=(Jk, R)) for Jk in J]
    muZB = [rng.uniform(size=(Jk, R)) for Jk in J]
    muDelta = [rng.uniform(size=(Jk, R)) for Jk in J]
    Delta = rng.uniform(size=(R, R))
    ZC = rng.uniform(size=(K, R))
    muC = rng.uniform(size=(K, R))
    coupling = CouplingVariables([np.eye(Jk, R) for Jk in J], Delta)
    state = AdmmState(ZA, muA, ZB, muZB, muDelta, coupling, ZC, muC)
    return Parafac2Model(A, B, C), state
