"""Proximal operators acting on single vectors or column-wise on matrices.

Every operator here computes ``argmin_y g(y) + (rho / 2) ||y - x||^2`` for a
penalty ``g`` with the strength already folded in.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg as sla

from ._backend import kernels

__all__ = [
    "prox_nonneg",
    "prox_ridge",
    "prox_graph_laplacian",
    "prox_tv",
    "prox_unimodal",
    "chain_laplacian",
    "LaplacianFactorCache",
]


def prox_nonneg(M, rho=None):
    """Projection onto the non-negative orthant. ``rho`` is accepted for a uniform signature and ignored."""
    return np.maximum(np.asarray(M, dtype=np.float64), 0.0)


def prox_ridge(M, rho, gamma):
    """Prox of ``gamma * ||y||^2``: the shrinkage ``rho x / (2 gamma + rho)``."""
    if gamma < 0:
        raise ValueError("ridge strength must be non-negative")
    return np.asarray(M, dtype=np.float64) * (rho / (2.0 * gamma + rho))


def chain_laplacian(n: int) -> np.ndarray:
    """Laplacian of the path graph on ``n`` nodes (unit edge weights)."""
    L = np.zeros((n, n))
    if n < 2:
        return L
    idx = np.arange(n - 1)
    L[idx, idx + 1] = -1.0
    L[idx + 1, idx] = -1.0
    L[np.diag_indices(n)] = -L.sum(axis=1)
    return L


class LaplacianFactorCache:
    """Cholesky factors of ``L + (rho / 2) I`` keyed by ``rho``.

    ADMM calls the Laplacian prox several times per inner loop with the same
    penalty, so the factorization is kept until ``maxsize`` distinct penalties
    have been seen and the cache is then flushed.
    """

    def __init__(self, L, maxsize=256):
        self.L = np.asarray(L, dtype=np.float64)
        self.maxsize = maxsize
        self._factors = {}

    def factor(self, rho):
        key = float(rho)
        factor = self._factors.get(key)
        if factor is None:
            if len(self._factors) >= self.maxsize:
                self._factors.clear()
            shifted = self.L + (key / 2.0) * np.eye(self.L.shape[0])
            try:
                factor = sla.cho_factor(shifted, lower=True)
            except np.linalg.LinAlgError as err:
                raise np.linalg.LinAlgError(f"shifted Laplacian system is singular for rho={rho}") from err
            self._factors[key] = factor
        return factor

    def __len__(self):
        return len(self._factors)


def prox_graph_laplacian(x, L, rho, cache: LaplacianFactorCache | None = None):
    """Prox of ``y^T L y``: solves ``(L + (rho/2) I) y = (rho/2) x``.

    ``x`` may be a vector or a matrix whose columns are treated independently.
    """
    if rho <= 0:
        raise ValueError("rho must be positive")
    if cache is None:
        cache = LaplacianFactorCache(L)
    x = np.asarray(x, dtype=np.float64)
    return sla.cho_solve(cache.factor(rho), (rho / 2.0) * x, check_finite=False)


def prox_tv(x, lam):
    """Exact 1-D total-variation denoising, ``argmin_y lam * sum_i |y_i - y_{i-1}| + 0.5 ||y - x||^2``.

    A matrix input is denoised column by column.
    """
    if lam < 0:
        raise ValueError("TV strength must be non-negative")
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        return kernels.tv_denoise_rows(x[np.newaxis], lam)[0]
    return kernels.tv_denoise_rows(x.T, lam).T


def prox_unimodal(x, nonneg=False):
    """Least-squares projection onto unimodal (rise-then-fall) vectors.

    Parameters
    ----------
    x : array_like
        Vector, or matrix whose columns are projected independently.
    nonneg : bool
        Also require non-negativity. The isotonic halves are clipped at zero
        before the candidate modes are scored.

    Notes
    -----
    Ties between candidate modes resolve to the smallest index.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        return kernels.unimodal_rows(x[np.newaxis], nonneg)[0]
    return kernels.unimodal_rows(x.T, nonneg).T
