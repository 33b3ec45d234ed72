"""Independent reference solutions used to check the library's fast paths.

These deliberately avoid the library's algorithms: TV goes through its
bounded dual solved by scipy's BVLS, unimodal regression through an explicit
increment parametrization, also solved by BVLS.
"""

import itertools

import numpy as np
from scipy.optimize import lsq_linear


def tv_dual(x, lam):
    """``argmin_y lam TV(y) + 0.5 ||y - x||^2`` via ``min_{|z| <= lam} 0.5 ||x - D^T z||^2``, ``y = x - D^T z``."""
    x = np.asarray(x, dtype=float)
    n = x.size
    if n < 2 or lam == 0:
        return x.copy()
    D = np.diff(np.eye(n), axis=0)  # (n-1) x n forward differences
    res = lsq_linear(D.T, x, bounds=(-lam, lam), method="bvls", tol=1e-15, lsmr_tol=None)
    return x - D.T @ res.x


def tv_subgradient_gap(y, x, lam, tol=1e-9):
    """Largest violation of ``0 in y - x + lam * D^T s`` with ``s_i in sign(y_{i+1} - y_i)`` intervals.

    The dual vector is recovered by cumulative sums: ``z = cumsum(x - y)`` over the first n-1 entries.
    """
    r = np.asarray(x, dtype=float) - y
    z = np.cumsum(r)[:-1]
    gap = abs(float(np.sum(r)))  # total mass must vanish
    d = np.diff(y)
    for zi, di in zip(z, d):
        # z_i = -lam s_i for the forward-difference convention used here
        if abs(di) > tol:
            gap = max(gap, abs(zi + lam * np.sign(di)))
        else:
            gap = max(gap, abs(zi) - lam)
    return gap


def _unimodal_basis(n, m):
    """Columns map ``(t, s_1, ..., s_{n-1})`` to a vector rising by ``s`` up to index m and falling after."""
    T = np.zeros((n, n))
    T[:, 0] = 1.0
    for i in range(1, n):
        sign = 1.0 if i <= m else -1.0
        T[i:, i] = sign
    return T


def unimodal_exact(x, nonneg=False, tie_tol=1e-12):
    """Exact projection onto unimodal vectors by trying every peak index.

    For a fixed peak the set is a cone of order constraints; its projection is
    an increment-parametrized bounded least-squares problem. With ``nonneg``
    the per-peak projection is clipped at zero, which is exact for order
    constraints with a constant lower bound. The smallest peak index within
    ``tie_tol`` of the best error wins.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    best = None
    for m in range(n):
        T = _unimodal_basis(n, m)
        lb = np.full(n, 0.0)
        lb[0] = -np.inf
        if n == 1:
            y = x.copy()
        else:
            with np.errstate(divide="ignore", invalid="ignore"):  # BVLS step-length ratios on dependent columns
                sol = lsq_linear(T, x, bounds=(lb, np.inf), method="bvls", tol=1e-15, lsmr_tol=None)
            y = T @ sol.x
        if nonneg:
            y = np.maximum(y, 0.0)
        err = float(np.sum((y - x) ** 2))
        if best is None or err < best[0] - tie_tol:
            best = (err, y)
    return best[1]


def is_unimodal(y, tol=1e-12):
    d = np.diff(y)
    seen_fall = False
    for di in d:
        if di < -tol:
            seen_fall = True
        elif di > tol and seen_fall:
            return False
    return True


def small_integer_vectors(values=(-1, 0, 1, 2), max_len=6):
    for n in range(1, max_len + 1):
        for v in itertools.product(values, repeat=n):
            yield np.array(v, dtype=float)


def fms_exhaustive(truth, est):
    """FMS by trying every injective assignment between the smaller and larger component sets."""
    def unit(M):
        return M / np.linalg.norm(M, axis=0)

    S = np.ones((truth.rank, est.rank))
    for T, E in (
        (truth.A, est.A),
        (np.concatenate(truth.B), np.concatenate(est.B)),
        (truth.C, est.C),
    ):
        S *= unit(T).T @ unit(E)
    S = np.abs(S)
    R, Rh = S.shape
    best = -np.inf
    if R <= Rh:
        for cols in itertools.permutations(range(Rh), R):
            best = max(best, np.mean([S[r, c] for r, c in enumerate(cols)]))
    else:
        for rows in itertools.permutations(range(R), Rh):
            best = max(best, np.mean([S[r, c] for c, r in enumerate(rows)]))
    return best
