"""Ragged third-order tensors, PARAFAC2 factorizations and shared dense kernels."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg as sla

__all__ = [
    "DimensionError",
    "NotPositiveDefiniteError",
    "RaggedTensor",
    "Parafac2Model",
    "CouplingVariables",
    "CholeskySolver",
    "reconstruct",
    "relative_sse",
    "sse",
    "khatri_rao",
    "cholesky_solve_normal",
    "BatchedCholesky",
]


class DimensionError(ValueError):
    """Raised when array shapes are mutually inconsistent."""


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    """Raised when a normal-equation matrix is not (numerically) positive definite."""


def _frozen(array, name):
    array = np.array(array, dtype=np.float64, copy=True)
    if array.ndim != 2:
        raise DimensionError(f"{name} must be a matrix, got shape {array.shape}")
    if not np.all(np.isfinite(array)):
        raise ValueError(f"{name} contains non-finite values")
    array.setflags(write=False)
    return array


class RaggedTensor:
    """Stack of K frontal slices sharing the row count I but with varying column counts J_k.

    Parameters
    ----------
    slices : sequence of array_like
        The frontal slices. Slice ``k`` must have shape ``(I, J_k)``.

    Notes
    -----
    The slices are copied to float64 and made read-only, so one tensor can be
    shared between concurrent fits.
    """

    def __init__(self, slices: Sequence[np.ndarray]):
        slices = [_frozen(X, f"slice {k}") for k, X in enumerate(slices)]
        if len(slices) == 0:
            raise DimensionError("a ragged tensor needs at least one slice")
        I = slices[0].shape[0]
        for k, X in enumerate(slices):
            if X.shape[0] != I:
                raise DimensionError(f"slice {k} has {X.shape[0]} rows, expected {I}")
            if X.shape[0] < 1 or X.shape[1] < 1:
                raise DimensionError(f"slice {k} is empty")
        self._slices = tuple(slices)

    @property
    def slices(self) -> tuple:
        return self._slices

    @property
    def I(self) -> int:
        return self._slices[0].shape[0]

    @property
    def J(self) -> list:
        return [X.shape[1] for X in self._slices]

    @property
    def K(self) -> int:
        return len(self._slices)

    def __len__(self):
        return self.K

    def __getitem__(self, k):
        return self._slices[k]

    def __iter__(self):
        return iter(self._slices)

    def norm(self) -> float:
        """Frobenius norm over all slices."""
        return float(np.sqrt(sum(np.sum(X**2) for X in self._slices)))

    def __repr__(self):
        if len(set(self.J)) == 1:
            size = f"{self.I}x{self.J[0]}x{self.K}"
        else:
            size = f"{self.I}x[{min(self.J)}..{max(self.J)}]x{self.K}"
        return f"RaggedTensor({size})"


@dataclass(frozen=True, eq=False)
class Parafac2Model:
    """PARAFAC2 factorization ``X_k ~ A diag(C[k]) B_k^T``.

    Attributes
    ----------
    A : ndarray, shape (I, R)
    B : tuple of ndarray, shapes (J_k, R)
    C : ndarray, shape (K, R)
        Row ``k`` holds the diagonal of ``D_k``.
    """

    A: np.ndarray
    B: tuple
    C: np.ndarray

    def __init__(self, A, B, C):
        A = np.array(A, dtype=np.float64)
        C = np.array(C, dtype=np.float64)
        B = tuple(np.array(Bk, dtype=np.float64) for Bk in B)
        if A.ndim != 2 or C.ndim != 2:
            raise DimensionError("A and C must be matrices")
        R = A.shape[1]
        if R < 1:
            raise DimensionError("rank must be at least one")
        if C.shape != (len(B), R):
            raise DimensionError(f"C has shape {C.shape}, expected {(len(B), R)}")
        for k, Bk in enumerate(B):
            if Bk.ndim != 2 or Bk.shape[1] != R:
                raise DimensionError(f"B[{k}] has shape {Bk.shape}, expected (J_k, {R})")
        for name, array in [("A", A), ("C", C), *((f"B[{k}]", Bk) for k, Bk in enumerate(B))]:
            if not np.all(np.isfinite(array)):
                raise ValueError(f"{name} contains non-finite values")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)

    @property
    def rank(self) -> int:
        return self.A.shape[1]

    @property
    def shape(self):
        return self.A.shape[0], [Bk.shape[0] for Bk in self.B], len(self.B)

    def D(self, k: int) -> np.ndarray:
        """The diagonal matrix ``D_k`` expanded from row ``k`` of C."""
        return np.diag(self.C[k])

    def check_compatible(self, data: RaggedTensor):
        I, J, K = self.shape
        if I != data.I or K != data.K or J != data.J:
            raise DimensionError(
                f"model with I={I}, K={K} is incompatible with {data!r}"
            )

    def copy(self) -> "Parafac2Model":
        return Parafac2Model(self.A.copy(), [Bk.copy() for Bk in self.B], self.C.copy())


@dataclass
class CouplingVariables:
    """Orthonormal bases ``P_k`` and coordinate matrix ``DeltaB`` with ``Y_k = P_k DeltaB``."""

    P: list
    DeltaB: np.ndarray

    def Y(self) -> list:
        return [Pk @ self.DeltaB for Pk in self.P]

    def copy(self) -> "CouplingVariables":
        return CouplingVariables([Pk.copy() for Pk in self.P], self.DeltaB.copy())

    def orthonormality_error(self) -> float:
        R = self.DeltaB.shape[0]
        return max(np.linalg.norm(Pk.T @ Pk - np.eye(R)) for Pk in self.P)


def reconstruct(model: Parafac2Model) -> RaggedTensor:
    """Dense slices ``A diag(c_k) B_k^T`` of a PARAFAC2 model."""
    A, C = model.A, model.C
    return RaggedTensor([(A * C[k]) @ Bk.T for k, Bk in enumerate(model.B)])


def sse(model: Parafac2Model, data: RaggedTensor) -> float:
    """Sum of squared errors between ``data`` and the model."""
    model.check_compatible(data)
    A, C = model.A, model.C
    return float(sum(np.sum((Xk - (A * C[k]) @ Bk.T) ** 2) for k, (Xk, Bk) in enumerate(zip(data, model.B))))


def relative_sse(model: Parafac2Model, data: RaggedTensor) -> float:
    """Relative sum of squared errors, ``sum_k ||X_k - A D_k B_k^T||^2 / sum_k ||X_k||^2``."""
    model.check_compatible(data)
    denominator = data.norm() ** 2
    if denominator == 0:
        raise ZeroDivisionError("relative SSE is undefined for an all-zero tensor")
    return sse(model, data) / denominator


def khatri_rao(U: np.ndarray, V: np.ndarray) -> np.ndarray:
    """Column-wise Kronecker product; column r is ``kron(U[:, r], V[:, r])``."""
    U = np.asarray(U)
    V = np.asarray(V)
    if U.ndim != 2 or V.ndim != 2 or U.shape[1] != V.shape[1]:
        raise DimensionError(f"incompatible shapes {U.shape} and {V.shape} for the Khatri-Rao product")
    n, R = U.shape
    return (U[:, np.newaxis, :] * V[np.newaxis, :, :]).reshape(n * V.shape[0], R)


class CholeskySolver:
    """Cached Cholesky factorization of an SPD matrix for repeated right-solves.

    ``solve(RHS)`` returns ``RHS @ inv(G)``, so one factorization serves all
    inner iterations of an ADMM block.

    Raises
    ------
    NotPositiveDefiniteError
        If the factorization fails or a pivot is below ``1e-13 * trace(G) / R``.
    """

    pivot_tol = 1e-13

    def __init__(self, G: np.ndarray):
        G = np.asarray(G, dtype=np.float64)
        if G.ndim != 2 or G.shape[0] != G.shape[1]:
            raise DimensionError(f"expected a square matrix, got shape {G.shape}")
        R = G.shape[0]
        if not np.allclose(G, G.T, rtol=1e-10, atol=1e-12 * max(1.0, np.abs(G).max(initial=0))):
            raise NotPositiveDefiniteError("matrix is not symmetric")
        try:
            self._factor = sla.cho_factor(G, lower=True, check_finite=True)
        except np.linalg.LinAlgError as err:
            raise NotPositiveDefiniteError(str(err)) from err
        pivots = np.diag(self._factor[0]) ** 2
        threshold = self.pivot_tol * np.trace(G) / R
        if not np.trace(G) > 0 or pivots.min() < threshold:
            raise NotPositiveDefiniteError(
                f"smallest pivot {pivots.min():.3e} below threshold {threshold:.3e}"
            )
        self.shape = G.shape

    def solve(self, RHS: np.ndarray) -> np.ndarray:
        RHS = np.asarray(RHS, dtype=np.float64)
        if RHS.shape[-1] != self.shape[0]:
            raise DimensionError(f"right-hand side has {RHS.shape[-1]} columns, expected {self.shape[0]}")
        if RHS.ndim == 1:
            return sla.cho_solve(self._factor, RHS, check_finite=False)
        return sla.cho_solve(self._factor, RHS.T, check_finite=False).T


def cholesky_solve_normal(G: np.ndarray, RHS: np.ndarray) -> np.ndarray:
    """Solve ``X G = RHS`` for symmetric positive definite ``G``."""
    return CholeskySolver(G).solve(RHS)


class BatchedCholesky:
    """Cholesky factors of a stack of SPD matrices ``G[i]`` with cached inverses.

    ``solve(RHS)`` returns ``RHS[i] @ inv(G[i])`` for each ``i``; ``RHS`` may be
    a stack of matrices ``(n, m, R)`` or of row vectors ``(n, R)``. The same
    pivot rule as :class:`CholeskySolver` applies to every matrix.
    """

    pivot_tol = CholeskySolver.pivot_tol

    def __init__(self, G: np.ndarray):
        G = np.asarray(G, dtype=np.float64)
        if G.ndim != 3 or G.shape[1] != G.shape[2]:
            raise DimensionError(f"expected a stack of square matrices, got shape {G.shape}")
        R = G.shape[1]
        try:
            L = np.linalg.cholesky(G)
        except np.linalg.LinAlgError as err:
            raise NotPositiveDefiniteError(str(err)) from err
        pivots = np.diagonal(L, axis1=1, axis2=2) ** 2
        traces = np.trace(G, axis1=1, axis2=2)
        bad = ~(pivots.min(axis=1) >= self.pivot_tol * traces / R) | ~(traces > 0)
        if np.any(bad):
            i = int(np.flatnonzero(bad)[0])
            raise NotPositiveDefiniteError(f"matrix {i} of the stack has a pivot below {self.pivot_tol:g} * trace / R")
        eye = np.broadcast_to(np.eye(R), G.shape)
        Linv = np.linalg.solve(L, eye)
        self._inverse = np.swapaxes(Linv, 1, 2) @ Linv
        self.shape = G.shape

    @property
    def inverse(self) -> np.ndarray:
        return self._inverse

    def solve(self, RHS: np.ndarray) -> np.ndarray:
        RHS = np.asarray(RHS, dtype=np.float64)
        if RHS.shape[0] != self.shape[0] or RHS.shape[-1] != self.shape[1]:
            raise DimensionError(f"right-hand side of shape {RHS.shape} does not match stack {self.shape}")
        if RHS.ndim == 2:
            return np.einsum("nr,nrs->ns", RHS, self._inverse)
        return RHS @ self._inverse
