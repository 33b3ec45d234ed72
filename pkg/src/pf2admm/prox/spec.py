"""Per-mode regularization specifications."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .operators import (
    LaplacianFactorCache,
    chain_laplacian,
    prox_graph_laplacian,
    prox_nonneg,
    prox_ridge,
    prox_tv,
    prox_unimodal,
)

__all__ = ["ProxKind", "ProxSpec"]


class ProxKind(str, enum.Enum):
    NONE = "none"
    NONNEG = "nn"
    RIDGE = "ridge"
    LAPLACIAN = "laplacian"
    TV = "tv"
    UNIMODAL = "unimodal"
    UNIMODAL_NN = "unimodal_nn"


_ALIASES = {
    "none": ProxKind.NONE,
    "nn": ProxKind.NONNEG,
    "nonneg": ProxKind.NONNEG,
    "ridge": ProxKind.RIDGE,
    "laplacian": ProxKind.LAPLACIAN,
    "lap": ProxKind.LAPLACIAN,
    "tv": ProxKind.TV,
    "unimodal": ProxKind.UNIMODAL,
    "unimodal_nn": ProxKind.UNIMODAL_NN,
    "unimodal+nn": ProxKind.UNIMODAL_NN,
}

_CONVEX = {ProxKind.NONE, ProxKind.NONNEG, ProxKind.RIDGE, ProxKind.LAPLACIAN, ProxKind.TV}


@dataclass(frozen=True)
class ProxSpec:
    """A regularizer ``g`` applied column-wise to one factor block.

    Parameters
    ----------
    kind : ProxKind
    strength : float
        ``gamma`` for ridge, the multiplier of ``L`` for the Laplacian penalty
        ``strength * tr(Y^T L Y)``, and ``lambda`` for TV. Ignored otherwise.
    L : ndarray, optional
        Graph Laplacian. When omitted for the Laplacian kind, the path-graph
        Laplacian matching the column length is used, which also covers
        ragged ``B_k``.
    """

    kind: ProxKind = ProxKind.NONE
    strength: float = 0.0
    L: np.ndarray | None = field(default=None, repr=False, compare=False)
    _caches: dict = field(default_factory=dict, repr=False, compare=False, init=False)

    def __post_init__(self):
        object.__setattr__(self, "kind", ProxKind(self.kind))
        if not np.isfinite(self.strength) or self.strength < 0:
            raise ValueError(f"strength must be finite and non-negative, got {self.strength}")
        if self.L is not None:
            L = np.asarray(self.L, dtype=np.float64)
            if L.ndim != 2 or L.shape[0] != L.shape[1]:
                raise ValueError("L must be square")
            if not np.allclose(L, L.T, atol=1e-12):
                raise ValueError("L must be symmetric")
            if not np.allclose(L.sum(axis=1), 0.0, atol=1e-10 * max(1.0, np.abs(L).max())):
                raise ValueError("L must have zero row sums")
            if np.linalg.eigvalsh(L).min() < -1e-10 * max(1.0, np.abs(L).max()):
                raise ValueError("L must be positive semidefinite")
            object.__setattr__(self, "L", L)

    # constructors -----------------------------------------------------------
    @classmethod
    def none(cls):
        return cls(ProxKind.NONE)

    @classmethod
    def nonneg(cls):
        return cls(ProxKind.NONNEG)

    @classmethod
    def ridge(cls, gamma):
        return cls(ProxKind.RIDGE, float(gamma))

    @classmethod
    def laplacian(cls, strength, L=None):
        return cls(ProxKind.LAPLACIAN, float(strength), L)

    @classmethod
    def tv(cls, strength):
        return cls(ProxKind.TV, float(strength))

    @classmethod
    def unimodal(cls, nonneg=False):
        return cls(ProxKind.UNIMODAL_NN if nonneg else ProxKind.UNIMODAL)

    @classmethod
    def parse(cls, text: str) -> "ProxSpec":
        """Parse ``KIND[:param]``, e.g. ``nn``, ``tv:0.1``, ``laplacian:10``, ``unimodal_nn``."""
        name, _, param = text.strip().partition(":")
        try:
            kind = _ALIASES[name.strip().lower()]
        except KeyError:
            raise ValueError(f"unknown constraint kind {name!r}; choose from {sorted(set(_ALIASES))}") from None
        needs_param = kind in (ProxKind.RIDGE, ProxKind.LAPLACIAN, ProxKind.TV)
        if needs_param and not param:
            raise ValueError(f"constraint {kind.value!r} needs a strength, e.g. {kind.value}:0.1")
        if param and not needs_param:
            raise ValueError(f"constraint {kind.value!r} takes no parameter")
        strength = float(param) if param else 0.0
        return cls(kind, strength)

    def __str__(self):
        if self.kind in (ProxKind.RIDGE, ProxKind.LAPLACIAN, ProxKind.TV):
            return f"{self.kind.value}:{self.strength:g}"
        return self.kind.value

    # properties -------------------------------------------------------------
    @property
    def is_none(self) -> bool:
        return self.kind is ProxKind.NONE

    @property
    def is_convex(self) -> bool:
        return self.kind in _CONVEX

    @property
    def is_nonneg_only(self) -> bool:
        return self.kind is ProxKind.NONNEG

    # evaluation -------------------------------------------------------------
    def _laplacian_cache(self, n):
        cache = self._caches.get(n)
        if cache is None:
            if self.L is not None:
                if self.L.shape[0] != n:
                    raise ValueError(f"Laplacian is {self.L.shape[0]}x{self.L.shape[0]}, columns have length {n}")
                L = self.L
            else:
                L = chain_laplacian(n)
            cache = LaplacianFactorCache(self.strength * L)
            self._caches[n] = cache
        return cache

    def prox(self, M, rho):
        """``argmin_Y g(Y) + (rho/2) ||Y - M||^2`` with ``g`` acting on the columns of ``M``."""
        M = np.asarray(M, dtype=np.float64)
        kind = self.kind
        if kind is ProxKind.NONE:
            return M.copy()
        if kind is ProxKind.NONNEG:
            return prox_nonneg(M)
        if kind is ProxKind.RIDGE:
            return prox_ridge(M, rho, self.strength)
        if kind is ProxKind.LAPLACIAN:
            cache = self._laplacian_cache(M.shape[0])
            return prox_graph_laplacian(M, cache.L, rho, cache=cache)
        if kind is ProxKind.TV:
            return prox_tv(M, self.strength / rho)
        return prox_unimodal(M, nonneg=kind is ProxKind.UNIMODAL_NN)

    def penalty(self, M) -> float:
        """Value of ``g(M)``. Indicator penalties return 0 on feasible input and ``inf`` otherwise."""
        M = np.asarray(M, dtype=np.float64)
        kind = self.kind
        if kind is ProxKind.NONE:
            return 0.0
        if kind is ProxKind.NONNEG:
            return 0.0 if M.min(initial=0.0) >= 0 else np.inf
        if kind is ProxKind.RIDGE:
            return self.strength * float(np.sum(M**2))
        if kind is ProxKind.LAPLACIAN:
            L = self._laplacian_cache(M.shape[0]).L
            return float(np.sum(M * (L @ M)))
        if kind is ProxKind.TV:
            return self.strength * float(np.abs(np.diff(M, axis=0)).sum())
        projected = prox_unimodal(M, nonneg=kind is ProxKind.UNIMODAL_NN)
        return 0.0 if np.allclose(projected, M, rtol=0, atol=1e-12 * max(1.0, np.abs(M).max(initial=0))) else np.inf
