"""Solver configuration and fit reports."""

from __future__ import annotations

import enum
from dataclasses import asdict, dataclass, field

import numpy as np

from ..admm import InnerStopRule
from ..prox import ProxSpec

__all__ = [
    "Algorithm",
    "SolveOptions",
    "FitReport",
    "UnsupportedConstraintError",
    "InitializationError",
    "DivergenceError",
    "MODES",
]

MODES = ("A", "B", "C")


class UnsupportedConstraintError(ValueError):
    """The requested constraint cannot be handled by the chosen algorithm."""


class InitializationError(ValueError):
    pass


class DivergenceError(FloatingPointError):
    """A fit produced a non-finite loss; ``report`` holds the traces up to that point."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class Algorithm(str, enum.Enum):
    AOADMM = "aoadmm"
    ALS = "als"
    FLEXHALS = "flexhals"


def _normalize_mode(mode):
    mode = mode.upper()
    if mode == "D":
        mode = "C"
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; use A, B or C (D is an alias of C)")
    return mode


@dataclass
class SolveOptions:
    """Everything a fit needs besides the data.

    Parameters
    ----------
    rank : int
    algorithm : Algorithm
    constraints : dict
        Mode (``"A"``, ``"B"``, ``"C"``; ``"D"`` is accepted for C) to
        :class:`ProxSpec` or its string form (``"nn"``, ``"tv:0.1"``, ...).
    ridge : dict
        Mode to ridge strength ``gamma`` (penalty ``gamma ||F||^2``).
    max_outer, eps_rel, eps_abs
        Outer stopping: the regularized loss and every relative feasibility
        gap must each be below ``eps_abs`` or have a relative change below
        ``eps_rel``.
    inner : InnerStopRule
        Inner ADMM rule for A and C, and for B unless ``max_inner_b`` is set.
    max_inner_b : int, optional
    rho_b_scale : float
        Multiplier on the automatic ``rho_{B_k}``.
    als_warmstart_iters : int
        ALS iterations used to initialize A, C, P_k and DeltaB before AO-ADMM.
    update_scheme : {"cmf", "cp"}
        How the A and C blocks are updated inside AO-ADMM.
    projection_sweeps : int
        Sweeps of the PARAFAC2 projection per inner B iteration.
    als_cp_sweeps : int
        CP-ALS sweeps on the projected tensor per ALS iteration.
    flex_mu_growth, flex_mu_init, flex_max_mu
        Flexible-coupling penalty schedule: ``mu_0 = flex_mu_init * SSE_k /
        ||B_k - P_k DeltaB||^2`` and multiply by ``flex_mu_growth`` per
        iteration until the coupling gap drops below ``eps_abs`` or
        ``flex_max_mu`` is reached.
    seed : int
    """

    rank: int
    algorithm: Algorithm = Algorithm.AOADMM
    constraints: dict = field(default_factory=dict)
    ridge: dict = field(default_factory=dict)
    max_outer: int = 2000
    eps_rel: float = 1e-8
    eps_abs: float = 1e-7
    inner: InnerStopRule = field(default_factory=InnerStopRule)
    max_inner_b: int | None = None
    rho_b_scale: float = 1.0
    als_warmstart_iters: int = 0
    update_scheme: str = "cmf"
    projection_sweeps: int = 1
    als_cp_sweeps: int = 5
    flex_mu_growth: float = 1.02
    flex_mu_init: float = 0.1
    flex_max_mu: float = 1e12
    seed: int = 0

    def __post_init__(self):
        self.algorithm = Algorithm(self.algorithm)
        if int(self.rank) < 1:
            raise ValueError("rank must be at least 1")
        self.rank = int(self.rank)
        if int(self.max_outer) < 1:
            raise ValueError("max_outer must be at least 1")
        if not (self.eps_rel > 0 and self.eps_abs > 0):
            raise ValueError("tolerances must be positive")
        constraints = {}
        for mode, spec in self.constraints.items():
            spec = ProxSpec.parse(spec) if isinstance(spec, str) else spec
            if not isinstance(spec, ProxSpec):
                raise TypeError(f"constraint for mode {mode} must be a ProxSpec or string")
            constraints[_normalize_mode(mode)] = spec
        self.constraints = constraints
        ridge = {}
        for mode, gamma in self.ridge.items():
            gamma = float(gamma)
            if not (np.isfinite(gamma) and gamma >= 0):
                raise ValueError(f"ridge strength for mode {mode} must be non-negative")
            ridge[_normalize_mode(mode)] = gamma
        self.ridge = ridge
        if self.update_scheme not in ("cmf", "cp"):
            raise ValueError("update_scheme must be 'cmf' or 'cp'")
        if self.rho_b_scale <= 0:
            raise ValueError("rho_b_scale must be positive")
        if self.max_inner_b is not None and int(self.max_inner_b) < 1:
            raise ValueError("max_inner_b must be at least 1")
        if self.als_warmstart_iters < 0 or self.projection_sweeps < 1 or self.als_cp_sweeps < 1:
            raise ValueError("iteration counts must be positive")
        if not self.flex_mu_growth > 1 or not self.flex_mu_init > 0 or not self.flex_max_mu > 0:
            raise ValueError("flexible-coupling schedule needs growth > 1 and positive mu")

    def spec(self, mode) -> ProxSpec:
        return self.constraints.get(_normalize_mode(mode), ProxSpec.none())

    def gamma(self, mode) -> float:
        return self.ridge.get(_normalize_mode(mode), 0.0)

    @property
    def inner_b(self) -> InnerStopRule:
        if self.max_inner_b is None:
            return self.inner
        return InnerStopRule(self.inner.eps, int(self.max_inner_b))

    def to_dict(self) -> dict:
        return {
            "rank": self.rank,
            "algorithm": self.algorithm.value,
            "constraints": {m: str(s) for m, s in sorted(self.constraints.items())},
            "ridge": dict(sorted(self.ridge.items())),
            "max_outer": self.max_outer,
            "eps_rel": self.eps_rel,
            "eps_abs": self.eps_abs,
            "inner": {"eps": self.inner.eps, "max_inner": self.inner.max_inner},
            "max_inner_b": self.max_inner_b,
            "rho_b_scale": self.rho_b_scale,
            "als_warmstart_iters": self.als_warmstart_iters,
            "update_scheme": self.update_scheme,
            "projection_sweeps": self.projection_sweeps,
            "als_cp_sweeps": self.als_cp_sweeps,
            "flex_mu_growth": self.flex_mu_growth,
            "flex_mu_init": self.flex_mu_init,
            "flex_max_mu": self.flex_max_mu,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SolveOptions":
        d = dict(d)
        inner = d.pop("inner", None)
        if inner is not None:
            d["inner"] = InnerStopRule(inner["eps"], inner["max_inner"])
        return cls(**d)


@dataclass
class FitReport:
    """Traces and flags of one fit.

    ``loss`` holds ``f + g`` and ``sse`` holds ``f`` for the initial point
    and after each outer iteration, so every trace has ``iterations + 1``
    entries. ``coupling`` holds the final ``P_k`` and ``DeltaB`` (not
    serialized). ``gaps`` maps a split name (``"A"``, ``"B_Z"``, ``"B_Y"``,
    ``"C"``, or ``"coupling"`` for flexible coupling) to its trace of relative
    feasibility gaps.
    """

    algorithm: str
    seed: int
    loss: list = field(default_factory=list)
    sse: list = field(default_factory=list)
    gaps: dict = field(default_factory=dict)
    converged: bool = False
    feasible: bool = True
    iterations: int = 0
    wall_ms: int = 0
    inner_iterations: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)
    coupling: object = field(default=None, repr=False)

    @property
    def final_loss(self) -> float:
        return self.loss[-1]

    @property
    def final_gaps(self) -> dict:
        return {name: trace[-1] for name, trace in self.gaps.items()}

    def to_dict(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if k != "coupling"}
        d["final_loss"] = self.final_loss if self.loss else None
        d["final_gaps"] = self.final_gaps
        return d
