"""Outer fitting algorithms: AO-ADMM, ALS and flexible coupling with HALS."""

from .als import fit_als
from .aoadmm import fit_aoadmm
from .flexhals import fit_flex_hals
from .init import initialize
from .multi import AllFitsFailedError, MultiFitResult, fit, multi_init_fit, select_best
from .options import (
    Algorithm,
    DivergenceError,
    FitReport,
    InitializationError,
    SolveOptions,
    UnsupportedConstraintError,
)

__all__ = [
    "fit_als",
    "fit_aoadmm",
    "fit_flex_hals",
    "initialize",
    "fit",
    "multi_init_fit",
    "select_best",
    "MultiFitResult",
    "AllFitsFailedError",
    "Algorithm",
    "DivergenceError",
    "FitReport",
    "InitializationError",
    "SolveOptions",
    "UnsupportedConstraintError",
]
