"""Constrained PARAFAC2 fitted by alternating optimization with ADMM inner solvers."""

from . import metrics, simgen
from .admm import InnerStopRule
from .io import load_model, load_tensor, save_model, save_tensor
from .prox import BACKEND, ProxSpec, project_parafac2
from .solvers import (
    Algorithm,
    DivergenceError,
    FitReport,
    SolveOptions,
    UnsupportedConstraintError,
    fit,
    fit_als,
    fit_aoadmm,
    fit_flex_hals,
    multi_init_fit,
)
from .tensor import CouplingVariables, Parafac2Model, RaggedTensor, reconstruct, relative_sse, sse

__version__ = "0.1.0"

__all__ = [
    "metrics",
    "simgen",
    "InnerStopRule",
    "load_model",
    "load_tensor",
    "save_model",
    "save_tensor",
    "BACKEND",
    "ProxSpec",
    "project_parafac2",
    "Algorithm",
    "DivergenceError",
    "FitReport",
    "SolveOptions",
    "UnsupportedConstraintError",
    "fit",
    "fit_als",
    "fit_aoadmm",
    "fit_flex_hals",
    "multi_init_fit",
    "CouplingVariables",
    "Parafac2Model",
    "RaggedTensor",
    "reconstruct",
    "relative_sse",
    "sse",
]
