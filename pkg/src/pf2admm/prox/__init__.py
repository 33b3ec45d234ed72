"""Proximal operators, regularizer specifications and the PARAFAC2 projection."""

from ._backend import BACKEND
from .operators import (
    LaplacianFactorCache,
    chain_laplacian,
    prox_graph_laplacian,
    prox_nonneg,
    prox_ridge,
    prox_tv,
    prox_unimodal,
)
from .projection import ProjectionInfo, project_parafac2, projection_objective
from .spec import ProxKind, ProxSpec

__all__ = [
    "BACKEND",
    "LaplacianFactorCache",
    "chain_laplacian",
    "prox_graph_laplacian",
    "prox_nonneg",
    "prox_ridge",
    "prox_tv",
    "prox_unimodal",
    "ProjectionInfo",
    "project_parafac2",
    "projection_objective",
    "ProxKind",
    "ProxSpec",
]
