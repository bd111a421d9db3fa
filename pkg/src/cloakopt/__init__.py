"""Optimal design of 2D elastostatic cloaks via adjoint-based optimization."""

from .element import RegularizationParams
from .material import BaseMaterial, DesignPoint, InhomMaterial
from .mesh import BoundaryTag, GeometryKind, GeometrySpec, Mesh, Region, build
from .metrics import design_metric, efficacy_table, g_hat, g_hat_multi
from .scenarios import LoadCase, Scenario, make_load, make_scenario
from .solver import RunResult, SolverConfig, newton_continuation, solve_nocloak, solve_virtual

__version__ = "0.1.0"

__all__ = [
    "BaseMaterial",
    "BoundaryTag",
    "DesignPoint",
    "GeometryKind",
    "GeometrySpec",
    "InhomMaterial",
    "LoadCase",
    "Mesh",
    "Region",
    "RegularizationParams",
    "RunResult",
    "Scenario",
    "SolverConfig",
    "build",
    "design_metric",
    "efficacy_table",
    "g_hat",
    "g_hat_multi",
    "make_load",
    "make_scenario",
    "newton_continuation",
    "solve_nocloak",
    "solve_virtual",
]
