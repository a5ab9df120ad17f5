"""Centralized numeric tolerances shared across the package."""
from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class NumericPolicy:
    """Tolerance bundle; every module reads from one of these.

    geometry_tol   residual target for projections and resolvents
    property_tol   slack for inequality-style property checks
    boundary_tol   default window for boundary detection (inward normals)
    prob_tol       allowed drift of branch-probability sums from 1
    dykstra_max_iter  total half-space projections allowed per batch row
    hausdorff_dirs    default direction count for support-based Hausdorff
    """

    geometry_tol: float = 1e-12
    property_tol: float = 1e-10
    boundary_tol: float = 1e-9
    prob_tol: float = 1e-15
    dykstra_max_iter: int = 100_000
    hausdorff_dirs: int = 64


DEFAULT_POLICY = NumericPolicy()
