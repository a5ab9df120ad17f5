"""Constrained backward stochastic dynamics in moving convex domains:
penalization and projection solvers with scenario engines and structural
diagnostics."""

from .policy import DEFAULT_POLICY, NumericPolicy
from .geometry import (
    Ball,
    Box,
    Polytope,
    boundary_margin,
    contains,
    distance,
    hausdorff,
    inward_normal,
    penalty_resolvent,
    project,
    support,
)
from .domains import (
    AdaptedBall,
    DomainPath,
    MovingBall,
    MovingPolytope,
    StaticDomain,
    discretization_gap,
    discretize,
    verify_h4,
)
from .noise import (
    MonteCarloScenarios,
    NoiseModel,
    TreeScenarios,
    build_tree,
    sample_paths,
)
from .solvers import (
    BsdeProblem,
    SolutionBundle,
    solve_penalized,
    solve_piecewise_constant,
    solve_reflected_discrete,
)
from .diagnostics import (
    apriori_aggregate,
    convergence_report,
    ito_tanaka_residual,
    max_domain_violation,
    skorokhod_residual,
    stability_gap,
    total_variation,
)
from .presets import Instance, get_preset, list_presets, make_driver, make_terminal
from .config import ConfigError, ExperimentConfig, load_config, parse_config
from .runner import run_experiment

__all__ = [
    "DEFAULT_POLICY",
    "NumericPolicy",
    "Ball",
    "Box",
    "Polytope",
    "boundary_margin",
    "contains",
    "distance",
    "hausdorff",
    "inward_normal",
    "penalty_resolvent",
    "project",
    "support",
    "AdaptedBall",
    "DomainPath",
    "MovingBall",
    "MovingPolytope",
    "StaticDomain",
    "discretization_gap",
    "discretize",
    "verify_h4",
    "MonteCarloScenarios",
    "NoiseModel",
    "TreeScenarios",
    "build_tree",
    "sample_paths",
    "BsdeProblem",
    "SolutionBundle",
    "solve_penalized",
    "solve_piecewise_constant",
    "solve_reflected_discrete",
    "apriori_aggregate",
    "convergence_report",
    "ito_tanaka_residual",
    "max_domain_violation",
    "skorokhod_residual",
    "stability_gap",
    "total_variation",
    "Instance",
    "get_preset",
    "list_presets",
    "make_driver",
    "make_terminal",
    "ConfigError",
    "ExperimentConfig",
    "load_config",
    "parse_config",
    "run_experiment",
]
