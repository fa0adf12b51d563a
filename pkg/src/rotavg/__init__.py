"""Rotation averaging on SO(3): primal-dual solver, cycle closed forms, certificates."""

from .cycle import (
    CycleProblem,
    CycleSolution,
    closed_form_spectrum,
    cycle_error,
    solve_cycle,
    stationary_point,
)
from .graph import MeasurementGraph, PairwiseMatrix, build_pairwise_matrix
from .solver import SolveReport, SolverConfig, certify, certify_solution, cost, solve

__version__ = "0.1.0"

__all__ = [
    "CycleProblem",
    "CycleSolution",
    "MeasurementGraph",
    "PairwiseMatrix",
    "SolveReport",
    "SolverConfig",
    "build_pairwise_matrix",
    "certify",
    "certify_solution",
    "closed_form_spectrum",
    "cost",
    "cycle_error",
    "solve",
    "solve_cycle",
    "stationary_point",
]
