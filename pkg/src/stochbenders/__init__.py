"""Benders decomposition for stochastic linear programs on scenario trees."""
from .detequiv import aggregate_stages, build_deterministic_equivalent
from .lpcore import DEFAULT_TOL, LinearProgram, SimplexSolution, Status, Tolerances, dual_of, solve_lp
from .lshaped import CutPool, FeasibilityCut, OptimalityCut, run_lshaped
from .nested import Protocol, global_termination, legal_moves, run_nested
from .result import SolveLimit, SolveResult
from .scenario import NodeProblem, ScenarioTree, TreeSpec, discretize_normal, generate_random_tree, validate
from .trace import SolveTrace

__all__ = [
    "DEFAULT_TOL",
    "CutPool",
    "FeasibilityCut",
    "LinearProgram",
    "NodeProblem",
    "OptimalityCut",
    "Protocol",
    "ScenarioTree",
    "SimplexSolution",
    "SolveLimit",
    "SolveResult",
    "SolveTrace",
    "Status",
    "Tolerances",
    "TreeSpec",
    "aggregate_stages",
    "build_deterministic_equivalent",
    "discretize_normal",
    "dual_of",
    "generate_random_tree",
    "global_termination",
    "legal_moves",
    "run_lshaped",
    "run_nested",
    "solve_lp",
    "validate",
]
