"""Budgeted intervention allocation under interference with privilege bounds."""

from .analysis import (
    GroupAllocationSummary,
    SolutionPath,
    brute_force,
    group_allocation_summary,
    solution_path,
    tau_grid,
    tau_range,
)
from .bnb import Solution, SolverConfig, Status, branch_and_bound, solve, solve_lp
from .estimation import FitDataset, FitResult, RankDeficiencyError, fit_max_interference
from .graph import InterferenceGraph, build_knn_graph, neighbor_pattern
from .milp import MilpProgram, decode, encode, enumerate_patterns
from .model import (
    AllocationProblem,
    GroupDomain,
    LinearInterferenceModel,
    MaxInterferenceModel,
    PolicyReport,
    SEMParams,
    StructuralOutcomeModel,
    TabularModel,
    Unit,
    evaluate_policy,
    expected_outcome,
    privilege_gap,
)
from .simplex import SimplexError, bounded_simplex
from .synth import SyntheticInstance, generate_synthetic

__version__ = "0.1.0"
