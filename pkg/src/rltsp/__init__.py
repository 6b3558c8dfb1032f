"""Online actor-critic search for Euclidean TSP tours, with exact and heuristic oracles."""

__version__ = "0.1.0"

from .estimator import TourSolver
from .policy import TransitionMatrix
from .solver import SolverConfig, SolveResult, solve, solve_with_nn_seed, sweep, timing_report
from .tsp_core import (
    TspInstance,
    held_karp,
    load_instance,
    nearest_neighbor,
    random_instance,
    tour_length,
    two_opt,
)

__all__ = [
    "SolveResult",
    "SolverConfig",
    "TourSolver",
    "TransitionMatrix",
    "TspInstance",
    "held_karp",
    "load_instance",
    "nearest_neighbor",
    "random_instance",
    "solve",
    "solve_with_nn_seed",
    "sweep",
    "timing_report",
    "tour_length",
    "two_opt",
]
