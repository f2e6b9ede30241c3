"""Tabular batch value-function RL.

Exact MDP primitives, i.i.d. batch data, finite function classes, FQI and the
two minimax Bellman-residual algorithms, closed-form bound diagnostics, and the
counterexample / low-rank constructions.
"""
from .classes import LinearQClass, QClass, WClass, indicator_w_class, span_max_abs
from .data import BatchDataset, DataDistribution, Population, generate_batch
from .diagnostics import BoundReport, bound_report
from .mdp import DeterministicPolicy, TabularMdp, compute_occupancy, optimal_q
from .solvers import SolverResult, certainty_equivalence, fqi, mabo, msbo

__version__ = "0.1.0"

__all__ = [
    "BatchDataset",
    "BoundReport",
    "DataDistribution",
    "DeterministicPolicy",
    "LinearQClass",
    "Population",
    "QClass",
    "SolverResult",
    "TabularMdp",
    "WClass",
    "bound_report",
    "certainty_equivalence",
    "compute_occupancy",
    "fqi",
    "generate_batch",
    "indicator_w_class",
    "mabo",
    "msbo",
    "optimal_q",
    "span_max_abs",
]
