"""Solvers for capacitated clustering with fair-range constraints on the chosen centers."""

from .assignment import optimal_assignment
from .instance import (InfeasibleError, Instance, Solution, WorkCapExceeded, check_feasibility,
                       evaluate_cost, greedy_feasible, load_instance, dump_instance, validate_instance)
from .metric import MetricSpace, aspect_ratio, close_graph, from_matrix, tree_metric, verify_metric

__version__ = "0.1.0"
