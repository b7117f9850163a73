"""Joint consensus modeling of integer scores and top-R partial rankings."""

from .fitting import (
    PrefixConstraint,
    default_theta_max,
    fit_given_order,
    fit_p_constrained,
    fit_theta,
    objective,
)
from .kemeny_lp import PairLP, SimplexError, build_pair_lp, lp_bound, solve_dense_lp
from .model import (
    Dataset,
    Parameters,
    SufficientStats,
    compute_stats,
    log_density,
    log_psi,
    moments,
    order_of,
    psi,
    sample,
)
from .search import FitResult, astar, brute_force, fv, greedy, greedy_local

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "FitResult",
    "PairLP",
    "Parameters",
    "PrefixConstraint",
    "SimplexError",
    "SufficientStats",
    "astar",
    "brute_force",
    "build_pair_lp",
    "compute_stats",
    "default_theta_max",
    "fit_given_order",
    "fit_p_constrained",
    "fit_theta",
    "fv",
    "greedy",
    "greedy_local",
    "log_density",
    "log_psi",
    "lp_bound",
    "moments",
    "objective",
    "order_of",
    "psi",
    "sample",
    "solve_dense_lp",
]
