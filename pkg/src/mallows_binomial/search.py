"""Consensus-order search: exact A* over the prefix tree, a brute-force
oracle, and the FV / Greedy / Greedy-Local approximations.

Every algorithm returns the exact conditional fit for whatever order it
settles on, so f_value always equals the objective at the returned
parameters; the exact algorithms additionally guarantee that order is the
global minimizer.
"""
from __future__ import annotations

import heapq
import itertools
import time
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kendall
from .fitting import (
    _binomial_cost,
    _fit_p_core,
    _theta_cost,
    default_theta_max,
    fit_given_order,
)
from .kemeny_lp import lp_free_cost
from .model import Dataset, Parameters, Ranking, SufficientStats

DEFAULT_NODE_BUDGET = 10_000_000


class BruteForceCapExceeded(ValueError):
    """Raised when brute_force is asked for more objects than its cap."""


@dataclass(frozen=True)
class FitResult:
    """A fitted model plus search diagnostics."""

    params: Parameters
    f_value: float
    algorithm: str
    nodes_expanded: int
    candidate_evaluations: int
    elapsed: float
    theta_flag: str
    non_identified: tuple[int, ...] = ()
    optimal: bool = True
    budget_exhausted: bool = False
    local_rounds: int = 0
    rounds_capped: bool = False
    candidate_cap_hit: bool = False


class _SearchContext:
    """Precomputed arrays shared by every bound evaluation of one search."""

    def __init__(self, stats: SufficientStats, M: int, theta_max: float | None):
        self.stats = stats
        self.J = stats.J
        self.M = M
        self.theta_max = default_theta_max(stats.J) if theta_max is None else float(theta_max)
        self.Q = stats.Q
        self.col_total = stats.Q.sum(axis=0)
        self.mmin = np.minimum(stats.Q, stats.Q.T)
        self.root_free_min = float(self.mmin[np.triu_indices(self.J, k=1)].sum())
        count = stats.score_count
        self.count = count
        self.mean = stats.mean_score
        self.a = count * np.where(count > 0, stats.mean_score, 0.0)
        self.b = count * np.where(count > 0, M - stats.mean_score, 0.0)
        self._lp_cache: dict[tuple[int, ...], float] = {}

    def child_costs(self, prefix: Ranking, fixed: float, free_min: float, child: int, free: Sequence[int]):
        fixed_c = fixed + float(self.col_total[child]) - float(self.Q[list(prefix), child].sum())
        drop = float(self.mmin[list(free), child].sum())  # mmin[child, child] = 0
        return fixed_c, free_min - drop

    def ranking_cost(self, fixed: float, free_min: float, free: tuple[int, ...], heuristic: str) -> float:
        if heuristic == "crude" or len(free) < 3:
            return fixed + free_min
        cached = self._lp_cache.get(free)
        if cached is None:
            cached = lp_free_cost(self.Q, free, free_min)
            self._lp_cache[free] = cached
        return fixed + cached

    def bound(self, prefix: Ranking, fixed: float, free_min: float, free: tuple[int, ...], heuristic: str) -> float:
        L = self.ranking_cost(fixed, free_min, free, heuristic)
        value = 0.0
        if self.stats.n_rankers:
            _, _, value = _theta_cost(L, self.stats.ranking_lengths, self.J, self.theta_max)
        p = _fit_p_core(self.mean, self.count, self.M, prefix, free)
        return value + _binomial_cost(p, self.a, self.b)


def _non_identified(stats: SufficientStats) -> tuple[int, ...]:
    return tuple(int(j) for j in np.flatnonzero(stats.score_count == 0))


def _finalize(stats, M, theta_max, order, algorithm, t0, nodes, cands, **flags) -> FitResult:
    cond = fit_given_order(stats, order, M, theta_max)
    return FitResult(
        params=cond.params,
        f_value=cond.f_value,
        algorithm=algorithm,
        nodes_expanded=nodes,
        candidate_evaluations=cands,
        elapsed=time.perf_counter() - t0,
        theta_flag=cond.theta_flag,
        non_identified=_non_identified(stats),
        **flags,
    )


def astar(
    stats: SufficientStats,
    M: int,
    theta_max: float | None = None,
    heuristic: str = "crude",
    node_budget: int = DEFAULT_NODE_BUDGET,
    trace: list | None = None,
) -> FitResult:
    """Exact MLE by best-first search over prefix orderings.

    Nodes are expanded by lowest admissible total-cost bound (ties: insertion
    order, then lexicographic prefix); the first terminal dequeued carries the
    exact conditional optimum and is the global MLE. heuristic selects the
    crude pairwise-minimum bound or the tighter Kemeny LP bound. If the node
    budget runs out, the best terminal generated so far is returned with
    optimal=False (falling back to the greedy order when none exists yet).
    When trace is a list it receives the bound of every generated node.
    """
    if heuristic not in ("crude", "lp"):
        raise ValueError(f"unknown heuristic {heuristic!r}")
    t0 = time.perf_counter()
    ctx = _SearchContext(stats, M, theta_max)
    J = stats.J
    algorithm = f"exact-{heuristic}"
    if J == 1:
        return _finalize(stats, M, theta_max, (0,), algorithm, t0, 0, 1)

    heap: list[tuple[float, int, Ranking, float, float]] = []
    counter = itertools.count()
    nodes_expanded = 0
    candidate_evals = 0
    best_terminal: tuple[float, Ranking] | None = None

    def expand(prefix: Ranking, fixed: float, free_min: float):
        nonlocal candidate_evals, best_terminal
        free = tuple(o for o in range(J) if o not in prefix)
        for child in free:
            child_prefix = prefix + (child,)
            fixed_c, free_min_c = ctx.child_costs(prefix, fixed, free_min, child, free)
            free_c = tuple(o for o in free if o != child)
            bound = ctx.bound(child_prefix, fixed_c, free_min_c, free_c, heuristic)
            candidate_evals += 1
            if trace is not None:
                trace.append(bound)
            heapq.heappush(heap, (bound, next(counter), child_prefix, fixed_c, free_min_c))
            if len(child_prefix) == J - 1:
                order = child_prefix + free_c
                if best_terminal is None or bound < best_terminal[0]:
                    best_terminal = (bound, order)

    expand((), 0.0, ctx.root_free_min)
    nodes_expanded += 1
    while heap:
        _, _, prefix, fixed, free_min = heapq.heappop(heap)
        if len(prefix) == J - 1:
            last = next(o for o in range(J) if o not in prefix)
            return _finalize(stats, M, theta_max, prefix + (last,), algorithm, t0,
                             nodes_expanded, candidate_evals)
        if nodes_expanded >= node_budget:
            break
        expand(prefix, fixed, free_min)
        nodes_expanded += 1

    if best_terminal is None:
        warnings.warn("node budget exhausted before any terminal; returning greedy order", RuntimeWarning)
        order = _greedy_order(ctx)[0]
    else:
        order = best_terminal[1]
    return _finalize(stats, M, theta_max, order, algorithm, t0, nodes_expanded,
                     candidate_evals, optimal=False, budget_exhausted=True)


def brute_force(stats: SufficientStats, M: int, theta_max: float | None = None, cap: int = 7) -> FitResult:
    """Global MLE by evaluating the conditional fit of every order.

    Ties in f break toward the lexicographically smallest order.
    """
    if stats.J > cap:
        raise BruteForceCapExceeded(f"J={stats.J} exceeds the brute-force cap {cap}")
    t0 = time.perf_counter()
    best_f = np.inf
    best_order = None
    evals = 0
    for order in itertools.permutations(range(stats.J)):
        cond = fit_given_order(stats, order, M, theta_max)
        evals += 1
        if cond.f_value < best_f:
            best_f = cond.f_value
            best_order = order
    return _finalize(stats, M, theta_max, best_order, "brute", t0, 0, evals)


def _greedy_order(ctx: _SearchContext) -> tuple[Ranking, int]:
    """Depth-first descent choosing the child with the smallest crude bound."""
    J = ctx.J
    prefix: Ranking = ()
    fixed, free_min = 0.0, ctx.root_free_min
    evals = 0
    while len(prefix) < J - 1:
        free = tuple(o for o in range(J) if o not in prefix)
        best = None
        for child in free:
            fixed_c, free_min_c = ctx.child_costs(prefix, fixed, free_min, child, free)
            free_c = tuple(o for o in free if o != child)
            bound = ctx.bound(prefix + (child,), fixed_c, free_min_c, free_c, "crude")
            evals += 1
            if best is None or bound < best[0]:
                best = (bound, child, fixed_c, free_min_c)
        _, child, fixed, free_min = best
        prefix = prefix + (child,)
    last = next(o for o in range(J) if o not in prefix)
    return prefix + (last,), evals


def greedy(stats: SufficientStats, M: int, theta_max: float | None = None) -> FitResult:
    """One-pass descent of the prefix tree, never backtracking.

    At each level the child with the smallest crude total-cost bound is kept
    (ties: lexicographic); the final order gets the exact conditional fit.
    """
    t0 = time.perf_counter()
    ctx = _SearchContext(stats, M, theta_max)
    order, evals = _greedy_order(ctx)
    return _finalize(stats, M, theta_max, order, "greedy", t0, max(stats.J - 1, 0), evals)


def greedy_local(
    stats: SufficientStats,
    M: int,
    theta_max: float | None = None,
    max_rounds: int = 100,
) -> FitResult:
    """Greedy followed by steepest-descent local search over adjacent swaps.

    Each round evaluates every adjacent-transposition neighbor of the
    incumbent and moves to the best strictly improving one; stops when no
    neighbor improves (that final sweep counts as a round) or at max_rounds.
    """
    t0 = time.perf_counter()
    ctx = _SearchContext(stats, M, theta_max)
    order, evals = _greedy_order(ctx)
    incumbent = fit_given_order(stats, order, M, theta_max)
    rounds = 0
    capped = False
    while True:
        if rounds >= max_rounds:
            capped = True
            break
        rounds += 1
        best = None
        for neighbor in kendall.adjacent_neighbors(order):
            cond = fit_given_order(stats, neighbor, M, theta_max)
            evals += 1
            if cond.f_value < incumbent.f_value and (best is None or cond.f_value < best[0].f_value):
                best = (cond, neighbor)
        if best is None:
            break
        incumbent, order = best
    return FitResult(
        params=incumbent.params,
        f_value=incumbent.f_value,
        algorithm="greedy-local",
        nodes_expanded=max(stats.J - 1, 0),
        candidate_evaluations=evals,
        elapsed=time.perf_counter() - t0,
        theta_flag=incumbent.theta_flag,
        non_identified=_non_identified(stats),
        local_rounds=rounds,
        rounds_capped=capped,
    )


def _tie_break_orders(averages: np.ndarray, cap: int):
    """All orders sorting the averages ascending, enumerating permutations of
    tied groups; yields at most cap orders and reports whether it truncated."""
    values = np.where(np.isfinite(averages), averages, np.inf)
    idx = sorted(range(values.size), key=lambda j: (values[j], j))
    groups: list[list[int]] = []
    for j in idx:
        if groups and abs(values[groups[-1][0]] - values[j]) <= 1e-9:
            groups[-1].append(j)
        else:
            groups.append([j])
    orders = []
    truncated = False
    for combo in itertools.product(*(itertools.permutations(g) for g in groups)):
        if len(orders) >= cap:
            truncated = True
            break
        orders.append(tuple(itertools.chain.from_iterable(combo)))
    return orders, truncated


def fv(
    stats: SufficientStats,
    dataset: Dataset,
    M: int,
    theta_max: float | None = None,
    candidate_cap: int = 1024,
) -> FitResult:
    """Average-rank candidate search.

    Base orders come from average rank positions computed from rankings alone
    and from scores alone (all tie-break permutations, capped); the candidate
    set is expanded with every adjacent-transposition neighbor of every base
    order, and the best conditional fit wins.
    """
    t0 = time.perf_counter()
    from_rankings, from_scores = kendall.average_ranks(dataset)
    bases: list[Ranking] = []
    cap_hit = False
    for avg in (from_rankings, from_scores):
        if avg is None:
            continue
        orders, truncated = _tie_break_orders(avg, candidate_cap)
        bases.extend(orders)
        cap_hit = cap_hit or truncated
    if cap_hit:
        warnings.warn(f"tie-break enumeration truncated at candidate cap {candidate_cap}", RuntimeWarning)
    candidates = set(bases)
    for base in bases:
        candidates.update(kendall.adjacent_neighbors(base))
    best = None
    evals = 0
    for order in sorted(candidates):
        cond = fit_given_order(stats, order, M, theta_max)
        evals += 1
        if best is None or cond.f_value < best[0].f_value:
            best = (cond, order)
    incumbent, order = best
    return FitResult(
        params=incumbent.params,
        f_value=incumbent.f_value,
        algorithm="fv",
        nodes_expanded=0,
        candidate_evaluations=evals,
        elapsed=time.perf_counter() - t0,
        theta_flag=incumbent.theta_flag,
        non_identified=_non_identified(stats),
        candidate_cap_hit=cap_hit,
    )
