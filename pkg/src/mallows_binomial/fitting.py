"""Conditional maximum-likelihood solvers.

Given a full or partial ordering of the objects, the joint objective splits
into a univariate convex problem for the consensus scale and an
order-constrained Binomial likelihood for the qualities. Both conditional
solvers are exact; the search module composes them into lower bounds and
full fits.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple, Sequence

import numpy as np
from scipy.special import xlog1py, xlogy

from .model import Dataset, Parameters, Ranking, SufficientStats, compute_stats, log_psi

THETA_FLOOR = 1e-8


def default_theta_max(J: int) -> float:
    """Scale cap J + 2: consistency arguments assume theta < J, and a
    slightly larger cap keeps boundary hits detectable."""
    return float(J + 2)


@dataclass(frozen=True)
class PrefixConstraint:
    """Prefix ordering n_1..n_k: encodes p_{n_1} <= ... <= p_{n_k} and
    p_{n_k} <= p_l for every object l outside the prefix."""

    J: int
    prefix: Ranking

    def __post_init__(self):
        prefix = tuple(int(o) for o in self.prefix)
        if len(set(prefix)) != len(prefix) or any(not 0 <= o < self.J for o in prefix):
            raise ValueError("prefix must list distinct objects in [0, J)")
        object.__setattr__(self, "prefix", prefix)

    @property
    def free(self) -> tuple[int, ...]:
        fixed = set(self.prefix)
        return tuple(o for o in range(self.J) if o not in fixed)


@lru_cache(maxsize=4096)
def _level_weights(lengths: tuple[int, ...], J: int):
    """w[j-1] = number of judges ranking at least j objects, for j = 1..J."""
    w = np.zeros(J)
    for R in lengths:
        w[:R] += 1.0
    k = np.arange(J, 0, -1, dtype=float)  # Mallows level sizes J-j+1
    return w, k, float(sum(lengths))


def log_psi_total(theta: float, lengths: Sequence[int], J: int) -> float:
    """Sum of log normalizing constants over judges with lengths R_i."""
    w, k, sum_r = _level_weights(tuple(lengths), J)
    return float(np.sum(w * np.log(-np.expm1(-theta * k))) - sum_r * np.log(-np.expm1(-theta)))


def _expected_distance_total(theta: float, w, k, sum_r) -> float:
    # Sum over judges of E[d_{R_i,J}] at the given scale.
    with np.errstate(over="ignore"):
        return float(sum_r / np.expm1(theta) - np.sum(w * k / np.expm1(theta * k)))


def _distance_variance_total(theta: float, w, k, sum_r) -> float:
    with np.errstate(over="ignore"):
        head = sum_r / (np.expm1(theta) * (-np.expm1(-theta)))
        tail = np.sum(w * k * k / (np.expm1(theta * k) * (-np.expm1(-theta * k))))
        return float(head - tail)


def fit_theta(
    mean_distance: float,
    ranking_lengths: Sequence[int],
    J: int,
    theta_max: float | None = None,
) -> tuple[float | None, str]:
    """Minimize theta * D * count + sum_i log_psi(theta, R_i, J) over (0, cap].

    mean_distance is the average Kendall distance per ranking-providing
    judge. Returns (theta, flag) with flag one of "interior", "cap" (zero or
    near-zero distance, the all-identical-rankings degeneracy), "floor"
    (distance at or above the uniform-limit mean, no interior minimizer), or
    "undefined" when no rankings exist.
    """
    lengths = tuple(int(r) for r in ranking_lengths)
    if not lengths:
        return None, "undefined"
    if mean_distance < 0:
        raise ValueError("mean distance must be non-negative")
    if theta_max is None:
        theta_max = default_theta_max(J)
    w, k, sum_r = _level_weights(lengths, J)
    total = mean_distance * len(lengths)

    def slope(theta):
        return total - _expected_distance_total(theta, w, k, sum_r)

    if slope(THETA_FLOOR) >= 0:
        return THETA_FLOOR, "floor"
    if slope(theta_max) <= 0:
        return theta_max, "cap"
    lo, hi = THETA_FLOOR, theta_max
    theta = 0.5 * (lo + hi)
    for _ in range(200):
        h = slope(theta)
        if h > 0:
            hi = theta
        elif h < 0:
            lo = theta
        else:
            break
        curv = _distance_variance_total(theta, w, k, sum_r)
        step = h / curv if curv > 0 else 0.0
        nxt = theta - step
        if not lo < nxt < hi:
            nxt = 0.5 * (lo + hi)
        if abs(nxt - theta) < 1e-12 or hi - lo < 1e-12:
            theta = nxt
            break
        theta = nxt
    return float(theta), "interior"


def _theta_cost(mean_distance, ranking_lengths, J, theta_max):
    """fit_theta plus the minimized scale-part value theta*total + log psi."""
    theta, flag = fit_theta(mean_distance, ranking_lengths, J, theta_max)
    if theta is None:
        return None, flag, 0.0
    total = mean_distance * len(ranking_lengths)
    value = theta * total + log_psi_total(theta, ranking_lengths, J)
    return theta, flag, float(value)


def _pava(values: list[float], weights: list[float]) -> list[float]:
    """Weighted pool-adjacent-violators on a chain; returns fitted values."""
    vals: list[float] = []
    wts: list[float] = []
    spans: list[int] = []
    for v, w in zip(values, weights):
        vals.append(v)
        wts.append(w)
        spans.append(1)
        while len(vals) > 1 and vals[-2] > vals[-1]:
            v2, w2, s2 = vals.pop(), wts.pop(), spans.pop()
            w1 = wts[-1]
            vals[-1] = (wts[-1] * vals[-1] + w2 * v2) / (w1 + w2)
            wts[-1] += w2
            spans[-1] += s2
    out = []
    for v, s in zip(vals, spans):
        out.extend([v] * s)
    return out


def _binomial_cost(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    """Negative Binomial loglikelihood terms: a = count * mean,
    b = count * (M - mean); boundary terms use the 0*log(0) = 0 convention."""
    return float(-np.sum(xlogy(a, p) + xlog1py(b, -p)))


def fit_p_constrained(stats: SufficientStats, constraint: PrefixConstraint, M: int) -> np.ndarray:
    """Exact order-constrained Binomial MLE of the quality vector.

    Minimizes sum_j count_j * [mean_j log(1/p_j) + (M - mean_j) log(1/(1-p_j))]
    subject to the chain-plus-star partial order. Solved by chain PAVA plus an
    exhaustive sweep over which star leaves pool into the top chain block;
    every sweep candidate is feasible and the optimum is among them.

    Objects with no observed scores contribute no term; they take the nearest
    feasible value (the top chain value when free) and are non-identified.
    """
    if constraint.J != stats.J:
        raise ValueError("constraint dimension does not match stats")
    return _fit_p_core(stats.mean_score, stats.score_count, M, constraint.prefix, constraint.free)


def _fit_p_core(mean_score, count, M, prefix, free) -> np.ndarray:
    J = count.size
    with np.errstate(invalid="ignore"):
        q = np.where(count > 0, mean_score / M, 0.0)
    weight = count * M

    chain = [j for j in prefix if count[j] > 0]
    leaves = sorted((j for j in free if count[j] > 0), key=lambda j: (q[j], j))

    p = np.full(J, 0.5)
    if not chain and not leaves:
        return p

    if not chain:
        for j in leaves:
            p[j] = q[j]
        top = min(q[j] for j in leaves)
    else:
        a = count * np.where(count > 0, mean_score, 0.0)
        b = count * np.where(count > 0, M - mean_score, 0.0)
        members = chain + leaves
        idx = np.array(members)
        a_m, b_m = a[idx], b[idx]
        best_cost = np.inf
        best = None
        cv = [q[j] for j in chain]
        cw = [weight[j] for j in chain]
        leaf_v = [q[j] for j in leaves]
        leaf_w = [weight[j] for j in leaves]
        extra_v = extra_w = 0.0
        for t in range(len(leaves) + 1):
            vals = list(cv)
            wts = list(cw)
            if extra_w:
                vals[-1] = (cw[-1] * cv[-1] + extra_v) / (cw[-1] + extra_w)
                wts[-1] = cw[-1] + extra_w
            fitted = _pava(vals, wts)
            top_val = fitted[-1]
            cand = fitted + [top_val] * t + [max(v, top_val) for v in leaf_v[t:]]
            cost = _binomial_cost(np.array(cand), a_m, b_m)
            if cost < best_cost:
                best_cost = cost
                best = cand
            if t < len(leaves):
                extra_v += leaf_w[t] * leaf_v[t]
                extra_w += leaf_w[t]
        for j, value in zip(members, best):
            p[j] = value
        top = best[len(chain) - 1]

    # Zero-count objects: propagate feasible values through the chain, then
    # hand the top chain value to zero-count leaves.
    fitted_chain: dict[int, float] = {j: p[j] for j in chain}
    prev = None
    pending: list[int] = []
    for j in prefix:
        if j in fitted_chain:
            if prev is None:
                for z in pending:
                    p[z] = fitted_chain[j]
            pending = []
            prev = fitted_chain[j]
        else:
            if prev is None:
                pending.append(j)
            else:
                p[j] = prev
    if prev is None and pending:  # chain entirely unobserved
        for z in pending:
            p[z] = min(top, 0.5)
    if len(prefix):
        star_floor = p[prefix[-1]]
        for j in free:
            if count[j] == 0:
                p[j] = star_floor
    return p


def mean_kendall_distance(stats: SufficientStats, order: Sequence[int]) -> float:
    """Average Kendall distance of the observed rankings to a full order,
    recovered from the pairwise preference matrix."""
    pos = np.empty(stats.J, dtype=int)
    for r, obj in enumerate(order):
        pos[obj] = r
    mask = pos[:, None] > pos[None, :]
    return float(stats.Q[mask].sum())


def objective(data: Dataset | SufficientStats, params: Parameters, M: int | None = None) -> float:
    """Negative joint loglikelihood less the binomial-coefficient constants,
    generalized to per-judge ranking lengths and missing score cells."""
    if isinstance(data, Dataset):
        stats = compute_stats(data)
        M = data.M if M is None else M
    else:
        stats = data
        if M is None:
            raise ValueError("M is required when passing sufficient statistics")
    count = stats.score_count
    a = count * np.where(count > 0, stats.mean_score, 0.0)
    b = count * np.where(count > 0, M - stats.mean_score, 0.0)
    total = _binomial_cost(params.p, a, b)
    if stats.n_rankers:
        if params.theta is None:
            raise ValueError("rankings present but parameters carry no theta")
        d_mean = mean_kendall_distance(stats, params.consensus_order)
        total += params.theta * d_mean * stats.n_rankers
        total += log_psi_total(params.theta, stats.ranking_lengths, stats.J)
    return float(total)


class ConditionalFit(NamedTuple):
    params: Parameters
    f_value: float
    theta_flag: str


def fit_given_order(
    stats: SufficientStats,
    order: Sequence[int],
    M: int,
    theta_max: float | None = None,
) -> ConditionalFit:
    """Exact conditional optimum of (p, theta) for a fixed consensus order."""
    order = tuple(int(o) for o in order)
    if sorted(order) != list(range(stats.J)):
        raise ValueError("order is not a permutation of the objects")
    constraint = PrefixConstraint(J=stats.J, prefix=order)
    p = fit_p_constrained(stats, constraint, M)
    if stats.n_rankers:
        d_mean = mean_kendall_distance(stats, order)
        theta, flag = fit_theta(d_mean, stats.ranking_lengths, stats.J, theta_max)
    else:
        theta, flag = None, "undefined"
    params = Parameters(p=p, theta=theta, consensus_order=order, theta_at_cap=flag == "cap")
    return ConditionalFit(params, objective(stats, params, M), flag)
