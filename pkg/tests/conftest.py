"""Shared helpers: instance generators and independent oracles."""
from __future__ import annotations

import itertools
import math

import numpy as np

from mallows_binomial import Dataset, Parameters, order_of, sample


def pairwise_distance_oracle(ranking, order) -> int:
    """Discordant-pair count straight from the definition: ranked objects
    precede unranked ones, unranked pairs are incomparable."""
    J = len(order)
    pos0 = {obj: r for r, obj in enumerate(order)}
    rank_pos = {obj: r for r, obj in enumerate(ranking)}

    def before(a, b):
        if a in rank_pos and b in rank_pos:
            return rank_pos[a] < rank_pos[b]
        if a in rank_pos:
            return True
        return False

    d = 0
    for a, b in itertools.combinations(range(J), 2):
        if before(a, b) and pos0[b] < pos0[a]:
            d += 1
        if before(b, a) and pos0[a] < pos0[b]:
            d += 1
    return d


def all_partial_rankings(J, R):
    return itertools.permutations(range(J), R)


def brute_psi(theta, R, J) -> float:
    order = tuple(range(J))
    return math.fsum(
        math.exp(-theta * pairwise_distance_oracle(pi, order))
        for pi in all_partial_rankings(J, R)
    )


def random_params(rng, J, theta_range=(0.3, 4.0)) -> Parameters:
    p = rng.uniform(size=J)
    theta = float(rng.uniform(*theta_range))
    return Parameters(p=p, theta=theta, consensus_order=order_of(p))


def random_dataset(rng, J=None, I=None, M=None, R=None, theta=None,
                   missing_scores=0.0, missing_rankings=0.0) -> Dataset:
    """Panel drawn from a random truth, optionally with MCAR missingness."""
    J = int(rng.integers(3, 7)) if J is None else J
    I = int(rng.integers(3, 12)) if I is None else I
    M = int(rng.choice([5, 10])) if M is None else M
    R = int(rng.integers(2, J + 1)) if R is None else R
    p = rng.uniform(size=J)
    params = Parameters(p=p, theta=theta or float(rng.uniform(0.3, 4.0)),
                        consensus_order=order_of(p))
    ds = sample(params, I, M, R, rng)
    scores = np.array(ds.scores)
    rankings = list(ds.rankings)
    if missing_scores > 0:
        mask = rng.random(scores.shape) < missing_scores
        scores[mask] = np.nan
    if missing_rankings > 0:
        for i in range(I):
            if rng.random() < missing_rankings:
                rankings[i] = None
    if not np.isfinite(scores).any() and all(r is None for r in rankings):
        rankings[0] = ds.rankings[0]
    return Dataset(J=J, M=M, scores=scores, rankings=tuple(rankings))


def enumerate_outcomes(J, M, R):
    """Every (score vector, ranking) pair a single judge can produce."""
    for scores in itertools.product(range(M + 1), repeat=J):
        for ranking in itertools.permutations(range(J), R):
            yield np.array(scores, dtype=float), ranking


def binomial_cost(p, mean, count, M):
    from scipy.special import xlog1py, xlogy

    a = count * np.where(count > 0, mean, 0.0)
    b = count * np.where(count > 0, M - mean, 0.0)
    return float(-np.sum(xlogy(a, p) + xlog1py(b, -p)))


def structural_oracle(mean, count, M, prefix, free):
    """Brute-force optimum of the order-constrained Binomial likelihood:
    enumerate every block structure (contiguous chain partition x subset of
    leaves pooled into the top block), keep feasible candidates, return the
    cheapest. Independent of the production solver's merge path."""
    q = np.where(count > 0, mean / M, 0.0)
    w = count * M
    k = len(prefix)
    best_cost, best_p = np.inf, None
    cuts_options = [()] if k == 0 else [c for r in range(k) for c in itertools.combinations(range(1, k), r)]
    for cuts in cuts_options:
        bounds = [0, *cuts, k]
        blocks = [list(prefix[bounds[i]:bounds[i + 1]]) for i in range(len(bounds) - 1)]
        for attach_size in range(len(free) + 1):
            for attached in itertools.combinations(free, attach_size):
                p = np.full(len(q), np.nan)
                ok = True
                prev = -np.inf
                for bi, block in enumerate(blocks):
                    members = list(block)
                    if bi == len(blocks) - 1:
                        members += list(attached)
                    wt = sum(w[j] for j in members)
                    if wt == 0:
                        ok = False
                        break
                    val = sum(w[j] * q[j] for j in members) / wt
                    if val < prev - 1e-12:
                        ok = False
                        break
                    for j in members:
                        p[j] = val
                    prev = val
                if not ok:
                    continue
                top = prev if blocks else 0.0
                for j in free:
                    if j not in attached:
                        if q[j] < top - 1e-12:
                            ok = False
                            break
                        p[j] = q[j]
                if not ok:
                    continue
                cost = binomial_cost(p, mean, count, M)
                if cost < best_cost - 1e-15:
                    best_cost, best_p = cost, p
    return best_cost, best_p
