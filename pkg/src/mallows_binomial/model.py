"""Core Mallows-Binomial model: domain types, density, normalizing constant,
distance moments, and exact sampling.

A panel consists of I judges assessing J objects. Each judge may supply
integer scores in {0, ..., M} (lower is better, missing cells allowed) and/or
a top-R partial ranking. Scores are Binomial(M, p_j) given the object quality
p_j in [0, 1]; the ranking follows a Mallows distribution whose modal order is
the ascending order of p with concentration theta > 0.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import gammaln, xlog1py, xlogy

from . import kendall

Ranking = tuple[int, ...]


def _frozen_array(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


def order_of(p: Sequence[float]) -> Ranking:
    """Ascending order of the quality vector; ties resolved by object index."""
    p = np.asarray(p, dtype=float)
    return tuple(int(j) for j in np.argsort(p, kind="stable"))


@dataclass(frozen=True)
class Dataset:
    """Scores and partial rankings for one panel.

    scores is an (I, J) float array with NaN marking missing cells; rankings
    holds one optional tuple of distinct object indices per judge.
    """

    J: int
    M: int
    scores: np.ndarray
    rankings: tuple[Ranking | None, ...]

    def __post_init__(self):
        scores = np.atleast_2d(np.asarray(self.scores, dtype=float))
        if scores.shape[1] != self.J:
            raise ValueError(f"scores have {scores.shape[1]} columns, expected J={self.J}")
        observed = np.isfinite(scores)
        vals = scores[observed]
        if vals.size and (np.any(vals < 0) or np.any(vals > self.M) or np.any(vals != np.round(vals))):
            raise ValueError(f"scores must be integers in [0, {self.M}]")
        rankings = []
        for i, ranking in enumerate(self.rankings):
            if ranking is None or len(ranking) == 0:
                rankings.append(None)
                continue
            ranking = tuple(int(o) for o in ranking)
            if len(set(ranking)) != len(ranking):
                raise ValueError(f"judge {i}: ranking contains duplicates")
            if any(not 0 <= o < self.J for o in ranking):
                raise ValueError(f"judge {i}: ranking references objects outside [0, J)")
            rankings.append(ranking)
        if len(rankings) != scores.shape[0]:
            raise ValueError("rankings and scores disagree on the number of judges")
        if not observed.any() and all(r is None for r in rankings):
            raise ValueError("dataset holds neither scores nor rankings")
        object.__setattr__(self, "scores", _frozen_array(scores))
        object.__setattr__(self, "rankings", tuple(rankings))

    @property
    def I(self) -> int:
        return self.scores.shape[0]


@dataclass(frozen=True)
class Parameters:
    """Quality vector p, consensus scale theta, and the consensus order.

    The stored order resolves ties in p; p indexed by the order must be
    non-decreasing. theta is None for score-only fits; theta_at_cap marks the
    degenerate all-rankings-identical fit truncated at the configured cap.
    """

    p: np.ndarray
    theta: float | None
    consensus_order: Ranking
    theta_at_cap: bool = False

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        if np.any(p < 0) or np.any(p > 1):
            raise ValueError("quality values must lie in [0, 1]")
        order = tuple(int(o) for o in self.consensus_order)
        if sorted(order) != list(range(p.size)):
            raise ValueError("consensus_order is not a permutation of the objects")
        sorted_p = p[list(order)]
        if np.any(np.diff(sorted_p) < -1e-12):
            raise ValueError("p is not non-decreasing along consensus_order")
        if self.theta is not None and not self.theta > 0:
            raise ValueError("theta must be positive")
        object.__setattr__(self, "p", _frozen_array(p))
        object.__setattr__(self, "consensus_order", order)

    @property
    def J(self) -> int:
        return self.p.size

    def rank_places(self) -> np.ndarray:
        """1-based rank place of each object under the consensus order."""
        places = np.empty(self.J, dtype=int)
        for pos, obj in enumerate(self.consensus_order):
            places[obj] = pos + 1
        return places


@dataclass(frozen=True)
class SufficientStats:
    """Aggregates that determine the joint likelihood.

    mean_score and score_count summarize observed cells per object; Q[u, v] is
    the fraction of ranking-providing judges placing u strictly above v.
    """

    J: int
    mean_score: np.ndarray
    score_count: np.ndarray
    Q: np.ndarray
    n_rankers: int
    ranking_lengths: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "mean_score", _frozen_array(self.mean_score))
        object.__setattr__(self, "score_count", _frozen_array(self.score_count))
        object.__setattr__(self, "Q", _frozen_array(self.Q))


def _check_partial_shape(R: int, J: int):
    if not (isinstance(R, (int, np.integer)) and isinstance(J, (int, np.integer))):
        raise TypeError("R and J must be integers")
    if not 1 <= R <= J:
        raise ValueError(f"need 1 <= R <= J, got R={R}, J={J}")


def log_psi(theta: float, R: int, J: int) -> float:
    """Log normalizing constant of the top-R Mallows model on J objects.

    Evaluated in log space; theta = 0 returns the uniform-limit value
    log(J * (J-1) * ... * (J-R+1)).
    """
    _check_partial_shape(R, J)
    if theta < 0:
        raise ValueError("theta must be non-negative")
    if theta == 0:
        return float(gammaln(J + 1) - gammaln(J - R + 1))
    k = np.arange(J, J - R, -1, dtype=float)
    return float(np.sum(np.log(-np.expm1(-theta * k))) - R * np.log(-np.expm1(-theta)))


def psi(theta: float, R: int, J: int) -> float:
    """Normalizing constant of the top-R Mallows model (product form)."""
    return float(np.exp(log_psi(theta, R, J)))


def moments(theta: float, R: int, J: int) -> tuple[float, float]:
    """Mean and variance of the Kendall distance of a top-R Mallows draw.

    Both follow from the independent level decomposition: the distance is a
    sum of R truncated-geometric insertion counts.
    """
    _check_partial_shape(R, J)
    if theta <= 0:
        raise ValueError("theta must be positive")
    j = np.arange(J - R + 1, J + 1, dtype=float)
    with np.errstate(over="ignore"):
        em1 = np.expm1(j * theta)
        mean = R / np.expm1(theta) - float(np.sum(j / em1))
        # e^{-jt}/(1-e^{-jt})^2 == 1 / (expm1(jt) * (-expm1(-jt)))
        tail = j * j / (em1 * (-np.expm1(-j * theta)))
        e1 = np.expm1(theta)
        var = R / (e1 * (-np.expm1(-theta))) - float(np.sum(tail))
    return float(mean), float(var)


def log_density(scores_row: Sequence[float], ranking: Ranking | None, params: Parameters, M: int) -> float:
    """Log joint density of one judge's scores and optional ranking.

    Missing score cells are skipped; a missing ranking contributes only the
    Binomial terms. Impossible observations at boundary p values (positive
    score with p_j = 0, or score below M with p_j = 1) return -inf.
    """
    row = np.asarray(scores_row, dtype=float)
    if row.size != params.J:
        raise ValueError("score row length does not match parameter dimension")
    observed = np.isfinite(row)
    total = 0.0
    if observed.any():
        x = row[observed]
        if np.any(x < 0) or np.any(x > M) or np.any(x != np.round(x)):
            raise ValueError(f"scores must be integers in [0, {M}]")
        p = params.p[observed]
        binom_coef = gammaln(M + 1) - gammaln(x + 1) - gammaln(M - x + 1)
        total += float(np.sum(binom_coef + xlogy(x, p) + xlog1py(M - x, -p)))
    if ranking is not None and len(ranking) > 0:
        if params.theta is None:
            raise ValueError("ranking present but parameters carry no theta")
        d = kendall.distance(ranking, params.consensus_order)
        total += -params.theta * d - log_psi(params.theta, len(ranking), params.J)
    return total


def sample(params: Parameters, I: int, M: int, R: int, rng) -> Dataset:
    """Draw a panel of I judges with full score rows and top-R rankings.

    Scores are Binomial(M, p_j); the ranking's insertion counts are drawn by
    inverse CDF on truncated geometric weights relative to the consensus
    order. Deterministic given the seeded generator.
    """
    rng = np.random.default_rng(rng)
    J = params.J
    _check_partial_shape(R, J)
    if params.theta is None:
        raise ValueError("sampling requires theta")
    scores = rng.binomial(M, params.p, size=(I, J)).astype(float)
    v = np.empty((I, R), dtype=int)
    for level in range(R):
        width = J - level  # V takes values 0..width-1
        weights = np.exp(-params.theta * np.arange(width))
        cum = np.cumsum(weights)
        cum /= cum[-1]
        v[:, level] = np.searchsorted(cum, rng.random(I), side="left")
    rankings = []
    for i in range(I):
        remaining = list(params.consensus_order)
        rankings.append(tuple(remaining.pop(v[i, level]) for level in range(R)))
    return Dataset(J=J, M=M, scores=scores, rankings=tuple(rankings))


def compute_stats(dataset: Dataset) -> SufficientStats:
    """Sufficient statistics: per-object score means/counts and the pairwise
    preference matrix Q.

    Q's numerator counts judges whose ranking strictly implies u above v
    (unranked objects sit below all ranked ones; unranked pairs contribute
    nothing); the denominator is the number of ranking-providing judges.
    """
    J = dataset.J
    observed = np.isfinite(dataset.scores)
    count = observed.sum(axis=0).astype(float)
    sums = np.where(observed, dataset.scores, 0.0).sum(axis=0)
    with np.errstate(invalid="ignore"):
        mean = np.where(count > 0, sums / np.maximum(count, 1), np.nan)
    wins = np.zeros((J, J))
    lengths = []
    for ranking in dataset.rankings:
        if ranking is None:
            continue
        lengths.append(len(ranking))
        ranked = np.zeros(J, dtype=bool)
        for pos, u in enumerate(ranking):
            ranked[u] = True
            for v in ranking[pos + 1:]:
                wins[u, v] += 1.0
        unranked = np.flatnonzero(~ranked)
        for u in ranking:
            wins[u, unranked] += 1.0
    n_rankers = len(lengths)
    Q = wins / n_rankers if n_rankers else wins
    return SufficientStats(
        J=J,
        mean_score=mean,
        score_count=count,
        Q=Q,
        n_rankers=n_rankers,
        ranking_lengths=tuple(lengths),
    )
