import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import gammaln, xlog1py, xlogy

from conftest import random_dataset, structural_oracle
from mallows_binomial import (
    Dataset,
    Parameters,
    PrefixConstraint,
    SufficientStats,
    compute_stats,
    fit_given_order,
    fit_p_constrained,
    fit_theta,
    log_density,
    moments,
    objective,
)
from mallows_binomial.fitting import THETA_FLOOR, mean_kendall_distance


def make_score_stats(mean, count, J=None):
    mean = np.asarray(mean, dtype=float)
    count = np.asarray(count, dtype=float)
    J = mean.size if J is None else J
    return SufficientStats(J=J, mean_score=mean, score_count=count,
                           Q=np.zeros((J, J)), n_rankers=0, ranking_lengths=())


def binomial_cost(p, mean, count, M):
    a = count * np.where(count > 0, mean, 0.0)
    b = count * np.where(count > 0, M - mean, 0.0)
    return float(-np.sum(xlogy(a, p) + xlog1py(b, -p)))


# ---------------------------------------------------------------------------
# fit_theta
# ---------------------------------------------------------------------------

def test_fit_theta_closed_form():
    theta, flag = fit_theta(0.25, [2], 2, theta_max=10.0)
    assert flag == "interior"
    assert theta == pytest.approx(math.log(3), abs=1e-8)


def test_fit_theta_zero_distance_caps():
    theta, flag = fit_theta(0.0, [2, 2, 2], 2, theta_max=4.0)
    assert flag == "cap" and theta == 4.0


def test_fit_theta_uniform_distance_floors():
    theta, flag = fit_theta(0.5, [2], 2, theta_max=10.0)
    assert flag == "floor" and theta == THETA_FLOOR


def test_fit_theta_empty_rankings_undefined():
    theta, flag = fit_theta(0.3, [], 4, theta_max=6.0)
    assert theta is None and flag == "undefined"


def test_fit_theta_first_order_condition():
    rng = np.random.default_rng(0)
    for _ in range(25):
        J = int(rng.integers(2, 8))
        lengths = [int(rng.integers(1, J + 1)) for _ in range(int(rng.integers(1, 6)))]
        uniform_mean = sum(moments(1e-9, R, J)[0] for R in lengths) / len(lengths)
        D = float(rng.uniform(0.02, 0.9)) * uniform_mean
        theta, flag = fit_theta(D, lengths, J, theta_max=J + 2)
        if flag != "interior":
            continue
        expected_total = sum(moments(theta, R, J)[0] for R in lengths)
        assert abs(D * len(lengths) - expected_total) <= 1e-6


# ---------------------------------------------------------------------------
# fit_p_constrained
# ---------------------------------------------------------------------------

def test_fit_p_unconstrained_optimum_feasible():
    stats = make_score_stats([1.0, 2.0, 4.0], [3, 3, 3])
    constraint = PrefixConstraint(J=3, prefix=(0, 1, 2))
    assert fit_p_constrained(stats, constraint, M=10).tolist() == [0.1, 0.2, 0.4]


def test_fit_p_chain_pooling():
    stats = make_score_stats([3.0, 1.0], [2, 2])
    p = fit_p_constrained(stats, PrefixConstraint(J=2, prefix=(0, 1)), M=10)
    assert p.tolist() == [0.2, 0.2]


def test_fit_p_prefix_star():
    stats = make_score_stats([5.0, 2.0, 9.0], [1, 1, 1])
    p = fit_p_constrained(stats, PrefixConstraint(J=3, prefix=(0,)), M=10)
    assert np.allclose(p, [0.35, 0.35, 0.9], atol=1e-12)


def test_fit_p_weighted_pooling():
    # unequal counts: pooled value is (sum count*mean) / (sum count*M)
    stats = make_score_stats([4.0, 1.0], [1, 3])
    p = fit_p_constrained(stats, PrefixConstraint(J=2, prefix=(0, 1)), M=4)
    pooled = (1 * 4.0 + 3 * 1.0) / ((1 + 3) * 4)
    assert np.allclose(p, [pooled, pooled], atol=1e-12)


def test_fit_p_zero_count_conventions():
    mean = np.array([2.0, np.nan, 6.0, np.nan])
    stats = make_score_stats(mean, [2, 0, 2, 0])
    p = fit_p_constrained(stats, PrefixConstraint(J=4, prefix=(0, 1, 2)), M=10)
    assert p[0] == 0.2 and p[2] == 0.6
    assert p[1] == p[0]         # chain gap takes the preceding value
    assert p[3] == p[2]         # free zero-count leaf takes the top chain value
    all_zero = make_score_stats(np.full(2, np.nan), [0, 0])
    assert fit_p_constrained(all_zero, PrefixConstraint(J=2, prefix=(1,)), M=3).tolist() == [0.5, 0.5]


@given(st.data())
@settings(max_examples=60, deadline=None)
def test_fit_p_matches_structural_oracle(data):
    J = data.draw(st.integers(2, 6))
    M = data.draw(st.integers(1, 8))
    k = data.draw(st.integers(1, J))
    perm = data.draw(st.permutations(range(J)))
    prefix = tuple(perm[:k])
    free = tuple(sorted(perm[k:]))
    # means on the integer grid plus occasional exact ties and boundaries
    mean = np.array([data.draw(st.sampled_from([0, M // 2, M, data.draw(st.integers(0, M))]))
                     for _ in range(J)], dtype=float)
    count = np.array([data.draw(st.integers(1, 5)) for _ in range(J)], dtype=float)
    stats = make_score_stats(mean, count)
    p = fit_p_constrained(stats, PrefixConstraint(J=J, prefix=prefix), M)
    cost = binomial_cost(p, mean, count, M)
    oracle_cost, _ = structural_oracle(mean, count, M, prefix, free)
    assert cost <= oracle_cost + 1e-6
    assert oracle_cost <= cost + 1e-6
    # feasibility is exact
    chain_vals = p[list(prefix)]
    assert np.all(np.diff(chain_vals) >= -1e-12)
    for j in free:
        assert p[j] >= chain_vals[-1] - 1e-12


def test_fit_p_beats_random_feasible_points():
    rng = np.random.default_rng(42)
    for _ in range(10):
        J = int(rng.integers(2, 7))
        M = int(rng.integers(1, 10))
        k = int(rng.integers(1, J + 1))
        perm = rng.permutation(J)
        prefix = tuple(int(v) for v in perm[:k])
        free = [int(v) for v in perm[k:]]
        mean = rng.integers(0, M + 1, size=J).astype(float)
        count = rng.integers(1, 6, size=J).astype(float)
        stats = make_score_stats(mean, count)
        p_hat = fit_p_constrained(stats, PrefixConstraint(J=J, prefix=prefix), M)
        best = binomial_cost(p_hat, mean, count, M)
        for _ in range(2000):
            cand = np.empty(J)
            chain_vals = np.sort(rng.uniform(size=k))
            cand[list(prefix)] = chain_vals
            top = chain_vals[-1]
            for j in free:
                cand[j] = top + (1 - top) * rng.uniform()
            assert best <= binomial_cost(cand, mean, count, M) + 1e-9


def test_fit_p_constraint_monotonicity():
    # extending the prefix can only increase the optimal constrained cost
    rng = np.random.default_rng(9)
    for _ in range(20):
        J = int(rng.integers(3, 7))
        M = 6
        mean = rng.integers(0, M + 1, size=J).astype(float)
        count = rng.integers(1, 4, size=J).astype(float)
        stats = make_score_stats(mean, count)
        perm = [int(v) for v in rng.permutation(J)]
        prev_cost = -np.inf
        for k in range(J + 1):
            p = fit_p_constrained(stats, PrefixConstraint(J=J, prefix=tuple(perm[:k])), M)
            cost = binomial_cost(p, mean, count, M)
            assert cost >= prev_cost - 1e-9
            prev_cost = cost


# ---------------------------------------------------------------------------
# objective
# ---------------------------------------------------------------------------

def log_density_total_with_constants(ds, params):
    total = 0.0
    consts = 0.0
    for row, ranking in zip(ds.scores, ds.rankings):
        total += log_density(row, ranking, params, ds.M)
        x = row[np.isfinite(row)]
        consts += float(np.sum(gammaln(ds.M + 1) - gammaln(x + 1) - gammaln(ds.M - x + 1)))
    return total, consts


def test_objective_matches_log_density_sum():
    rng = np.random.default_rng(14)
    for _ in range(15):
        ds = random_dataset(rng, missing_scores=0.2, missing_rankings=0.3)
        p = np.sort(rng.uniform(0.05, 0.95, size=ds.J))
        order = tuple(rng.permutation(ds.J))
        p_by_obj = np.empty(ds.J)
        p_by_obj[list(order)] = p
        params = Parameters(p=p_by_obj, theta=float(rng.uniform(0.2, 3.0)), consensus_order=order)
        loglik, consts = log_density_total_with_constants(ds, params)
        assert objective(ds, params) == pytest.approx(-loglik + consts, abs=1e-10)


def test_objective_kendall_term_zero_when_unanimous():
    order = (2, 0, 1)
    ds = Dataset(J=3, M=4, scores=np.array([[2.0, 3.0, 1.0]] * 3), rankings=(order,) * 3)
    stats = compute_stats(ds)
    assert mean_kendall_distance(stats, order) == 0.0
    p = np.array([0.5, 0.75, 0.25])
    params = Parameters(p=p, theta=2.0, consensus_order=order)
    with_rank = objective(stats, params, M=4)
    score_only = objective(
        SufficientStats(J=3, mean_score=stats.mean_score, score_count=stats.score_count,
                        Q=np.zeros((3, 3)), n_rankers=0, ranking_lengths=()),
        params, M=4)
    from mallows_binomial.fitting import log_psi_total

    assert with_rank - score_only == pytest.approx(log_psi_total(2.0, (3, 3, 3), 3), abs=1e-12)


# ---------------------------------------------------------------------------
# fit_given_order
# ---------------------------------------------------------------------------

def test_fit_given_order_unanimous():
    order = (1, 0, 2)
    scores = np.array([[3.0, 1.0, 5.0]])
    ds = Dataset(J=3, M=10, scores=scores, rankings=(order,))
    cond = fit_given_order(compute_stats(ds), order, M=10)
    assert np.allclose(cond.params.p, [0.3, 0.1, 0.5])
    assert cond.theta_flag == "cap" and cond.params.theta_at_cap


def test_fit_given_order_dominates_feasible_candidates():
    rng = np.random.default_rng(77)
    for _ in range(8):
        ds = random_dataset(rng, missing_scores=0.1, missing_rankings=0.2)
        stats = compute_stats(ds)
        order = tuple(int(v) for v in rng.permutation(ds.J))
        cond = fit_given_order(stats, order, ds.M)
        cap = ds.J + 2
        assert cond.f_value == pytest.approx(objective(stats, cond.params, ds.M), abs=1e-10)
        for _ in range(400):
            vals = np.sort(rng.uniform(size=ds.J))
            p = np.empty(ds.J)
            p[list(order)] = vals
            theta = float(rng.uniform(THETA_FLOOR, cap))
            cand = Parameters(p=p, theta=theta, consensus_order=order)
            assert cond.f_value <= objective(stats, cand, ds.M) + 1e-9


def test_fit_given_order_invariant_beyond_observed_distinctions():
    scores = np.array([[1.0, 3.0, np.nan, np.nan]])
    ds = Dataset(J=4, M=5, scores=scores, rankings=((0,),))
    stats = compute_stats(ds)
    a = fit_given_order(stats, (0, 1, 2, 3), M=5)
    b = fit_given_order(stats, (0, 1, 3, 2), M=5)
    assert a.f_value == pytest.approx(b.f_value, abs=1e-12)


def test_fit_given_order_score_only_has_no_theta():
    ds = Dataset(J=2, M=3, scores=np.array([[1.0, 2.0]]), rankings=(None,))
    cond = fit_given_order(compute_stats(ds), (0, 1), M=3)
    assert cond.params.theta is None and cond.theta_flag == "undefined"
