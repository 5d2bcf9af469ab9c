import itertools
import math
from collections import Counter

import numpy as np
import pytest
from scipy import stats

from conftest import periodic, single_type, two_type
from gwimoments.distributions import (
    Bernoulli,
    Deterministic,
    DiscretePareto,
    FinitePMF,
    OffspringSpec,
    Poisson,
    independent,
    joint,
)
from gwimoments.errors import (
    ExplosionGuard,
    NotSubcritical,
    SupportCapExceeded,
    TruncationUnbounded,
    UnsupportedLaw,
)
from gwimoments.process import (
    GWIModel,
    apply_theta,
    branch_no_immigration,
    exact_generation_pmf,
    sample_stationary_batch,
    simulate_batch,
    simulate_trajectory,
    stationary_samples,
    step,
    truncation_depth,
)


def brute_force_pmf(off_vals, off_probs, imm_vals, imm_probs, n):
    """Law of X_n for d = 1 by enumerating every offspring and immigrant outcome."""
    law = {0: 1.0}
    for _ in range(n):
        nxt = Counter()
        for x, px in law.items():
            for kids in itertools.product(range(len(off_vals)), repeat=x):
                pk = math.prod(off_probs[i] for i in kids)
                total = sum(off_vals[i] for i in kids)
                for v, pv in zip(imm_vals, imm_probs):
                    nxt[total + v] += px * pk * pv
        law = dict(nxt)
    return law


def small_model():
    return GWIModel(OffspringSpec((independent(FinitePMF((0, 1, 2), (0.5, 0.3, 0.2))),)),
                    independent(FinitePMF((0, 1, 2), (0.3, 0.4, 0.3))))


@pytest.mark.parametrize("n", [0, 1, 2, 3])
def test_exact_pmf_matches_enumeration(n):
    got = exact_generation_pmf(small_model(), n, support_cap=40)
    ref = brute_force_pmf((0, 1, 2), (0.5, 0.3, 0.2), (0, 1, 2), (0.3, 0.4, 0.3), n)
    assert set(got) == {(k,) for k, p in ref.items() if p > 0}
    for k, p in ref.items():
        assert got[(k,)] == pytest.approx(p, abs=1e-14)


def test_exact_pmf_two_types_against_enumeration():
    off = OffspringSpec((joint([((0, 0), 0.5), ((1, 1), 0.5)]), joint([((0, 0), 0.6), ((1, 0), 0.4)])))
    imm = joint([((1, 0), 0.7), ((0, 1), 0.3)])
    model = GWIModel(off, imm)
    # X_1 = B; X_2 = theta(B) + B'
    ref = Counter()
    for b, pb in (((1, 0), 0.7), ((0, 1), 0.3)):
        kids = [((0, 0), 0.5), ((1, 1), 0.5)] if b == (1, 0) else [((0, 0), 0.6), ((1, 0), 0.4)]
        for v, pv in kids:
            for b2, pb2 in (((1, 0), 0.7), ((0, 1), 0.3)):
                ref[(v[0] + b2[0], v[1] + b2[1])] += pb * pv * pb2
    got = exact_generation_pmf(model, 2)
    assert got.keys() == ref.keys()
    for k in ref:
        assert got[k] == pytest.approx(ref[k], abs=1e-14)


def test_exact_pmf_guards():
    with pytest.raises(UnsupportedLaw):
        exact_generation_pmf(single_type(), 2)  # Poisson immigration
    with pytest.raises(SupportCapExceeded):
        exact_generation_pmf(small_model(), 4, support_cap=5)
    with pytest.raises(UnsupportedLaw):
        exact_generation_pmf(small_model(), 5)


def test_empirical_x2_matches_exact(backend):
    model = small_model()
    exact = exact_generation_pmf(model, 2)
    x = simulate_batch(model, 2, 100_000, np.random.default_rng(17))[:, 2, 0]
    ks = sorted(k[0] for k in exact)
    obs = np.array([np.sum(x == k) for k in ks])
    assert obs.sum() == len(x)
    exp = np.array([exact[(k,)] for k in ks]) * len(x)
    assert stats.chisquare(obs, exp).pvalue > 0.001
    assert 0.5 * np.abs(obs / len(x) - exp / len(x)).sum() < 0.01


def test_generation_means_match_series(backend):
    model = two_type(immigration=independent(Poisson(1.0), Poisson(0.5)))
    x = simulate_batch(model, 8, 50_000, np.random.default_rng(3)).astype(float)
    M = model.mean_matrix.entries
    eb = np.array([1.0, 0.5])
    for n in range(9):
        ref = sum(eb @ np.linalg.matrix_power(M, i) for i in range(n))
        se = x[:, n, :].std(axis=0, ddof=1) / math.sqrt(len(x))
        assert np.all(np.abs(x[:, n, :].mean(axis=0) - ref) <= 4 * se + 1e-12)


def test_single_draw_helpers():
    model = single_type()
    rng = np.random.default_rng(0)
    assert apply_theta(model, [0], rng).tolist() == [0]
    assert branch_no_immigration(model, [0], 5, rng).tolist() == [0]
    assert branch_no_immigration(model, [7], 0, rng).tolist() == [7]
    traj = simulate_trajectory(model, 5, rng)
    assert len(traj.generations) == 6 and traj.as_array()[0, 0] == 0
    assert step(model, [3], rng).shape == (1,)
    with pytest.raises(ValueError):
        apply_theta(model, [-1], rng)


def test_dead_offspring_keeps_only_immigrants(backend):
    model = GWIModel(OffspringSpec((independent(Deterministic(0)),)), independent(Deterministic(2)))
    x = simulate_batch(model, 4, 100, np.random.default_rng(1))
    assert np.all(x[:, 1:, 0] == 2)


def test_explosion_guard(backend):
    model = GWIModel(OffspringSpec((independent(Deterministic(3)),)), independent(Deterministic(1)))
    with pytest.raises(ExplosionGuard):
        simulate_batch(model, 40, 4, np.random.default_rng(0))


def test_truncation_depth_tail_below_eps():
    for model in (single_type(), two_type(), periodic()):
        for eps in (1e-3, 1e-6):
            n = truncation_depth(model, eps=eps)
            M = model.mean_matrix.entries
            eb = model.immigration_mean()
            R = np.linalg.inv(np.eye(model.d) - M)
            tail = lambda k: (eb @ np.linalg.matrix_power(M, k) @ R).sum()
            assert tail(n) <= eps
            assert n == 0 or tail(n - 1) > eps


def test_truncation_depth_infinite_mean():
    model = GWIModel(OffspringSpec((independent(Poisson(0.5)),)), independent(DiscretePareto(0.8)))
    with pytest.raises(TruncationUnbounded):
        truncation_depth(model, alpha_hint=1.0)
    assert truncation_depth(model, alpha_hint=0.5, eps=1e-6) > 0


def test_not_subcritical():
    model = GWIModel(OffspringSpec((independent(Poisson(1.0)),)), independent(Poisson(1.0)))
    with pytest.raises(NotSubcritical, match="1"):
        truncation_depth(model)


def test_stationary_mean_single_type(backend):
    y = sample_stationary_batch(single_type(), 50_000, np.random.default_rng(8), eps=1e-8)[:, 0]
    assert abs(y.mean() - 2.0) <= 4 * y.std(ddof=1) / math.sqrt(len(y))


def test_stationary_samples_worker_independent():
    model = periodic(lam=2.0)
    a = stationary_samples(model, 20_000, 99, workers=1)
    b = stationary_samples(model, 20_000, 99, workers=4)
    np.testing.assert_array_equal(a, b)
    c = stationary_samples(model, 20_000, 100, workers=1)
    assert not np.array_equal(a, c)
