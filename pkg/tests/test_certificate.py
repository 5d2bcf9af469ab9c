import math

import numpy as np
import pytest

from conftest import periodic, single_type, two_type, worked_model
from gwimoments.analysis import estimate_Mk_sequence, exact_M1_sequence
from gwimoments.certificate import (
    Budgets,
    build_certificate,
    compute_c0,
    compute_k0_and_c1,
    estimate_Sk_moment,
    find_k0_prime,
    format_report,
    lattice_below,
    row_sums,
)
from gwimoments.distributions import DiscretePareto, OffspringSpec, Poisson, independent
from gwimoments.errors import CombinatorialBudgetExceeded, ConfigError, InfiniteImmigrationAlphaMoment
from gwimoments.process import GWIModel

FAST = Budgets(n_samples=5000, k_max_prime=100)


def test_worked_example_constants():
    cert = build_certificate(worked_model(), 2.0, mu_bar=0.6)
    c = cert.constants
    assert (c.k0_prime, c.c0, c.k0, c.c1) == (1, 0.0, 1, 0.0)
    assert c.mu == pytest.approx(0.8, abs=1e-15)
    assert c.estimation_mode == "Exact"
    np.testing.assert_allclose(cert.per_k_bound, 0.8 ** np.arange(26), rtol=1e-12)
    # (sum_k 0.8^(k/2))^2 = (1 / (1 - sqrt(0.8)))^2 = 45 + 20 sqrt(5)
    assert cert.Y_moment_bound == pytest.approx(45 + 20 * math.sqrt(5), rel=1e-12)


def test_worked_example_building_blocks():
    m = worked_model()
    assert find_k0_prime(m, 2.0, 0.6) == 1
    assert compute_c0(m, 2.0, 1) == 0.0
    assert compute_k0_and_c1(m, 2.0, 1, 0.0, 0.6) == (1, 0.0)
    np.testing.assert_allclose(row_sums(m.mean_matrix), [0.5])


def test_Sk_moment_exact_matches_poisson():
    # type-1 row of two_type: ||A|| ~ Poisson(0.7); S_k ~ Poisson(0.7 k)
    model = two_type()
    for k in (1, 3, 10):
        lam = 0.7 * k
        val, mode = estimate_Sk_moment(model, 0, k, 2.0)
        assert mode == "Exact"
        assert val == pytest.approx((lam + lam * lam) / k**2, rel=1e-12)


def test_Sk_moment_fractional_is_upper_bound():
    model = two_type()
    k, lam = 4, 2.8
    n = np.arange(200)
    from scipy import stats

    exact = float(np.sum((n / k) ** 1.5 * stats.poisson(lam).pmf(n)))
    val, _ = estimate_Sk_moment(model, 0, k, 1.5)
    assert val >= exact * (1 - 1e-12)


def test_per_k_bound_follows_recursion():
    model = two_type()
    cert = build_certificate(model, 2.0, budgets=FAST)
    c = cert.constants
    assert c.r == 1
    m1 = exact_M1_sequence(model, 25)
    b = [cert.M_alpha_0_bound]
    for k in range(1, 26):
        b.append(c.mu * b[-1] + c.c1 * m1[k - 1])
    np.testing.assert_allclose(cert.per_k_bound, b, rtol=1e-10)
    assert cert.Y_moment_bound >= sum(b)  # Minkowski form dominates the plain sum for alpha >= 1


def test_alpha_below_one_closed_form():
    cert = build_certificate(worked_model(), 0.5)
    q = 0.5**0.5
    np.testing.assert_allclose(cert.per_k_bound, q ** np.arange(26), rtol=1e-12)
    assert cert.Y_moment_bound == pytest.approx(1 / (1 - q), rel=1e-12)
    assert cert.branch == "alpha_lt_1"


@pytest.mark.parametrize("model_fn, alphas", [(single_type, (0.5, 1.0, 2.0, 3.0)), (two_type, (0.5, 1.0, 2.0))])
def test_bounds_dominate_estimates(model_fn, alphas):
    model = model_fn()
    est = estimate_Mk_sequence(model, alphas, 25, 20_000, seed=3)
    for a in alphas:
        cert = build_certificate(model, a, budgets=FAST)
        means, ses = est[a]
        assert np.all(cert.per_k_bound >= means - 3 * ses)


def test_Y_bound_dominates_stationary_moment():
    # single type: E Y = 2, Var Y = 2, so E Y^2 = 6
    cert = build_certificate(single_type(), 2.0, budgets=FAST)
    assert cert.Y_moment_bound >= 6.0


def test_r_step_branch_reports_reduction():
    model = periodic()
    cert = build_certificate(model, 1.0, budgets=FAST)
    assert cert.constants.r == 2
    assert "r_step" in cert.branch
    M = model.mean_matrix.entries
    np.testing.assert_allclose(cert.reduced_mean_matrix, M @ M)
    rep = format_report(cert)
    assert "r                = 2" in rep and "reduced M^r" in rep
    est = estimate_Mk_sequence(model, [1.0], 25, 20_000, seed=9)[1.0]
    assert np.all(cert.per_k_bound >= est[0] - 3 * est[1])


def test_mu_bar_validation():
    with pytest.raises(ConfigError, match="mu_bar"):
        build_certificate(worked_model(), 2.0, mu_bar=0.4)
    with pytest.raises(ConfigError, match="mu_bar"):
        build_certificate(worked_model(), 2.0, mu_bar=1.0)


def test_infinite_immigration_moment():
    model = GWIModel(OffspringSpec((independent(Poisson(0.5)),)), independent(DiscretePareto(1.5)))
    with pytest.raises(InfiniteImmigrationAlphaMoment):
        build_certificate(model, 2.0, budgets=FAST)
    assert math.isfinite(build_certificate(model, 1.2, budgets=FAST).Y_moment_bound)


@pytest.mark.parametrize("k0, d", [(1, 2), (2, 1), (4, 2), (5, 3), (3, 4)])
def test_lattice_below(k0, d):
    pts = lattice_below(k0, d)
    ref = {v for v in np.ndindex(*(k0,) * d) if 0 < sum(v) < k0}
    assert {tuple(p) for p in pts} == ref
    assert len(pts) == len(ref)


def test_lattice_budget():
    with pytest.raises(CombinatorialBudgetExceeded):
        lattice_below(200, 4, budget=1000)
