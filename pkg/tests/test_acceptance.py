"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

All randomness is seeded, so outcomes are reproducible run to run.
"""
import math
import os
import subprocess
import sys

import numpy as np
import pytest
import yaml
from scipy import stats

from conftest import pareto_immigration, periodic, record, single_type, two_type, worked_model
from gwimoments.analysis import (
    classify_moment,
    decay_analysis,
    estimate_Mk_sequence,
    exact_M1_sequence,
    hill_estimator,
)
from gwimoments.certificate import Budgets, build_certificate
from gwimoments.distributions import FinitePMF, OffspringSpec, independent
from gwimoments.process import GWIModel, exact_generation_pmf, simulate_batch, stationary_samples

N = 100_000


def test_c1_exact_mean_reproduction():
    y1 = stationary_samples(single_type(), N, seed=101, eps=1e-9)[:, 0].astype(float)
    z1 = abs(y1.mean() - 2.0) / (y1.std(ddof=1) / math.sqrt(N))
    y2 = stationary_samples(two_type(), N, seed=102, eps=1e-9).astype(float)
    ref = np.array([2.0, 4.0 / 7.0])
    z2 = np.abs(y2.mean(axis=0) - ref) / (y2.std(axis=0, ddof=1) / math.sqrt(N))
    ok = z1 <= 4 and bool(np.all(z2 <= 4))
    record(1, "exact-mean reproduction", ok,
           f"single-type mean {y1.mean():.5f} (|z| = {z1:.2f}); two-type means "
           f"({y2[:, 0].mean():.5f}, {y2[:, 1].mean():.5f}) vs (2, 4/7), |z| = ({z2[0]:.2f}, {z2[1]:.2f})")
    assert ok


def _variance_recursion(m, var_a, lam, var_b, tol=1e-15):
    """Stationary variance by iterating the law of total variance.

    X' = sum_{i<X} A_i + B: E X' = m E X + lam and
    Var X' = E[X] var_a + m^2 Var X + var_b.
    """
    mean = var = 0.0
    for _ in range(10_000):
        new_mean = m * mean + lam
        new_var = mean * var_a + m * m * var + var_b
        if abs(new_var - var) < tol and abs(new_mean - mean) < tol:
            break
        mean, var = new_mean, new_var
    return new_mean, new_var


def test_c2_variance_oracle():
    mean_ref, var_ref = _variance_recursion(0.5, 0.25, 1.0, 1.0)
    assert mean_ref == pytest.approx(2.0, abs=1e-12) and var_ref == pytest.approx(2.0, abs=1e-12)
    y = stationary_samples(single_type(), N, seed=202, eps=1e-9)[:, 0].astype(float)
    s2 = y.var(ddof=1)
    m4 = np.mean((y - y.mean()) ** 4)
    se = math.sqrt((m4 - s2 * s2) / N)
    z = abs(s2 - var_ref) / se
    ok = z <= 5
    record(2, "variance oracle", ok,
           f"recursion gives Var = {var_ref:.12g}; empirical {s2:.5f} (SE {se:.5f}, |z| = {z:.2f})")
    assert ok


def test_c3_decay_rate():
    details, ok = [], True
    for name, model in (("single-type", single_type()), ("two-type", two_type()), ("periodic", periodic())):
        fit = decay_analysis(model, 1.0, 25, N, seed=303)
        rho = model.spectral.rho
        good = abs(fit.fitted_rate - rho) <= 0.05
        ok &= good
        # the oracle series must itself decay at rho
        exact = exact_M1_sequence(model, 25)
        assert exact[-1] > 0
        details.append(f"{name}: rate {fit.fitted_rate:.4f} vs rho {rho:.4f} (r = {model.spectral.r})")
    assert periodic().mean_matrix.entries.sum(axis=1).max() >= 1 > periodic().spectral.rho
    record(3, "decay rate", ok, "; ".join(details))
    assert ok


def test_c4_certificate_soundness():
    alphas = (0.5, 1.0, 2.0, 3.0)
    budgets = Budgets(n_samples=20_000, seed=404)
    worst, ok = [], True
    for name, model in (("single-type", single_type()), ("two-type", two_type())):
        est = estimate_Mk_sequence(model, alphas, 25, N, seed=405)
        for a in alphas:
            cert = build_certificate(model, a, budgets=budgets)
            means, ses = est[a]
            slack = cert.per_k_bound - (means - 3 * ses)
            ok &= bool(np.all(slack >= 0))
            worst.append(f"{name} a={a:g}: min slack {slack.min():.3g} ({cert.constants.estimation_mode})")
    cert = build_certificate(worked_model(), 2.0, mu_bar=0.6)
    c = cert.constants
    consts_ok = (c.k0_prime, c.c0, c.k0, c.c1) == (1, 0.0, 1, 0.0) and abs(c.mu - 0.8) < 1e-15
    # (1 / (1 - sqrt(0.8)))^2 = 45 + 20 sqrt(5) = 89.7213595...; the criterion's printed 89.44 does not
    # match its own closed form, so the recomputed value is the reference
    y_ref = 45 + 20 * math.sqrt(5)
    y_ok = abs(cert.Y_moment_bound - y_ref) <= 1e-6 * y_ref
    ok &= consts_ok and y_ok
    record(4, "certificate soundness", ok,
           "; ".join(worst) + f"; worked constants (k0'={c.k0_prime}, c0={c.c0:g}, k0={c.k0}, c1={c.c1:g}, "
           f"mu={c.mu:g}); Y bound {cert.Y_moment_bound:.10g} vs closed form {y_ref:.10g} "
           f"(printed approximation 89.44 differs by {cert.Y_moment_bound / 89.44 - 1:.2%})")
    assert ok


def test_c5_brute_force_equivalence():
    model = GWIModel(OffspringSpec((independent(FinitePMF((0, 1, 2), (0.45, 0.35, 0.2))),)),
                     independent(FinitePMF((0, 1, 3), (0.4, 0.4, 0.2))))
    exact = exact_generation_pmf(model, 2)
    x2 = simulate_batch(model, 2, N, np.random.default_rng(505))[:, 2, 0]
    support = sorted(k[0] for k in exact)
    obs = np.array([np.sum(x2 == k) for k in support])
    assert obs.sum() == N  # nothing outside the exact support
    expected = np.array([exact[(k,)] for k in support]) * N
    p = stats.chisquare(obs, expected).pvalue
    tv = 0.5 * np.abs(obs - expected).sum() / N
    ok = p > 0.001 and tv < 0.01
    record(5, "brute-force equivalence", ok, f"chi-square p = {p:.4f} over {len(support)} cells, TV = {tv:.5f}")
    assert ok


def test_c6_moment_existence():
    model = pareto_immigration(1.5)
    c1 = classify_moment(model, 1.0).classification
    c2 = classify_moment(model, 2.0).classification
    y = stationary_samples(model, N, seed=606)
    hill = hill_estimator(y.sum(axis=1).astype(float), 0.01)
    ok = c1 == "Finite" and c2 == "Infinite" and 1.2 <= hill.hill_estimate <= 1.8
    record(6, "moment existence", ok,
           f"alpha=1 {c1}, alpha=2 {c2}; Hill {hill.hill_estimate:.4f} (k = {hill.order_stats_used}, "
           f"95% CI {hill.ci[0]:.3f}..{hill.ci[1]:.3f})")
    assert ok


DET_CONFIG = {
    "model": {"d": 2,
              "offspring": [{"kind": "independent", "components": [{"family": "poisson", "lam": 0.5},
                                                                   {"family": "poisson", "lam": 0.2}]},
                            {"kind": "independent", "components": [{"family": "deterministic", "c": 0},
                                                                   {"family": "poisson", "lam": 0.3}]}],
              "immigration": {"kind": "independent", "components": [{"family": "poisson", "lam": 2.0},
                                                                     {"family": "discrete_pareto", "beta": 2.5}]}},
    "seed": 707, "samples": 30000, "alphas": [0.5, 1.0, 2.0], "k_max": 15,
    "certificate": {"samples": 5000, "k_max_prime": 60},
}


def _cli(args, workers):
    env = {**os.environ, "GWIMOMENTS_WORKERS": str(workers)}
    res = subprocess.run([sys.executable, "-m", "gwimoments.cli", *args], capture_output=True, env=env, check=False)
    assert res.returncode == 0, res.stderr.decode()
    return res.stdout


def test_c7_determinism(tmp_path):
    cfg = tmp_path / "det.yaml"
    cfg.write_text(yaml.safe_dump(DET_CONFIG))
    ok, details = True, []
    for cmd in ("simulate", "stationary", "decay", "certify", "tail"):
        for fmt in ("csv", "json"):
            args = [cmd, "--config", str(cfg), "--format", fmt]
            a, b, c = _cli(args, 1), _cli(args, 1), _cli(args, 8)
            same = a == b == c and len(a) > 0
            ok &= same
            if fmt == "csv":
                details.append(f"{cmd} {'identical' if same else 'DIFFERS'}")
    record(7, "determinism", ok, "1 vs 1 vs 8 workers, csv and json: " + ", ".join(details))
    assert ok
