"""Explicit moment-bound certificates.

For alpha >= 1 the constants (mu_bar, k0', c0, k0, mu, c1) of the
one-generation bound ``E||theta(k)||^alpha <= mu ||k||^alpha`` for
``||k|| >= k0`` are instantiated, the recursion
``M_alpha(k) <= mu M_alpha(k-1) + c1 M_1(k-1)`` is unrolled into a bound
sequence B(k), and ``E||Y||^alpha <= (sum_k B(k)^(1/alpha))^alpha``.
For alpha < 1 the Jensen bound gives ``M_alpha(k) <= (max_j mu_j)^(alpha k)
E||B||^alpha`` and subadditivity sums it. When ``||M|| >= 1`` everything is
done for the r-step process with mean matrix M^r, one residue class of k mod r
at a time.

Moments of ``S_k / k`` (average of k offspring totals) are exact when the
offspring cumulants are available: integer alpha directly, non-integer alpha
through the Lyapunov bound ``E X^alpha <= (E X^m)^(alpha/m)``, m = ceil(alpha).
Otherwise they are Monte Carlo upper confidence bounds and the certificate is
statistical.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import stats

from . import parallel
from .distributions import JointPMF, alpha_moment, cumulants_to_raw, norm_cumulants, sample
from .errors import (
    CombinatorialBudgetExceeded,
    ConfigError,
    InfiniteImmigrationAlphaMoment,
    NotFoundWithinBudget,
    RuntimeBudgetError,
)
from .matrix import MeanMatrix, contraction_power, operator_norm
from .process import GWIModel, branch_batch

EXACT = "Exact"
MONTE_CARLO = "MonteCarloUpperCB"
MAX_EXACT_ORDER = 8
MAX_EXACT_K = 2**22


@dataclass
class Budgets:
    k_max_prime: int = 200  # K_max: largest k checked for the k >= k0' condition
    n_samples: int = 20000
    confidence: float = 0.999
    lattice_budget: int = 10**6
    max_r: int = 4096
    horizon: int = 25  # length of the reported per-k table (k = 0..horizon)
    seed: int = 0
    workers: Optional[int] = None


@dataclass
class ProofConstants:
    alpha: float
    mu_j: tuple
    mu_bar: Optional[float]
    k0_prime: Optional[int]
    c0: Optional[float]
    c1: Optional[float]
    k0: Optional[int]
    mu: float
    r: int
    estimation_mode: str


@dataclass
class Certificate:
    constants: ProofConstants
    M_alpha_0_bound: float
    per_k_bound: np.ndarray
    Y_moment_bound: float
    confidence_note: str
    branch: str
    nu_hat: float
    reduced_mean_matrix: Optional[np.ndarray] = None
    notes: list = field(default_factory=list)


def row_sums(M) -> np.ndarray:
    a = M.entries if isinstance(M, MeanMatrix) else np.asarray(M, dtype=float)
    return a.sum(axis=1)


def _z(confidence: float) -> float:
    return float(stats.norm.ppf(confidence))


def _raw_from_cumulant_rows(kappa: np.ndarray, m: int) -> np.ndarray:
    """m-th raw moment from cumulant arrays ``kappa[i]`` (order i + 1), broadcasting."""
    return cumulants_to_raw([kappa[i] for i in range(m)])[m]


class EstimationContext:
    """Where the S-moments of a (possibly r-step reduced) process come from.

    ``s_values(K)[j, k-1]`` is an upper value for ``E (S_{k;j} / k)^alpha``
    with S a sum of k independent copies of ``||A_j||`` (r = 1) or of the
    r-generation total ``||Pi_r(e_j)||`` (r >= 2).
    """

    def __init__(self, model: GWIModel, r: int, alpha: float, budgets: Budgets):
        self.model, self.r, self.alpha, self.budgets = model, r, alpha, budgets
        self.Mr = np.linalg.matrix_power(model.mean_matrix.entries, r)
        self.mu_j = row_sums(self.Mr)
        self.d = model.d
        self.mode = MONTE_CARLO
        self.order = None
        self.kappa = None
        if alpha == 1.0:
            self.mode, self.order = EXACT, 1
            self.kappa = self.mu_j[None, :].copy()
        elif r == 1 and math.ceil(alpha) <= MAX_EXACT_ORDER:
            m = math.ceil(alpha)
            try:
                kap = [norm_cumulants(law, m) for law in model.offspring.per_type]
            except ValueError:
                kap = None
            if kap is not None:
                self.mode, self.order = EXACT, m
                self.kappa = np.array(kap).T  # (m, d)
        self._mc_table = None

    # -- exact ------------------------------------------------------------
    def _exact_s(self, ks: np.ndarray, absolute: bool = False) -> np.ndarray:
        m = self.order
        k = ks.astype(float)[None, :]
        kap = np.abs(self.kappa) if absolute else self.kappa
        rows = [kap[i][:, None] * k ** (-i) for i in range(m)]
        raw = np.maximum(_raw_from_cumulant_rows(np.array(rows), m), 0.0)
        return raw ** (self.alpha / m)

    def s_tail_bound(self, K: int) -> Optional[np.ndarray]:
        """Per-type bound valid for every k >= K (exact mode only)."""
        if self.mode != EXACT:
            return None
        return self._exact_s(np.array([K]), absolute=True)[:, 0]

    # -- Monte Carlo ------------------------------------------------------
    def _mc(self, K: int) -> np.ndarray:
        if self._mc_table is not None and self._mc_table.shape[1] >= K:
            return self._mc_table[:, :K]
        b = self.budgets
        z = _z(b.confidence)
        ks = np.arange(1, K + 1, dtype=float)
        table = np.zeros((self.d, K))
        for j in range(self.d):
            def run(rng, size, j=j):
                totals = self._draw_totals(j, size * K, rng).reshape(size, K)
                avg = np.cumsum(totals, axis=1) / ks
                return parallel.MomentAccumulator((K,)).add(avg**self.alpha)

            acc = parallel.MomentAccumulator((K,))
            for part in parallel.map_chunks(run, b.n_samples, b.seed, b.workers, tag=100 + j, chunk=1024):
                acc.merge(part)
            table[j] = acc.mean() + z * acc.stderr()
        self._mc_table = table
        return table

    def _draw_totals(self, j: int, n: int, rng) -> np.ndarray:
        if self.r == 1:
            return sample(self.model.offspring.per_type[j], rng, n).sum(axis=1).astype(float)
        init = np.zeros((n, self.d), dtype=np.int64)
        init[:, j] = 1
        return branch_batch(self.model, init, self.r, rng).sum(axis=1).astype(float)

    def draw_totals(self, j: int, n: int, rng) -> np.ndarray:
        """Draws of the per-ancestor total used by the reduced process."""
        return self._draw_totals(j, n, rng)

    # -- common -----------------------------------------------------------
    def s_values(self, K: int) -> np.ndarray:
        if self.mode == EXACT:
            return self._exact_s(np.arange(1, K + 1))
        return self._mc(K)

    def theta_bound(self, lattice: np.ndarray, K: int) -> np.ndarray:
        """Upper values of E||theta(k)||^alpha for each lattice row k (reduced process)."""
        norms = lattice.sum(axis=1).astype(float)
        if self.mode == EXACT:
            m = self.order
            kap = lattice.astype(float) @ self.kappa.T  # (P, m)
            raw = np.maximum(_raw_from_cumulant_rows(kap.T, m), 0.0)
            return raw ** (self.alpha / m)
        # convexity: E||theta(k)||^a <= ||k||^(a-1) sum_j k_j E(S_{k_j;j}/k_j)^a
        table = self.s_values(K)
        out = np.zeros(len(lattice))
        for j in range(self.d):
            kj = lattice[:, j]
            # beyond the table, E(S_k/k)^a <= E||A||^a (the k = 1 value)
            vals = np.where((kj >= 1) & (kj <= K), table[j, np.clip(kj - 1, 0, K - 1)], table[j, 0])
            out += np.where(kj > 0, kj * vals, 0.0)
        with np.errstate(invalid="ignore", divide="ignore"):
            scale = np.where(norms > 0, norms ** (self.alpha - 1.0), 0.0)
        return out * scale


def r_step_reduction(model: GWIModel, r: int, alpha: float = 1.0, budgets: Optional[Budgets] = None):
    """Estimation context of the r-step process (mean matrix M^r); r = 1 is the identity."""
    if r < 1:
        raise ValueError("r must be >= 1")
    return EstimationContext(model, r, alpha, budgets or Budgets())


def _reduction_power(model: GWIModel, budgets: Budgets) -> int:
    model.require_subcritical()
    if operator_norm(model.mean_matrix) < 1.0:
        return 1
    return contraction_power(model.mean_matrix, budgets.max_r)


def estimate_Sk_moment(model: GWIModel, j: int, k: int, alpha: float, n_samples: int = 20000,
                       confidence: float = 0.999, seed: int = 0) -> tuple:
    """(value, mode) for E(S_{k;j}/k)^alpha: exact when cumulants allow, else an upper CB."""
    if k < 1:
        raise ValueError("k must be >= 1")
    ctx = EstimationContext(model, 1, alpha, Budgets(n_samples=n_samples, confidence=confidence, seed=seed))
    return float(ctx.s_values(k)[j, k - 1]), ctx.mode


def _find_k0_prime(ctx: EstimationContext, mu_bar: float, K_max: int) -> tuple:
    """(k0', K verified up to, verified_for_all_k)."""
    K = K_max
    while True:
        vals = ctx.s_values(K)
        bad = np.nonzero(np.any(vals >= mu_bar, axis=0))[0]
        k0p = int(bad[-1]) + 2 if len(bad) else 1
        if k0p > K:
            if ctx.mode == EXACT and K < MAX_EXACT_K:
                K *= 2
                continue
            raise NotFoundWithinBudget(
                f"E(S_k/k)^alpha < mu_bar = {mu_bar:.6g} does not hold on any tail of k <= {K}; "
                "raise mu_bar or the k budget"
            )
        tail = ctx.s_tail_bound(K)
        if tail is None:
            return k0p, K, False
        if np.all(tail < mu_bar):
            return k0p, K, True
        if K >= MAX_EXACT_K:
            raise NotFoundWithinBudget(f"could not verify E(S_k/k)^alpha < mu_bar for all k >= {K}")
        K *= 2


def _default_mu_bar(mu_j) -> float:
    return 0.5 * (float(np.max(mu_j)) + 1.0)


def find_k0_prime(model: GWIModel, alpha: float, mu_bar: float, K_max: int = 200, n_samples: int = 20000,
                  seed: int = 0) -> int:
    ctx = EstimationContext(model, 1, alpha, Budgets(k_max_prime=K_max, n_samples=n_samples, seed=seed))
    _check_mu_bar(ctx.mu_j, mu_bar)
    return _find_k0_prime(ctx, mu_bar, K_max)[0]


def _compute_c0(ctx: EstimationContext, k0_prime: int) -> float:
    if k0_prime <= 1:
        return 0.0
    return float(np.max(ctx.s_values(k0_prime - 1)))


def compute_c0(model: GWIModel, alpha: float, k0_prime: int, n_samples: int = 20000, seed: int = 0) -> float:
    if k0_prime < 1:
        raise ValueError("k0_prime must be >= 1")
    ctx = EstimationContext(model, 1, alpha, Budgets(n_samples=n_samples, seed=seed))
    return _compute_c0(ctx, k0_prime)


def lattice_below(k0: int, d: int, budget: int = 10**6) -> np.ndarray:
    """All nonnegative integer d-vectors with 0 < ||k|| < k0, one per row."""
    count = math.comb(k0 - 1 + d, d) - 1 if k0 >= 1 else 0
    if count > budget:
        raise CombinatorialBudgetExceeded(
            f"lattice {{0 < ||k|| < k0 = {k0}}} has {count} points (budget {budget}); "
            "a larger mu_bar shrinks k0"
        )
    if count <= 0:
        return np.zeros((0, d), dtype=np.int64)
    rows = [c for c in itertools.product(range(k0), repeat=d) if 0 < sum(c) < k0] if d <= 2 else None
    if rows is None:
        # compositions via stars and bars on the simplex of total < k0
        rows = []
        for total in range(1, k0):
            for cut in itertools.combinations(range(total + d - 1), d - 1):
                prev, vec = -1, []
                for c in cut:
                    vec.append(c - prev - 1)
                    prev = c
                vec.append(total + d - 1 - prev - 1)
                rows.append(vec)
    return np.array(rows, dtype=np.int64).reshape(-1, d)


def _compute_k0_and_c1(ctx: EstimationContext, k0_prime: int, c0: float, mu_bar: float, K: int) -> tuple:
    k0 = int(math.floor(2.0 * k0_prime * c0 * ctx.d / (1.0 - mu_bar))) + 1
    lattice = lattice_below(k0, ctx.d, ctx.budgets.lattice_budget)
    c1 = 0.0
    if len(lattice):
        c1 = max(0.0, float(np.max(ctx.theta_bound(lattice, K))))
    return k0, c1


def compute_k0_and_c1(model: GWIModel, alpha: float, k0_prime: int, c0: float, mu_bar: float,
                      n_samples: int = 20000, seed: int = 0) -> tuple:
    ctx = EstimationContext(model, 1, alpha, Budgets(n_samples=n_samples, seed=seed))
    return _compute_k0_and_c1(ctx, k0_prime, c0, mu_bar, ctx.budgets.k_max_prime)


def _check_mu_bar(mu_j, mu_bar):
    lo = float(np.max(mu_j))
    if not (lo < mu_bar < 1.0):
        raise ConfigError(f"mu_bar must lie in (max row sum = {lo:.6g}, 1), got {mu_bar}", "mu_bar")


def _immigration_alpha_bound(model: GWIModel, alpha: float) -> float:
    mb = alpha_moment(model.immigration, alpha)
    if mb.infinite:
        raise InfiniteImmigrationAlphaMoment(f"E||B||^{alpha} is infinite")
    law = model.immigration
    if isinstance(law, JointPMF) or all(c.max_support() is not None for c in law.components):
        return float(mb)
    # series truncated at a relative tolerance; pad the bound by it
    return float(mb) * (1.0 + 1e-9)


def _sum_minkowski(classes, alpha, max_terms=10**6):
    """(sum_k B(k)^(1/alpha))^alpha over all residue-class sequences, to convergence."""
    total = 0.0
    quiet = 0
    for t in range(max_terms):
        terms = [next(seq) for seq in classes]
        inc = sum(b ** (1.0 / alpha) for b in terms)
        total += inc
        if inc <= 1e-17 * total or inc == 0.0:
            quiet += 1
            if quiet >= 50:
                return total**alpha
        else:
            quiet = 0
    raise NotFoundWithinBudget("certificate series did not converge numerically")


def _nu_hat(per_k: np.ndarray) -> float:
    b0 = per_k[0]
    if b0 <= 0:
        return 0.0
    ks = np.arange(1, len(per_k))
    with np.errstate(divide="ignore"):
        return float(np.max((per_k[1:] / b0) ** (1.0 / ks))) if len(ks) else 0.0


def build_certificate_alpha_ge_1(model: GWIModel, alpha: float, mu_bar: Optional[float] = None,
                                 budgets: Optional[Budgets] = None) -> Certificate:
    if alpha < 1:
        raise ValueError("alpha >= 1 required for this branch")
    budgets = budgets or Budgets()
    r = _reduction_power(model, budgets)
    ctx = r_step_reduction(model, r, alpha, budgets)
    if mu_bar is None:
        mu_bar = _default_mu_bar(ctx.mu_j)
    _check_mu_bar(ctx.mu_j, mu_bar)
    k0p, K, all_k = _find_k0_prime(ctx, mu_bar, budgets.k_max_prime)
    c0 = _compute_c0(ctx, k0p)
    k0, c1 = _compute_k0_and_c1(ctx, k0p, c0, mu_bar, K)
    mu = 0.5 * (1.0 + mu_bar)
    b0 = _immigration_alpha_bound(model, alpha)

    step_bound = 1.0
    if r > 1:
        # M_alpha(i), i < r: E||theta(Z)||^a <= max_j E||A_j||^a E||Z||^a by convexity
        mom = [alpha_moment(law, alpha) for law in model.offspring.per_type]
        if any(m.infinite for m in mom):
            raise RuntimeBudgetError(f"an offspring law has infinite moment of order {alpha}")
        step_bound = max(float(m) for m in mom) * (1.0 + 1e-9)

    M = model.mean_matrix.entries
    eb = model.immigration_mean()
    Mr = ctx.Mr

    def residue_class(i):
        v = eb @ np.linalg.matrix_power(M, i)  # E[B] M^i
        b = step_bound**i * b0
        while True:
            yield b
            b = mu * b + c1 * float(v.sum())
            v = v @ Mr

    H = budgets.horizon
    gens = [residue_class(i) for i in range(r)]
    per_class = [[next(g) for _ in range(H // r + 2)] for g in gens]
    per_k = np.array([per_class[k % r][k // r] for k in range(H + 1)])
    Y = _sum_minkowski([residue_class(i) for i in range(r)], alpha)

    consts = ProofConstants(alpha, tuple(ctx.mu_j.tolist()), mu_bar, k0p, c0, c1, k0, mu, r, ctx.mode)
    notes = [
        "E||Y||^alpha is bounded in Minkowski form (sum_k B(k)^(1/alpha))^alpha.",
        f"B(0) is the immigration moment E||B||^alpha = {b0:.12g}.",
    ]
    if ctx.mode == EXACT:
        if all_k:
            note = (f"Exact constants; E(S_k/k)^alpha < mu_bar verified analytically for all k >= k0' "
                    f"(tail bound at k = {K}).")
        else:
            note = "Exact constants."
        if ctx.order != alpha:
            notes.append(f"Non-integer alpha: S-moments use the Lyapunov bound with order {ctx.order}.")
    else:
        note = (f"Statistical certificate: Monte Carlo constants enter as one-sided {budgets.confidence:.4g} "
                f"upper confidence bounds (n = {budgets.n_samples}); E(S_k/k)^alpha < mu_bar checked only "
                f"for k <= K_max = {K}, validity beyond is asymptotic.")
    branch = "alpha_ge_1" if r == 1 else f"alpha_ge_1_r_step(r={r})"
    if r > 1:
        notes.append(f"||M|| >= 1: constants are for the {r}-step process with mean matrix M^{r}; "
                     f"bounds interleave the residue classes k mod {r}.")
    return Certificate(consts, b0, per_k, Y, note, branch, _nu_hat(per_k), Mr if r > 1 else None, notes)


def build_certificate_alpha_lt_1(model: GWIModel, alpha: float, budgets: Optional[Budgets] = None) -> Certificate:
    if not 0 < alpha < 1:
        raise ValueError("0 < alpha < 1 required for this branch")
    budgets = budgets or Budgets()
    r = _reduction_power(model, budgets)
    b0 = _immigration_alpha_bound(model, alpha)
    mu1 = float(np.max(row_sums(model.mean_matrix)))
    Mr = np.linalg.matrix_power(model.mean_matrix.entries, r)
    mu_j = row_sums(Mr)
    mur = float(np.max(mu_j))
    q = mur**alpha
    H = budgets.horizon
    per_k = np.array([q ** (k // r) * mu1 ** (alpha * (k % r)) * b0 for k in range(H + 1)])
    Y = b0 * sum(mu1 ** (alpha * i) for i in range(r)) / (1.0 - q)
    consts = ProofConstants(alpha, tuple(mu_j.tolist()), None, None, None, None, None, q, r, EXACT)
    notes = [
        "Jensen gives E||theta(k)||^alpha <= (max_j mu_j)^alpha ||k||^alpha; the contraction constant "
        f"used is mu = (max_j mu_j)^alpha = {q:.12g}, not max_j mu_j.",
        "E||Y||^alpha <= sum_k B(k) by subadditivity of x^alpha.",
    ]
    if r > 1:
        notes.append(f"||M|| >= 1: B(rk + i) = mu_r^(alpha k) mu_1^(alpha i) B(0) with r = {r}.")
    branch = "alpha_lt_1" if r == 1 else f"alpha_lt_1_r_step(r={r})"
    return Certificate(consts, b0, per_k, Y, "Exact constants.", branch, _nu_hat(per_k),
                       Mr if r > 1 else None, notes)


def build_certificate(model: GWIModel, alpha: float, mu_bar: Optional[float] = None,
                      budgets: Optional[Budgets] = None) -> Certificate:
    if alpha >= 1:
        return build_certificate_alpha_ge_1(model, alpha, mu_bar, budgets)
    return build_certificate_alpha_lt_1(model, alpha, budgets)


def format_report(cert: Certificate) -> str:
    c = cert.constants
    lines = [
        f"certificate alpha = {c.alpha:g}  branch = {cert.branch}",
        f"  estimation_mode  = {c.estimation_mode}",
        f"  r                = {c.r}",
    ]
    if cert.reduced_mean_matrix is not None:
        lines.append(f"  reduced M^r      = {np.array2string(cert.reduced_mean_matrix, precision=6)}")
    lines += [
        f"  mu_j             = {', '.join(f'{x:.6g}' for x in c.mu_j)}",
        f"  mu_bar           = {c.mu_bar if c.mu_bar is None else format(c.mu_bar, '.10g')}",
        f"  k0_prime         = {c.k0_prime}",
        f"  c0               = {c.c0 if c.c0 is None else format(c.c0, '.10g')}",
        f"  k0               = {c.k0}",
        f"  c1               = {c.c1 if c.c1 is None else format(c.c1, '.10g')}",
        f"  mu               = {c.mu:.10g}",
        f"  B(0) >= E||B||^a = {cert.M_alpha_0_bound:.10g}",
        f"  nu_hat           = {cert.nu_hat:.10g}",
        f"  E||Y||^a bound   = {cert.Y_moment_bound:.10g}",
        f"  confidence       = {cert.confidence_note}",
    ]
    lines += [f"  note: {n}" for n in cert.notes]
    lines.append("  k  B(k)")
    lines += [f"  {k:<3d}{b:.10g}" for k, b in enumerate(cert.per_k_bound)]
    return "\n".join(lines)
