"""Monte Carlo moment estimates, decay fits, tail diagnostics and moment classification."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import kernels, parallel
from .distributions import alpha_moment, alpha_finite, can_be_positive
from .errors import DegenerateSample, InfiniteImmigrationMean, InsufficientPositivePoints
from .matrix import contraction_power
from .process import GWIModel, branch_batch

log = logging.getLogger(__name__)

Z95 = 1.959963984540054


@dataclass
class DecayEstimate:
    alpha: float
    ks: np.ndarray
    m_hat: np.ndarray
    stderr: np.ndarray
    n_samples: int
    fitted_rate: float = float("nan")
    rate_ci: tuple = (float("nan"), float("nan"))
    fit_r2: float = float("nan")
    fit_ks: np.ndarray = field(default_factory=lambda: np.zeros(0, int))
    dropped_zero_ks: list = field(default_factory=list)


@dataclass(frozen=True)
class TailEstimate:
    order_stats_used: int
    hill_estimate: float
    ci: tuple
    n: int


@dataclass(frozen=True)
class MomentReport:
    alpha: float
    classification: str  # "Finite" | "Infinite" | "Unknown"
    offspring_ok: tuple  # per type: E||A_j||^max(alpha,1) finite
    immigration_ok: bool  # E||B||^alpha finite
    every_type_immigrates: bool
    empirical_estimate: Optional[float] = None
    empirical_stderr: Optional[float] = None


def _norm_powers(x: np.ndarray, alphas) -> np.ndarray:
    s = x.sum(axis=1).astype(float)
    return np.stack([s**a for a in alphas], axis=-1)


def estimate_Mk(model: GWIModel, alpha: float, k: int, n_samples: int, rng) -> tuple:
    """(mean, stderr) of ||Pi_k(B)||^alpha with a fresh immigrant batch per sample."""
    if n_samples < 100:
        raise ValueError("n_samples must be >= 100")
    init = kernels.immigration_batch(model, n_samples, rng)
    x = branch_batch(model, init, k, rng)
    acc = parallel.MomentAccumulator().add(x.sum(axis=1).astype(float) ** alpha)
    return float(acc.mean()), float(acc.stderr())


def estimate_Mk_sequence(model: GWIModel, alphas: Sequence[float], k_max: int, n_samples: int, seed: int,
                         workers: Optional[int] = None, tag: int = 1) -> dict:
    """Estimates of M_alpha(k) for k = 0..k_max along shared paths.

    Each path starts from its own immigrant batch; the value at generation k is
    a draw of ||Pi_k(B)||, so every k is estimated without bias (estimates at
    different k are correlated). Returns ``{alpha: (means, stderrs)}``.
    """
    alphas = list(alphas)

    def run(rng, size):
        acc = parallel.MomentAccumulator((k_max + 1, len(alphas)))
        vals = np.zeros((size, k_max + 1, len(alphas)))
        x = kernels.immigration_batch(model, size, rng)
        vals[:, 0, :] = _norm_powers(x, alphas)
        for k in range(1, k_max + 1):
            if not x.any():
                break
            x = kernels.theta_batch(model, x, rng)
            vals[:, k, :] = _norm_powers(x, alphas)
        return acc.add(vals)

    total = parallel.MomentAccumulator((k_max + 1, len(alphas)))
    for part in parallel.map_chunks(run, n_samples, seed, workers, tag=tag):
        total.merge(part)
    mean, se = total.mean(), total.stderr()
    return {a: (mean[:, i].copy(), se[:, i].copy()) for i, a in enumerate(alphas)}


def fit_decay_rate(ks, m_hat, stderr=None, alpha: float = 1.0, n_samples: int = 0,
                   k_min: Optional[int] = None, period: int = 1, max_rel_se: float = 0.2,
                   weighted: bool = False) -> DecayEstimate:
    """Least-squares fit of log m_hat against k; the rate is exp(slope).

    With ``period = r > 1`` every residue class k mod r gets its own intercept
    and all classes share the slope, so the r-step sawtooth of a periodic mean
    matrix does not bias the rate. Given standard errors, the fit range ends
    before the first k >= k_min whose relative standard error exceeds
    ``max_rel_se`` (a zero estimate counts as infinite). Other zero estimates
    are dropped and recorded. ``weighted`` switches to inverse delta-method
    variance weights (m_hat / stderr)^2, which favour the pre-asymptotic
    small-k points and are off by default.
    """
    ks = np.asarray(ks, dtype=int)
    m_hat = np.asarray(m_hat, dtype=float)
    has_se = stderr is not None
    stderr = np.zeros_like(m_hat) if stderr is None else np.asarray(stderr, dtype=float)
    est = DecayEstimate(alpha, ks, m_hat, stderr, n_samples)
    sel = np.ones(len(ks), bool) if k_min is None else ks >= k_min
    est.dropped_zero_ks = ks[sel & (m_hat <= 0)].tolist()
    if has_se:
        with np.errstate(divide="ignore", invalid="ignore"):
            rel = np.where(m_hat > 0, stderr / m_hat, np.inf)
        bad = ks[sel & (rel > max_rel_se)]
        if len(bad):
            sel &= ks < bad.min()
    keep = sel & (m_hat > 0)
    if keep.sum() < max(4, period + 2):
        raise InsufficientPositivePoints(f"need at least {max(4, period + 2)} usable estimates, "
                                         f"have {int(keep.sum())}")
    x = ks[keep].astype(float)
    y = np.log(m_hat[keep])
    se = stderr[keep]
    w = (m_hat[keep] / se) ** 2 if weighted and np.all(se > 0) else np.ones_like(x)
    w = w / w.sum()
    classes = ks[keep] % period
    present = np.unique(classes)
    design = np.column_stack([x] + [(classes == c).astype(float) for c in present])
    sw = np.sqrt(w)
    coef, *_ = np.linalg.lstsq(design * sw[:, None], y * sw, rcond=None)
    slope = float(coef[0])
    resid = y - design @ coef
    ss_res = float(np.sum(w * resid**2))
    yb = np.sum(w * y)
    ss_tot = float(np.sum(w * (y - yb) ** 2))
    dof = len(x) - design.shape[1]
    if dof > 0:
        cov = np.linalg.pinv((design * w[:, None]).T @ design) * (ss_res / dof)
        slope_se = math.sqrt(max(cov[0, 0], 0.0))
    else:
        slope_se = 0.0
    est.fitted_rate = float(math.exp(slope))
    est.rate_ci = (float(math.exp(slope - Z95 * slope_se)), float(math.exp(slope + Z95 * slope_se)))
    est.fit_r2 = 1.0 if ss_tot <= 1e-300 else float(max(0.0, 1.0 - ss_res / ss_tot))
    est.fit_ks = ks[keep]
    return est


def decay_analysis(model: GWIModel, alpha: float, k_max: int, n_samples: int, seed: int,
                   workers: Optional[int] = None) -> DecayEstimate:
    """Estimate M_alpha(k), k <= k_max, and fit the rate over k >= contraction power."""
    model.require_subcritical()
    means, ses = estimate_Mk_sequence(model, [alpha], k_max, n_samples, seed, workers)[alpha]
    r = model.spectral.r or contraction_power(model.mean_matrix)
    fit = fit_decay_rate(np.arange(k_max + 1), means, ses, alpha, n_samples, k_min=r, period=r)
    if not 0 < fit.fitted_rate <= 1:
        log.warning("fitted decay rate %.4g lies outside (0, 1] for a subcritical model", fit.fitted_rate)
    return fit


def exact_M1_sequence(model: GWIModel, k_max: int) -> np.ndarray:
    """M_1(k) = ||E[B] M^k|| for k = 0..k_max."""
    eb = model.immigration_mean()
    if eb is None:
        raise InfiniteImmigrationMean("immigration mean is infinite")
    M = model.mean_matrix.entries
    out = np.empty(k_max + 1)
    v = eb.copy()
    for k in range(k_max + 1):
        out[k] = v.sum()
        v = v @ M
    return out


def stationary_mean_exact(model: GWIModel) -> np.ndarray:
    """E[Y] = E[B] (I - M)^-1."""
    model.require_subcritical()
    eb = model.immigration_mean()
    if eb is None:
        raise InfiniteImmigrationMean("immigration mean is infinite")
    M = model.mean_matrix.entries
    # x (I - M) = E[B]
    return np.linalg.solve((np.eye(model.d) - M).T, eb)


def empirical_alpha_moment(samples, alpha: float) -> tuple:
    x = np.asarray(samples)
    if x.size == 0:
        raise ValueError("samples must be nonempty")
    if x.ndim == 1:
        x = x[:, None]
    acc = parallel.MomentAccumulator().add(x.sum(axis=1).astype(float) ** alpha)
    return float(acc.mean()), float(acc.stderr())


def hill_estimator(norms, k_frac: float = 0.01) -> TailEstimate:
    """Hill estimate of the tail index from the k = ceil(k_frac * n) largest values."""
    x = np.asarray(norms, dtype=float).ravel()
    n = len(x)
    if n < 100:
        raise ValueError("Hill estimator needs at least 100 samples")
    if not 0 < k_frac < 1:
        raise ValueError("k_frac must lie in (0, 1)")
    k = math.ceil(k_frac * n)
    if k < 10 or k >= n:
        raise ValueError(f"k = {k} order statistics is out of range (need 10 <= k < n)")
    return _hill_fixed_k(x, k)


def tail_stability(norms, k_frac: float = 0.01, scale: int = 10) -> dict:
    """Compare Hill estimates at two sample scales with the same k.

    The sample is cut into ``scale`` disjoint blocks; each block gets a Hill
    estimate with k = ceil(k_frac * n / scale), and the full sample is
    estimated with that same k, so its threshold sits further out. For a
    power-law tail the two agree; for a light tail the full-sample estimate
    keeps growing. ``light_tail`` is set when the ratio full / mean(blocks)
    exceeds the approximate 95% band 1 + 1.96 sqrt((1 + 1/scale) / k).
    """
    x = np.asarray(norms, dtype=float).ravel()
    n_sub = len(x) // scale
    blocks = [hill_estimator(x[i * n_sub:(i + 1) * n_sub], k_frac) for i in range(scale)]
    k = blocks[0].order_stats_used
    sub = float(np.mean([b.hill_estimate for b in blocks]))
    full = _hill_fixed_k(x, k)
    ratio = full.hill_estimate / sub
    return {
        "sub": sub,
        "full": full,
        "k": k,
        "ratio": ratio,
        "light_tail": bool(ratio > 1.0 + Z95 * math.sqrt((1.0 + 1.0 / scale) / k)),
    }


def tail_report(norms, k_frac: float, rng: np.random.Generator) -> dict:
    """Hill estimate plus two-scale stability on uniformly jittered counts.

    Integer norms tie heavily near the threshold, which makes the Hill sum
    jump around; adding independent U[0, 1) noise removes the ties without
    changing the tail index. Degeneracy is checked on the raw values.
    """
    x = np.asarray(norms, dtype=float).ravel()
    k = math.ceil(k_frac * len(x))
    if k < len(x):
        _hill_fixed_k(x, k)
    xj = x + rng.random(len(x))
    out = tail_stability(xj, k_frac)
    out["hill"] = hill_estimator(xj, k_frac)
    return out


def _hill_fixed_k(x, k):
    top = -np.sort(-x)[: k + 1]
    if top[0] == top[k] or top[k] <= 0:
        raise DegenerateSample("the top k + 1 order statistics are equal (or not positive)")
    beta = k / float(np.sum(np.log(top[:k] / top[k])))
    half = Z95 / math.sqrt(k)
    return TailEstimate(k, beta, (beta * (1 - half), beta * (1 + half)), len(x))


def classify_moment(model: GWIModel, alpha: float) -> MomentReport:
    """Moment existence of the stationary law from the analytic conditions.

    Finite when every offspring law has a finite moment of order max(alpha, 1)
    and the immigration law a finite moment of order alpha. Infinite when the
    immigration condition fails and every type can immigrate. Unknown
    otherwise.
    """
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    order = max(alpha, 1.0)
    off_ok = tuple(alpha_finite(law, order) for law in model.offspring.per_type)
    imm_ok = alpha_moment(model.immigration, alpha, numeric=False).finite
    everyone = bool(np.all(can_be_positive(model.immigration)))
    if all(off_ok) and imm_ok:
        cls = "Finite"
    elif not imm_ok and everyone:
        cls = "Infinite"
    else:
        cls = "Unknown"
    return MomentReport(alpha, cls, off_ok, imm_ok, everyone)
