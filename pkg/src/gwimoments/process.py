"""Multitype Galton-Watson process with immigration.

A generation maps ``X -> theta(X) + B`` where ``theta(k)`` sums independent
offspring vectors of ``k_j`` type-j parents. Single-draw helpers take and
return plain int64 vectors; the ``*_batch`` variants advance many independent
rows at once through :mod:`gwimoments.kernels`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Optional

import numpy as np
from scipy import signal

from . import kernels, parallel
from .distributions import (
    IndependentComponents,
    JointPMF,
    OffspringSpec,
    VectorLaw,
    alpha_moment,
    mean_matrix,
    mean_vector,
)
from .errors import (
    ConfigError,
    NotFoundWithinBudget,
    NotSubcritical,
    SupportCapExceeded,
    TruncationUnbounded,
    UnsupportedLaw,
)
from .matrix import DEFAULT_TOL, l1_norm, spectral_radius

MAX_TRUNCATION_DEPTH = 10**6


class GWIModel:
    """d-type offspring laws plus an immigration law, with cached mean matrix and spectrum."""

    def __init__(self, offspring: OffspringSpec, immigration: VectorLaw, tol: float = DEFAULT_TOL):
        if not isinstance(offspring, OffspringSpec):
            offspring = OffspringSpec(tuple(offspring))
        if immigration.d != offspring.d:
            raise ConfigError(
                f"immigration law has dimension {immigration.d}, offspring has d = {offspring.d}", "immigration"
            )
        self.offspring = offspring
        self.immigration = immigration
        self.mean_matrix = mean_matrix(offspring)
        self.spectral = spectral_radius(self.mean_matrix, tol)

    @property
    def d(self) -> int:
        return self.offspring.d

    @cached_property
    def offspring_pack(self):
        return kernels.pack_laws(self.offspring.per_type, self.d)

    @cached_property
    def immigration_pack(self):
        return kernels.pack_laws([self.immigration], self.d)

    def immigration_mean(self) -> Optional[np.ndarray]:
        """E[B], or None when some component has an infinite mean."""
        mv = mean_vector(self.immigration)
        if any(m.infinite for m in mv):
            return None
        return np.array([float(m) for m in mv])

    def require_subcritical(self):
        if not self.spectral.subcritical:
            raise NotSubcritical(
                f"model is not subcritical: spectral radius estimate {self.spectral.rho:.6g} "
                f"(tolerance {self.spectral.rho_tolerance:g})"
            )

    def __repr__(self):
        return f"GWIModel(d={self.d}, rho={self.spectral.rho:.6g})"


@dataclass
class Trajectory:
    generations: list

    def as_array(self) -> np.ndarray:
        return np.array(self.generations)


def _row(x, d):
    x = np.asarray(x, dtype=np.int64).reshape(1, d)
    if np.any(x < 0):
        raise ValueError("population vectors must be nonnegative")
    return x


def apply_theta(model: GWIModel, k, rng: np.random.Generator) -> np.ndarray:
    return kernels.theta_batch(model, _row(k, model.d), rng)[0]


def step(model: GWIModel, x, rng: np.random.Generator) -> np.ndarray:
    return kernels.step_batch(model, _row(x, model.d), rng)[0]


def simulate_trajectory(model: GWIModel, n_gens: int, rng: np.random.Generator) -> Trajectory:
    if n_gens < 1:
        raise ValueError("n_gens must be >= 1")
    x = np.zeros(model.d, dtype=np.int64)
    gens = [x]
    for _ in range(n_gens):
        x = step(model, x, rng)
        gens.append(x)
    return Trajectory(gens)


def simulate_batch(model: GWIModel, n_gens: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """Array of shape (n, n_gens + 1, d) of independent trajectories started at 0."""
    out = np.zeros((n, n_gens + 1, model.d), dtype=np.int64)
    x = out[:, 0, :].copy()
    for g in range(1, n_gens + 1):
        x = kernels.step_batch(model, x, rng)
        out[:, g, :] = x
    return out


def branch_no_immigration(model: GWIModel, init, k: int, rng: np.random.Generator) -> np.ndarray:
    """A draw of ``Pi_k(init)``: k generations of branching from ``init``, no immigrants."""
    if k < 0:
        raise ValueError("k must be nonnegative")
    return branch_batch(model, _row(init, model.d), k, rng)[0]


def branch_batch(model: GWIModel, init: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    x = np.array(init, dtype=np.int64)
    for _ in range(k):
        if not x.any():
            break
        x = kernels.theta_batch(model, x, rng)
    return x


# ---------------------------------------------------------------------------
# stationary sampling


def truncation_depth(model: GWIModel, alpha_hint: float = 1.0, eps: float = 1e-6) -> int:
    """Number of generations N after which the omitted series tail is below ``eps``.

    Finite E[B]: the tail is ``||E[B] M^N (I - M)^-1||``. Infinite E[B] with
    alpha_hint < 1: geometric bound with ratio ``(rho + delta)^alpha``,
    ``delta = (1 - rho) / 4``, times ``E||B||^alpha``.
    """
    model.require_subcritical()
    if not eps > 0:
        raise ValueError("eps must be positive")
    M = model.mean_matrix.entries
    eb = model.immigration_mean()
    if eb is not None:
        resolvent = np.linalg.inv(np.eye(model.d) - M)
        v = eb.copy()
        for n in range(MAX_TRUNCATION_DEPTH + 1):
            if l1_norm(v @ resolvent) <= eps:
                return n
            v = v @ M
        raise NotFoundWithinBudget(f"truncation depth exceeds {MAX_TRUNCATION_DEPTH} generations")
    if alpha_hint >= 1:
        raise TruncationUnbounded(
            "immigration has infinite mean; supply alpha_hint < 1 with a finite E||B||^alpha"
        )
    mb = alpha_moment(model.immigration, alpha_hint)
    if mb.infinite:
        raise TruncationUnbounded(f"E||B||^{alpha_hint} is infinite; no tail criterion is computable")
    rho = model.spectral.rho
    q = (rho + (1.0 - rho) / 4.0) ** alpha_hint
    b = float(mb)
    if b == 0.0 or q == 0.0:
        return 1
    n = math.ceil(math.log(eps * (1.0 - q) / b) / math.log(q))
    if n > MAX_TRUNCATION_DEPTH:
        raise NotFoundWithinBudget(f"truncation depth {n} exceeds {MAX_TRUNCATION_DEPTH} generations")
    return max(n, 1)


def sample_stationary_batch(model: GWIModel, n: int, rng, alpha_hint: float = 1.0, eps: float = 1e-6,
                            depth: Optional[int] = None) -> np.ndarray:
    """``n`` draws of X_N from X_0 = 0, equal in law to the truncated stationary series."""
    if depth is None:
        depth = truncation_depth(model, alpha_hint, eps)
    x = np.zeros((n, model.d), dtype=np.int64)
    for _ in range(depth):
        x = kernels.step_batch(model, x, rng)
    return x


def sample_stationary(model: GWIModel, alpha_hint: float, eps: float, rng) -> np.ndarray:
    return sample_stationary_batch(model, 1, rng, alpha_hint, eps)[0]


def stationary_samples(model: GWIModel, n: int, seed: int, alpha_hint: float = 1.0, eps: float = 1e-6,
                       workers: Optional[int] = None) -> np.ndarray:
    """Parallel, worker-count-independent stationary sampling from a master seed."""
    depth = truncation_depth(model, alpha_hint, eps)
    parts = parallel.map_chunks(
        lambda rng, size: sample_stationary_batch(model, size, rng, depth=depth), n, seed, workers
    )
    return np.concatenate(parts) if parts else np.zeros((0, model.d), np.int64)


# ---------------------------------------------------------------------------
# exact oracle


def _law_grid(law: VectorLaw, d: int, cap: int) -> np.ndarray:
    shape = (cap + 1,) * d
    grid = np.zeros(shape)
    if isinstance(law, JointPMF):
        if law.vectors.max() > cap:
            raise SupportCapExceeded(f"law support exceeds support_cap = {cap}")
        for v, p in zip(law.vectors, law.probs):
            grid[tuple(v)] += p
        return grid
    tables = []
    for c in law.components:
        if c.max_support() is None:
            raise UnsupportedLaw(f"{c.family} has unbounded support; exact enumeration needs finite support")
        v, p = c.table()
        if v.max() > cap:
            raise SupportCapExceeded(f"law support exceeds support_cap = {cap}")
        t = np.zeros(cap + 1)
        np.add.at(t, v, p)
        tables.append(t)
    grid = tables[0]
    for t in tables[1:]:
        grid = np.multiply.outer(grid, t)
    return grid


def _conv_capped(a: np.ndarray, b: np.ndarray, cap: int) -> np.ndarray:
    full = signal.convolve(a, b, method="direct")
    keep = tuple(slice(0, cap + 1) for _ in range(a.ndim))
    out = full[keep]
    if full.sum() - out.sum() > 1e-13:
        raise SupportCapExceeded(f"probability mass escapes support_cap = {cap}")
    # pad back to the fixed grid shape
    res = np.zeros((cap + 1,) * a.ndim)
    res[tuple(slice(0, s) for s in out.shape)] = out
    return res


def exact_generation_pmf(model: GWIModel, n: int, support_cap: int = 32) -> dict:
    """Exact law of X_n by exhaustive convolution; returns {vector tuple: probability}."""
    d = model.d
    if d > 2:
        raise UnsupportedLaw("exact enumeration supports d <= 2")
    if not 0 <= n <= 4:
        raise UnsupportedLaw("exact enumeration supports n <= 4")
    cap = int(support_cap)
    off = [_law_grid(law, d, cap) for law in model.offspring.per_type]
    imm = _law_grid(model.immigration, d, cap)
    delta = np.zeros((cap + 1,) * d)
    delta[(0,) * d] = 1.0
    powers = [[delta] for _ in range(d)]

    def power(j, k):
        while len(powers[j]) <= k:
            powers[j].append(_conv_capped(powers[j][-1], off[j], cap))
        return powers[j][k]

    cur = delta
    for _ in range(n):
        mixed = np.zeros_like(cur)
        for idx in zip(*np.nonzero(cur)):
            kids = power(0, idx[0])
            for j in range(1, d):
                kids = _conv_capped(kids, power(j, idx[j]), cap)
            mixed += cur[idx] * kids
        cur = _conv_capped(mixed, imm, cap)
    total = cur.sum()
    if abs(total - 1.0) > 1e-10:
        raise SupportCapExceeded(f"exact pmf mass {total!r} differs from 1")
    return {tuple(int(i) for i in idx): float(cur[idx]) for idx in zip(*np.nonzero(cur))}
