"""Nonnegative mean matrices: l1 norms, spectral radius, contraction power.

Vectors are rows and matrices act from the right (``v @ M``), so the induced
operator norm is the maximum absolute row sum.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigError, NotFoundWithinBudget, NotSubcritical

DEFAULT_TOL = 1e-9
DEFAULT_MAX_R = 4096


class MeanMatrix:
    """Immutable d x d matrix of nonnegative offspring means.

    ``entries[i, j]`` is the mean number of type-j children of a type-i parent.
    """

    __slots__ = ("_a",)

    def __init__(self, entries):
        a = np.array(entries, dtype=float, copy=True)
        if a.ndim == 0:
            a = a.reshape(1, 1)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
            raise ConfigError(f"mean matrix must be square with d >= 1, got shape {a.shape}")
        if not np.all(np.isfinite(a)) or np.any(a < 0):
            raise ConfigError("mean matrix entries must be finite and nonnegative")
        a.setflags(write=False)
        self._a = a

    @property
    def entries(self) -> np.ndarray:
        return self._a

    @property
    def d(self) -> int:
        return self._a.shape[0]

    def power(self, k: int) -> np.ndarray:
        return np.linalg.matrix_power(self._a, k)

    def __eq__(self, other):
        return isinstance(other, MeanMatrix) and np.array_equal(self._a, other._a)

    def __hash__(self):
        return hash(self._a.tobytes())

    def __repr__(self):
        return f"MeanMatrix({self._a.tolist()!r})"


@dataclass(frozen=True)
class SpectralInfo:
    rho: float
    rho_tolerance: float
    subcritical: bool
    # None when the matrix is not subcritical (no power contracts)
    r: Optional[int]


def _as_array(M) -> np.ndarray:
    return M.entries if isinstance(M, MeanMatrix) else np.asarray(M, dtype=float)


def l1_norm(v) -> float:
    return float(np.sum(np.abs(np.asarray(v, dtype=float))))


def operator_norm(M) -> float:
    a = _as_array(M)
    return float(np.max(np.sum(np.abs(a), axis=1)))


def spectral_radius(M, tol: float = DEFAULT_TOL, max_doublings: int = 64) -> SpectralInfo:
    """Spectral radius from the Gelfand sequence ``||M^(2^t)||^(1/2^t)``.

    Powers are formed by repeated squaring with the norm factored out at every
    step, so the log of ``||M^(2^t)||`` is tracked without under/overflow.
    Consecutive Gelfand terms ``g_t, g_{t+1}`` are extrapolated as
    ``g_{t+1}^2 / g_t``, which cancels the leading ``C^(1/2^t)`` error factor.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    a = _as_array(M).astype(float, copy=True)
    log_scale = 0.0  # log of the factor removed from `a`
    prev_log_g = None
    prev_est = None
    rho = 0.0
    converged = False
    for t in range(max_doublings):
        n = operator_norm(a)
        if n == 0.0:
            # nilpotent
            rho, converged = 0.0, True
            break
        log_norm = math.log(n) + log_scale
        log_g = log_norm / 2.0**t
        est = math.exp(2.0 * log_g - prev_log_g) if prev_log_g is not None else math.exp(log_g)
        if prev_est is not None and abs(est - prev_est) < tol and t >= 3:
            rho, converged = est, True
            break
        prev_log_g, prev_est, rho = log_g, est, est
        a = a / n
        log_scale = 2.0 * (log_scale + math.log(n))
        a = a @ a
    if not converged:
        # extrapolation did not settle; the plain Gelfand term is an upper estimate
        rho = math.exp(prev_log_g)
    subcritical = rho + tol < 1.0
    r = contraction_power(M, DEFAULT_MAX_R, _checked=True) if subcritical else None
    return SpectralInfo(rho=rho, rho_tolerance=tol, subcritical=subcritical, r=r)


def contraction_power(M, max_r: int = DEFAULT_MAX_R, _checked: bool = False) -> int:
    """Smallest ``r <= max_r`` with ``||M^r|| < 1``."""
    a = _as_array(M)
    if not _checked and not spectral_radius(a).subcritical:
        raise NotSubcritical("contraction power requested for a matrix that is not subcritical")
    p = np.eye(a.shape[0])
    for r in range(1, max_r + 1):
        p = p @ a
        if operator_norm(p) < 1.0:
            return r
        s = operator_norm(p)
        if not np.isfinite(s):
            break
    raise NotFoundWithinBudget(f"no power r <= {max_r} has operator norm < 1 (near-critical model?)")


def row_apply(v, M, k: int) -> np.ndarray:
    """Return ``v M^k``; ``k = 0`` returns a copy of ``v``."""
    if k < 0:
        raise ValueError("k must be nonnegative")
    a = _as_array(M)
    out = np.array(v, dtype=float, copy=True)
    for _ in range(k):
        out = out @ a
    return out
