"""Batched branching kernels.

A generation adds, for every row and parent type j, the total offspring of
k_j parents. Families closed under iid sums are drawn in one shot:
Deterministic -> k c, Bernoulli/Binomial -> Binomial(k n, p),
Poisson -> Poisson(k lam), Geometric -> NegativeBinomial(k, p). Joint pmfs
draw multinomial counts over their support rows. DiscretePareto and
FinitePMF fall back to one draw per parent.

With numba available the row loop is compiled (``@njit(nogil=True)``);
otherwise a vectorized numpy path handles all rows at once. Both paths
consume the supplied ``numpy.random.Generator`` and are deterministic given
its state, but they do not produce the same stream of variates as each other.
"""
from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from . import _accel
from ._accel import njit
from .distributions import FinitePMF, IndependentComponents, JointPMF, sample
from .errors import ExplosionGuard

POPULATION_LIMIT = 2**48
# parents drawn per numpy call; bounds peak memory for large populations
NUMPY_CHUNK = 2**22


class LawPack(NamedTuple):
    """Flat-array encoding of a list of d-dimensional laws for the compiled samplers."""

    kind: np.ndarray  # 0 independent, 1 joint
    fam: np.ndarray
    pa: np.ndarray
    pb: np.ndarray
    toff: np.ndarray
    tlen: np.ndarray
    tval: np.ndarray
    tcum: np.ndarray
    joff: np.ndarray
    jlen: np.ndarray
    jvec: np.ndarray
    jcum: np.ndarray


def pack_laws(laws, d: int) -> LawPack:
    n = len(laws)
    kind = np.zeros(n, np.int64)
    fam = np.zeros((n, d), np.int64)
    pa = np.zeros((n, d))
    pb = np.zeros((n, d))
    toff = np.zeros((n, d), np.int64)
    tlen = np.zeros((n, d), np.int64)
    joff = np.zeros(n, np.int64)
    jlen = np.zeros(n, np.int64)
    tvals, tcums, jvecs, jcums = [], [], [], []
    tpos = jpos = 0
    for i, law in enumerate(laws):
        if isinstance(law, JointPMF):
            kind[i] = 1
            cum = np.cumsum(law.probs)
            cum[-1] = 1.0
            joff[i], jlen[i] = jpos, len(cum)
            jvecs.append(law.vectors)
            jcums.append(cum)
            jpos += len(cum)
            continue
        for l, c in enumerate(law.components):
            fam[i, l] = c.code
            pa[i, l], pb[i, l] = c.kernel_params()
            if isinstance(c, FinitePMF):
                v, p = c.table()
                cum = np.cumsum(p)
                cum[-1] = 1.0
                toff[i, l], tlen[i, l] = tpos, len(v)
                tvals.append(v.astype(np.int64))
                tcums.append(cum)
                tpos += len(v)
    tval = np.concatenate(tvals) if tvals else np.zeros(1, np.int64)
    tcum = np.concatenate(tcums) if tcums else np.ones(1)
    jvec = np.concatenate(jvecs).astype(np.int64) if jvecs else np.zeros((1, d), np.int64)
    jcum = np.concatenate(jcums) if jcums else np.ones(1)
    return LawPack(kind, fam, pa, pb, toff, tlen, tval, tcum, joff, jlen, jvec, jcum)


# ---------------------------------------------------------------------------
# compiled path


@njit(cache=True, nogil=True, inline="always")
def _bsearch_right(cum, lo, n, u):
    # first index i in [0, n) with cum[lo + i] > u, clamped to n - 1
    a, b = 0, n
    while a < b:
        mid = (a + b) // 2
        if cum[lo + mid] > u:
            b = mid
        else:
            a = mid + 1
    return min(a, n - 1)


@njit(cache=True, nogil=True, inline="always")
def _draw_scalar(code, a, b, off, ln, tval, tcum, rng):
    if code == 0:
        return a
    if code == 1:
        return 1.0 if rng.random() < a else 0.0
    if code == 2:
        return float(rng.binomial(int(a), b))
    if code == 3:
        return float(rng.poisson(a))
    if code == 4:
        return float(rng.geometric(a) - 1)
    if code == 5:
        u = 1.0 - rng.random()
        return math.floor(u ** (-1.0 / a))
    return float(tval[off + _bsearch_right(tcum, off, ln, rng.random())])


@njit(cache=True, nogil=True, inline="always")
def _component_total(code, a, b, count, off, ln, tval, tcum, rng, limit):
    """Sum of ``count`` iid draws of one scalar family; -1 signals explosion."""
    if code == 0:
        if a * count > limit:
            return -1
        return np.int64(a) * count
    if code == 1 or code == 2:
        trials = count if code == 1 else count * np.int64(a)
        p = a if code == 1 else b
        if trials * p > limit:
            return -1
        return np.int64(rng.binomial(trials, p))
    if code == 3:
        if a * count > limit:
            return -1
        return np.int64(rng.poisson(a * count))
    if code == 4:
        if count * (1.0 - a) / a > limit:
            return -1
        return np.int64(rng.negative_binomial(count, a))
    acc = 0
    for _ in range(count):
        v = _draw_scalar(code, a, b, off, ln, tval, tcum, rng)
        if v > limit:
            return -1
        acc += np.int64(v)
        if acc > limit:
            return -1
    return acc


@njit(cache=True, nogil=True)
def _add_joint(lo, n, count, out, s, jvec, jcum, rng):
    """Add ``count`` draws from the joint table rows ``lo:lo+n`` into ``out[s]``."""
    d = out.shape[1]
    if count < 8:
        for _ in range(count):
            idx = lo + _bsearch_right(jcum, lo, n, rng.random())
            for l in range(d):
                out[s, l] += jvec[idx, l]
        return
    # multinomial counts over support rows by sequential binomials
    left = count
    prev = 0.0
    for t in range(n):
        if left == 0:
            break
        p = jcum[lo + t] - prev
        rest = 1.0 - prev
        prev = jcum[lo + t]
        if t == n - 1 or p >= rest:
            c = left
        elif p <= 0.0:
            c = 0
        else:
            c = np.int64(rng.binomial(left, p / rest))
        left -= c
        for l in range(d):
            out[s, l] += c * jvec[lo + t, l]


@njit(cache=True, nogil=True)
def _step_nb(
    state, out, with_theta, with_imm,
    kind, fam, pa, pb, toff, tlen, tval, tcum, joff, jlen, jvec, jcum,
    ikind, ifam, ipa, ipb, itoff, itlen, itval, itcum, ijoff, ijlen, ijvec, ijcum,
    rng, limit,
):
    # the draws are written out in place: wrapping them in a helper costs ~3x per row
    n, d = state.shape
    for s in range(n):
        for l in range(d):
            out[s, l] = 0
        if with_theta:
            for j in range(d):
                k = state[s, j]
                if k == 0:
                    continue
                if kind[j] == 1:
                    _add_joint(joff[j], jlen[j], k, out, s, jvec, jcum, rng)
                    continue
                for l in range(d):
                    tot = _component_total(fam[j, l], pa[j, l], pb[j, l], k, toff[j, l], tlen[j, l],
                                           tval, tcum, rng, limit)
                    if tot < 0:
                        return 1
                    out[s, l] += tot
        if with_imm:
            if ikind[0] == 1:
                _add_joint(ijoff[0], ijlen[0], 1, out, s, ijvec, ijcum, rng)
            else:
                for l in range(d):
                    tot = _component_total(ifam[0, l], ipa[0, l], ipb[0, l], 1, itoff[0, l], itlen[0, l],
                                           itval, itcum, rng, limit)
                    if tot < 0:
                        return 1
                    out[s, l] += tot
        tot = 0
        for l in range(d):
            tot += out[s, l]
        if tot > limit:
            return 1
    return 0


# ---------------------------------------------------------------------------
# numpy path


def _scatter_draws(law, counts: np.ndarray, rng, out: np.ndarray):
    """out[s] += sum of counts[s] independent draws of ``law``, drawn per parent."""
    n, d = out.shape
    total = int(counts.sum())
    if total == 0:
        return
    if total > POPULATION_LIMIT * n:
        raise ExplosionGuard("population exceeds the explosion guard")
    cum = np.cumsum(counts)
    start = 0
    while start < total:
        stop = min(total, start + NUMPY_CHUNK)
        owner = np.searchsorted(cum, np.arange(start, stop), side="right")
        draws = sample(law, rng, stop - start)
        if draws.dtype.kind == "f" and draws.size and draws.max() > POPULATION_LIMIT:
            raise ExplosionGuard("single offspring draw exceeds the explosion guard")
        for l in range(d):
            out[:, l] += np.bincount(owner, weights=draws[:, l], minlength=n).astype(np.int64)
        start = stop


def _guard(mean_total):
    if np.any(mean_total > POPULATION_LIMIT):
        raise ExplosionGuard("population exceeds the explosion guard")


def _add_sums(law, counts: np.ndarray, rng, out: np.ndarray):
    """out[s] += sum of counts[s] independent draws of ``law``."""
    if not counts.any():
        return
    if isinstance(law, JointPMF):
        _guard(counts.astype(float) * law.vectors.max())
        mult = rng.multinomial(counts, law.probs)  # (n, support)
        out += mult @ law.vectors
        return
    for l, c in enumerate(law.components):
        k = counts.astype(float)
        if c.code == 0:
            _guard(k * c.c)
            out[:, l] += counts * c.c
        elif c.code in (1, 2):
            n_tr, p = (1, c.p) if c.code == 1 else (c.n, c.p)
            _guard(k * n_tr * p)
            out[:, l] += rng.binomial(counts * n_tr, p)
        elif c.code == 3:
            _guard(k * c.lam)
            out[:, l] += rng.poisson(k * c.lam)
        elif c.code == 4:
            _guard(k * (1.0 - c.p) / c.p)
            pos = counts > 0
            out[pos, l] += rng.negative_binomial(counts[pos], c.p)
        else:
            sub = np.zeros_like(out[:, :1])
            _scatter_draws(IndependentComponents((c,)), counts, rng, sub)
            out[:, l] += sub[:, 0]


def _step_np(offspring_laws, immigration_law, state, rng, with_theta, with_imm):
    n, d = state.shape
    out = np.zeros((n, d), dtype=np.int64)
    if with_theta:
        for j, law in enumerate(offspring_laws):
            _add_sums(law, state[:, j], rng, out)
    if with_imm:
        _add_sums(immigration_law, np.ones(n, dtype=np.int64), rng, out)
    if n and out.sum(axis=1).max() > POPULATION_LIMIT:
        raise ExplosionGuard("total population exceeds 2^48")
    return out


# ---------------------------------------------------------------------------
# dispatch


def step_batch(model, state: np.ndarray, rng: np.random.Generator, with_theta=True, with_imm=True) -> np.ndarray:
    """One generation for every row of ``state`` (shape (n, d), int64)."""
    state = np.ascontiguousarray(state, dtype=np.int64)
    if _accel.HAS_NUMBA:
        out = np.empty_like(state)
        status = _step_nb(state, out, with_theta, with_imm, *model.offspring_pack, *model.immigration_pack,
                          rng, POPULATION_LIMIT)
        if status:
            raise ExplosionGuard("total population exceeds 2^48")
        return out
    return _step_np(model.offspring.per_type, model.immigration, state, rng, with_theta, with_imm)


def theta_batch(model, state, rng):
    return step_batch(model, state, rng, with_theta=True, with_imm=False)


def immigration_batch(model, n: int, rng):
    return step_batch(model, np.zeros((n, model.d), np.int64), rng, with_theta=False, with_imm=True)
