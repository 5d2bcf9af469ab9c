"""Nonnegative-integer offspring and immigration laws.

Scalar families are small frozen dataclasses; a d-dimensional law is either a
tuple of independent scalar components or an explicit joint PMF table.
Moments of the l1 norm ``||V|| = sum_j V_j`` are computed in closed form where
possible and otherwise by truncated summation with a certified tail bound.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import ClassVar, Optional, Sequence, Union

import numpy as np
from scipy import special, stats

from .errors import ConfigError, InfiniteOffspringMean, TruncationBudgetExceeded
from .matrix import MeanMatrix

PMF_SUM_TOL = 1e-12
MOMENT_REL_TOL = 1e-9
MIXED_REL_TOL = 1e-6  # truncated convolution of several unbounded components converges slowly
TERM_BUDGET = 10**7


@dataclass(frozen=True)
class MomentValue:
    """A moment that is either finite (``value`` may be None if not evaluated) or infinite."""

    value: Optional[float] = None
    infinite: bool = False

    @property
    def finite(self) -> bool:
        return not self.infinite

    def __float__(self):
        if self.infinite:
            raise ValueError("moment is infinite")
        if self.value is None:
            raise ValueError("moment is finite but was not evaluated")
        return float(self.value)

    def __str__(self):
        if self.infinite:
            return "Infinite"
        return "Finite" if self.value is None else repr(self.value)


INFINITE = MomentValue(None, True)


@lru_cache(maxsize=None)
def _stirling2(m: int, k: int) -> int:
    if m == k:
        return 1
    if k == 0 or k > m:
        return 0
    return k * _stirling2(m - 1, k) + _stirling2(m - 1, k - 1)


def _raw_from_factorial(m: int, fact) -> float:
    """E X^m = sum_k S(m, k) E[X (X-1) ... (X-k+1)]."""
    return float(sum(_stirling2(m, k) * fact(k) for k in range(m + 1)))


def raw_to_cumulants(raw: Sequence[float]) -> list:
    """Cumulants kappa_1..kappa_m from raw moments mu'_0..mu'_m (mu'_0 = 1)."""
    m = len(raw) - 1
    kap = [0.0] * (m + 1)
    for n in range(1, m + 1):
        kap[n] = raw[n] - sum(math.comb(n - 1, k - 1) * kap[k] * raw[n - k] for k in range(1, n))
    return kap[1:]


def cumulants_to_raw(kappa: Sequence[float]) -> list:
    """Raw moments mu'_0..mu'_m from cumulants kappa_1..kappa_m."""
    m = len(kappa)
    raw = [1.0] + [0.0] * m
    for n in range(1, m + 1):
        raw[n] = sum(math.comb(n - 1, k - 1) * kappa[k - 1] * raw[n - k] for k in range(1, n + 1))
    return raw


# ---------------------------------------------------------------------------
# scalar families


class ScalarLaw:
    family: ClassVar[str]
    code: ClassVar[int]

    def params(self) -> dict:
        raise NotImplementedError

    def max_support(self) -> Optional[int]:
        """Largest support point, or None for unbounded support."""
        return None

    def table(self):
        """(values, probs) for finite-support laws."""
        raise NotImplementedError

    def raw_moment(self, m: int) -> MomentValue:
        raise NotImplementedError

    def alpha_finite(self, alpha: float) -> bool:
        return True

    def positive_prob(self) -> bool:
        raise NotImplementedError

    def mean(self) -> MomentValue:
        return self.raw_moment(1)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        raise NotImplementedError

    def kernel_params(self):
        """(a, b) numeric parameters for the compiled samplers."""
        return 0.0, 0.0


@dataclass(frozen=True)
class Deterministic(ScalarLaw):
    c: int
    family: ClassVar[str] = "deterministic"
    code: ClassVar[int] = 0

    def __post_init__(self):
        if int(self.c) != self.c or self.c < 0:
            raise ConfigError(f"deterministic value must be a nonnegative integer, got {self.c}", "c")
        object.__setattr__(self, "c", int(self.c))

    def params(self):
        return {"c": self.c}

    def max_support(self):
        return self.c

    def table(self):
        return np.array([self.c]), np.array([1.0])

    def raw_moment(self, m):
        return MomentValue(float(self.c) ** m)

    def positive_prob(self):
        return self.c > 0

    def sample(self, rng, size):
        return np.full(size, self.c, dtype=np.int64)

    def kernel_params(self):
        return float(self.c), 0.0


def _check_prob(p, name="p"):
    if not (0.0 <= p <= 1.0) or not math.isfinite(p):
        raise ConfigError(f"probability must lie in [0, 1], got {p}", name)


@dataclass(frozen=True)
class Bernoulli(ScalarLaw):
    p: float
    family: ClassVar[str] = "bernoulli"
    code: ClassVar[int] = 1

    def __post_init__(self):
        _check_prob(self.p)

    def params(self):
        return {"p": self.p}

    def max_support(self):
        return 1

    def table(self):
        return np.array([0, 1]), np.array([1.0 - self.p, self.p])

    def raw_moment(self, m):
        return MomentValue(1.0 if m == 0 else float(self.p))

    def positive_prob(self):
        return self.p > 0

    def sample(self, rng, size):
        return (rng.random(size) < self.p).astype(np.int64)

    def kernel_params(self):
        return float(self.p), 0.0


@dataclass(frozen=True)
class Binomial(ScalarLaw):
    n: int
    p: float
    family: ClassVar[str] = "binomial"
    code: ClassVar[int] = 2

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 0:
            raise ConfigError(f"binomial n must be a nonnegative integer, got {self.n}", "n")
        object.__setattr__(self, "n", int(self.n))
        _check_prob(self.p)

    def params(self):
        return {"n": self.n, "p": self.p}

    def max_support(self):
        return self.n

    def table(self):
        v = np.arange(self.n + 1)
        return v, stats.binom.pmf(v, self.n, self.p)

    def raw_moment(self, m):
        n, p = self.n, self.p
        return MomentValue(_raw_from_factorial(m, lambda k: math.perm(n, k) * p**k))

    def positive_prob(self):
        return self.n > 0 and self.p > 0

    def sample(self, rng, size):
        return rng.binomial(self.n, self.p, size).astype(np.int64)

    def kernel_params(self):
        return float(self.n), float(self.p)


@dataclass(frozen=True)
class Poisson(ScalarLaw):
    lam: float
    family: ClassVar[str] = "poisson"
    code: ClassVar[int] = 3

    def __post_init__(self):
        if not (self.lam >= 0 and math.isfinite(self.lam)):
            raise ConfigError(f"poisson rate must be finite and >= 0, got {self.lam}", "lam")

    def params(self):
        return {"lam": self.lam}

    def max_support(self):
        return 0 if self.lam == 0 else None

    def table(self):
        return np.array([0]), np.array([1.0])

    def pmf(self, ns):
        return stats.poisson.pmf(ns, self.lam)

    def sf(self, n):
        return float(stats.poisson.sf(n, self.lam))

    def term_ratio(self, n):
        # p(n+1) / p(n), nonincreasing in n
        return self.lam / (n + 1)

    def raw_moment(self, m):
        return MomentValue(_raw_from_factorial(m, lambda k: self.lam**k))

    def positive_prob(self):
        return self.lam > 0

    def sample(self, rng, size):
        return rng.poisson(self.lam, size).astype(np.int64)

    def kernel_params(self):
        return float(self.lam), 0.0


@dataclass(frozen=True)
class Geometric(ScalarLaw):
    """Failures before the first success: support {0, 1, ...}, mean (1 - p) / p."""

    p: float
    family: ClassVar[str] = "geometric"
    code: ClassVar[int] = 4

    def __post_init__(self):
        _check_prob(self.p)
        if self.p == 0:
            raise ConfigError("geometric success probability must be > 0", "p")

    def params(self):
        return {"p": self.p}

    def max_support(self):
        return 0 if self.p == 1 else None

    def table(self):
        return np.array([0]), np.array([1.0])

    def pmf(self, ns):
        ns = np.asarray(ns, dtype=float)
        return self.p * np.power(1.0 - self.p, ns)

    def sf(self, n):
        return float((1.0 - self.p) ** (n + 1))

    def term_ratio(self, n):
        return 1.0 - self.p

    def raw_moment(self, m):
        q = (1.0 - self.p) / self.p
        return MomentValue(_raw_from_factorial(m, lambda k: math.factorial(k) * q**k))

    def positive_prob(self):
        return self.p < 1

    def sample(self, rng, size):
        return (rng.geometric(self.p, size) - 1).astype(np.int64)

    def kernel_params(self):
        return float(self.p), 0.0


@dataclass(frozen=True)
class DiscretePareto(ScalarLaw):
    """P(X >= n) = n^(-beta) for integers n >= 1; sampled as floor(U^(-1/beta))."""

    beta: float
    family: ClassVar[str] = "discrete_pareto"
    code: ClassVar[int] = 5

    def __post_init__(self):
        if not (self.beta > 0 and math.isfinite(self.beta)):
            raise ConfigError(f"pareto tail exponent must be > 0, got {self.beta}", "beta")

    def params(self):
        return {"beta": self.beta}

    def table(self):
        raise NotImplementedError

    def pmf(self, ns):
        ns = np.asarray(ns, dtype=float)
        with np.errstate(divide="ignore"):
            out = -np.expm1(-self.beta * np.log1p(1.0 / ns)) * np.power(ns, -self.beta)
        return np.where(ns >= 1, out, 0.0)

    def sf(self, n):
        return float((n + 1.0) ** (-self.beta)) if n >= 0 else 1.0

    def alpha_finite(self, alpha):
        return alpha < self.beta

    def raw_moment(self, m):
        if m == 0:
            return MomentValue(1.0)
        if m >= self.beta:
            return INFINITE
        # n^m - (n-1)^m expanded in powers of n, then summed against n^-beta
        total = 0.0
        for i in range(m):
            total += math.comb(m, i) * (-1) ** (m - i + 1) * float(special.zeta(self.beta - i, 1))
        return MomentValue(total)

    def positive_prob(self):
        return True

    def sample(self, rng, size):
        u = 1.0 - rng.random(size)
        return np.floor(u ** (-1.0 / self.beta))

    def kernel_params(self):
        return float(self.beta), 0.0


@dataclass(frozen=True)
class FinitePMF(ScalarLaw):
    values: tuple
    probs: tuple
    family: ClassVar[str] = "finite_pmf"
    code: ClassVar[int] = 6

    def __post_init__(self):
        vals = tuple(int(v) for v in self.values)
        probs = tuple(float(p) for p in self.probs)
        if len(vals) == 0 or len(vals) != len(probs):
            raise ConfigError("finite pmf needs matching nonempty value and probability lists", "pmf")
        if any(v != w for v, w in zip(vals, self.values)) or min(vals) < 0:
            raise ConfigError("finite pmf support must be nonnegative integers", "pmf")
        if any(p < 0 or not math.isfinite(p) for p in probs):
            raise ConfigError("finite pmf probabilities must be nonnegative", "pmf")
        if abs(sum(probs) - 1.0) > PMF_SUM_TOL:
            raise ConfigError(f"finite pmf probabilities sum to {sum(probs)!r}, not 1", "pmf")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "probs", probs)

    def params(self):
        return {"pmf": [[v, p] for v, p in zip(self.values, self.probs)]}

    def max_support(self):
        return max(v for v, p in zip(self.values, self.probs) if p > 0)

    def table(self):
        return np.array(self.values), np.array(self.probs)

    def raw_moment(self, m):
        v, p = self.table()
        return MomentValue(float(np.sum(p * v.astype(float) ** m)))

    def positive_prob(self):
        return any(v > 0 and p > 0 for v, p in zip(self.values, self.probs))

    def sample(self, rng, size):
        v, p = self.table()
        cum = np.cumsum(p)
        cum[-1] = 1.0
        idx = np.searchsorted(cum, rng.random(size), side="right")
        return v[np.minimum(idx, len(v) - 1)].astype(np.int64)


SCALAR_FAMILIES = {
    cls.family: cls for cls in (Deterministic, Bernoulli, Binomial, Poisson, Geometric, DiscretePareto, FinitePMF)
}


# ---------------------------------------------------------------------------
# vector laws


@dataclass(frozen=True)
class IndependentComponents:
    components: tuple

    def __post_init__(self):
        comps = tuple(self.components)
        if not comps or not all(isinstance(c, ScalarLaw) for c in comps):
            raise ConfigError("independent law needs a nonempty list of scalar laws", "components")
        object.__setattr__(self, "components", comps)

    @property
    def d(self) -> int:
        return len(self.components)


@dataclass(frozen=True)
class JointPMF:
    vectors: np.ndarray = field(compare=False)
    probs: np.ndarray = field(compare=False)

    def __post_init__(self):
        vecs = np.array(self.vectors)
        probs = np.array(self.probs, dtype=float)
        if vecs.ndim != 2 or len(vecs) == 0 or len(vecs) != len(probs):
            raise ConfigError("joint pmf needs a nonempty list of (vector, probability) rows", "rows")
        if not np.all(np.equal(np.mod(vecs, 1), 0)) or np.any(vecs < 0):
            raise ConfigError("joint pmf support vectors must have nonnegative integer entries", "rows")
        if np.any(probs < 0) or not np.all(np.isfinite(probs)):
            raise ConfigError("joint pmf probabilities must be nonnegative", "rows")
        if abs(probs.sum() - 1.0) > PMF_SUM_TOL:
            raise ConfigError(f"joint pmf probabilities sum to {probs.sum()!r}, not 1", "rows")
        vecs = vecs.astype(np.int64)
        vecs.setflags(write=False)
        probs.setflags(write=False)
        object.__setattr__(self, "vectors", vecs)
        object.__setattr__(self, "probs", probs)

    @property
    def d(self) -> int:
        return self.vectors.shape[1]

    def __eq__(self, other):
        return (
            isinstance(other, JointPMF)
            and np.array_equal(self.vectors, other.vectors)
            and np.array_equal(self.probs, other.probs)
        )

    def __hash__(self):
        return hash((self.vectors.tobytes(), self.probs.tobytes()))


VectorLaw = Union[IndependentComponents, JointPMF]


@dataclass(frozen=True)
class OffspringSpec:
    """Law of the offspring vector of a single parent, one entry per parent type."""

    per_type: tuple

    def __post_init__(self):
        per_type = tuple(self.per_type)
        d = len(per_type)
        if d == 0:
            raise ConfigError("offspring spec needs at least one type", "offspring")
        for j, law in enumerate(per_type):
            if law.d != d:
                raise ConfigError(f"offspring law of type {j + 1} has dimension {law.d}, expected {d}", "offspring")
        object.__setattr__(self, "per_type", per_type)

    @property
    def d(self) -> int:
        return len(self.per_type)


def independent(*components) -> IndependentComponents:
    return IndependentComponents(tuple(components))


def joint(rows) -> JointPMF:
    """Build a JointPMF from ``[(vector, prob), ...]`` or a ``{vector: prob}`` mapping."""
    if isinstance(rows, dict):
        rows = list(rows.items())
    return JointPMF(np.array([r[0] for r in rows]), np.array([r[1] for r in rows], dtype=float))


# ---------------------------------------------------------------------------
# sampling


def sample(law: VectorLaw, rng: np.random.Generator, size: Optional[int] = None) -> np.ndarray:
    """Draw from ``law``. Returns shape (d,) when size is None, else (size, d).

    DiscretePareto draws are returned as floats so that huge values are not
    silently wrapped by integer conversion; callers guard before casting.
    """
    n = 1 if size is None else int(size)
    if isinstance(law, JointPMF):
        cum = np.cumsum(law.probs)
        cum[-1] = 1.0
        idx = np.minimum(np.searchsorted(cum, rng.random(n), side="right"), len(cum) - 1)
        out = law.vectors[idx].copy()
    else:
        cols = [c.sample(rng, n) for c in law.components]
        if any(col.dtype.kind == "f" for col in cols):
            out = np.column_stack([col.astype(float) for col in cols])
        else:
            out = np.column_stack(cols)
    return out[0] if size is None else out


# ---------------------------------------------------------------------------
# moments


def _components(law: VectorLaw):
    return law.components if isinstance(law, IndependentComponents) else None


def mean_vector(law: VectorLaw) -> list:
    if isinstance(law, JointPMF):
        return [MomentValue(float(x)) for x in law.probs @ law.vectors.astype(float)]
    return [c.mean() if c.alpha_finite(1.0) else INFINITE for c in law.components]


def alpha_finite(law: VectorLaw, alpha: float) -> bool:
    if isinstance(law, JointPMF):
        return True
    return all(c.alpha_finite(alpha) for c in law.components)


def can_be_positive(law: VectorLaw) -> np.ndarray:
    """Per-coordinate flag: P(V_j > 0) > 0."""
    if isinstance(law, JointPMF):
        return np.any((law.vectors > 0) & (law.probs[:, None] > 0), axis=0)
    return np.array([c.positive_prob() for c in law.components])


def norm_raw_moment(law: VectorLaw, m: int) -> MomentValue:
    """E ||V||^m for a nonnegative integer m."""
    if m == 0:
        return MomentValue(1.0)
    if isinstance(law, JointPMF):
        s = law.vectors.sum(axis=1).astype(float)
        return MomentValue(float(np.sum(law.probs * s**m)))
    if not alpha_finite(law, m):
        return INFINITE
    kappa = np.zeros(m)
    for c in law.components:
        raw = [float(c.raw_moment(i)) for i in range(m + 1)]
        kappa += np.array(raw_to_cumulants(raw))
    return MomentValue(float(cumulants_to_raw(list(kappa))[m]))


def norm_cumulants(law: VectorLaw, m: int) -> list:
    """First m cumulants of ||V||; raises ValueError when a moment is infinite."""
    raw = []
    for i in range(m + 1):
        v = norm_raw_moment(law, i)
        if v.infinite:
            raise ValueError(f"moment of order {i} is infinite")
        raw.append(float(v))
    return raw_to_cumulants(raw)


def _scalar_tail(law: ScalarLaw, alpha: float, N: int):
    """(P(X > N), upper bound on E[X^alpha; X > N])."""
    ms = law.max_support()
    if ms is not None and ms <= N:
        return 0.0, 0.0
    if isinstance(law, DiscretePareto):
        return law.sf(N), _pareto_tail_alpha(law.beta, alpha, N)
    if hasattr(law, "term_ratio"):
        n1 = N + 1
        t1 = float(law.pmf(n1)) * n1**alpha
        q = law.term_ratio(n1) * (1.0 + 1.0 / n1) ** alpha
        if q >= 1.0:
            return law.sf(N), math.inf
        return law.sf(N), t1 / (1.0 - q)
    # finite support larger than N
    v, p = law.table()
    sel = v > N
    return float(p[sel].sum()), float(np.sum(p[sel] * v[sel].astype(float) ** alpha))


def _pareto_tail_alpha(beta: float, alpha: float, N: int, max_terms: int = 60) -> float:
    """sum_{n > N} n^alpha P(X = n) for the discrete Pareto law, plus truncation slack.

    Uses n^alpha p(n) = sum_t (-1)^(t+1) (beta)_t / t! n^(alpha-beta-t) and
    Hurwitz zeta sums over n > N; the alternating series is truncated once the
    next term is negligible and that term is added as slack.
    """
    if alpha >= beta:
        return math.inf
    total = 0.0
    coef = 1.0
    for t in range(1, max_terms + 1):
        coef *= (beta + t - 1) / t
        term = coef * float(special.zeta(t + beta - alpha, N + 1))
        if t % 2 == 0:
            term = -term
        total += term
        if abs(term) < 1e-17 * abs(total):
            return total + abs(term)
    return total + abs(term)


def _scalar_alpha_moment(law: ScalarLaw, alpha: float) -> float:
    ms = law.max_support()
    if ms is not None:
        v, p = law.table()
        return float(np.sum(p * v.astype(float) ** alpha))
    if isinstance(law, DiscretePareto):
        N = 2048
        ns = np.arange(1, N + 1, dtype=float)
        return float(np.sum(ns**alpha * law.pmf(ns))) + _pareto_tail_alpha(law.beta, alpha, N)
    mean = float(law.mean())
    N = max(64, int(4 * mean) + 16)
    while N <= TERM_BUDGET:
        ns = np.arange(0, N + 1, dtype=float)
        partial = float(np.sum(ns**alpha * law.pmf(ns)))
        _, tail = _scalar_tail(law, alpha, N)
        if tail <= MOMENT_REL_TOL * partial or (partial == 0.0 and tail == 0.0):
            return partial + tail
        N *= 2
    raise TruncationBudgetExceeded(f"could not certify E X^{alpha} for {law} within {TERM_BUDGET} terms")


def _truncated_pmf(law: ScalarLaw, N: int) -> np.ndarray:
    """pmf on {0..N} (sub-probability if the support extends past N)."""
    ms = law.max_support()
    if ms is not None:
        v, p = law.table()
        out = np.zeros(min(ms, N) + 1)
        sel = v <= N
        np.add.at(out, v[sel], p[sel])
        return out
    return np.asarray(law.pmf(np.arange(N + 1, dtype=float)), dtype=float)


def _convolve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if len(a) * len(b) <= 10**7:
        return np.convolve(a, b)
    from scipy.signal import fftconvolve

    return np.clip(fftconvolve(a, b), 0.0, None)


def norm_pmf(law: VectorLaw, caps: Optional[Sequence[int]] = None) -> np.ndarray:
    """pmf of ||V|| on {0, 1, ...}; infinite-support components are truncated at ``caps``."""
    if isinstance(law, JointPMF):
        s = law.vectors.sum(axis=1)
        out = np.zeros(int(s.max()) + 1)
        np.add.at(out, s, law.probs)
        return out
    out = np.array([1.0])
    for i, c in enumerate(law.components):
        cap = c.max_support() if caps is None else caps[i]
        out = _convolve(out, _truncated_pmf(c, cap))
    return out


def alpha_moment(law: VectorLaw, alpha: float, numeric: bool = True) -> MomentValue:
    """E ||V||^alpha with an Infinite flag from the analytic criterion.

    With ``numeric=False`` only the finite/infinite classification is returned
    for laws that would need a truncated series.
    """
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    if not alpha_finite(law, alpha):
        return INFINITE
    if isinstance(law, JointPMF):
        s = law.vectors.sum(axis=1).astype(float)
        return MomentValue(float(np.sum(law.probs * s**alpha)))
    comps = law.components
    if all(c.max_support() is not None for c in comps):
        p = norm_pmf(law)
        return MomentValue(float(np.sum(p * np.arange(len(p), dtype=float) ** alpha)))
    if float(alpha).is_integer() and alpha <= 8:
        return norm_raw_moment(law, int(alpha))
    if not numeric:
        return MomentValue(None)
    unbounded = [c for c in comps if c.max_support() is None]
    bounded = [c for c in comps if c.max_support() is not None]
    if len(unbounded) == 1 and all(c.max_support() == 0 for c in bounded):
        return MomentValue(_scalar_alpha_moment(unbounded[0], alpha))
    return MomentValue(_mixed_alpha_moment(comps, alpha))


def _mixed_alpha_moment(comps, alpha: float) -> float:
    """E (sum of independent components)^alpha by truncated convolution.

    The neglected part E[S^alpha; some X_l > N_l] is bounded by
    sum_l c (E[X_l^alpha; X_l > N_l] + E[R_l^alpha] P(X_l > N_l)) with
    R_l = S - X_l and c = max(1, 2^(alpha-1)). The returned partial sum plus
    that bound is an upper bound within MIXED_REL_TOL of the true value.
    """
    single = [_scalar_alpha_moment(c, alpha) for c in comps]
    c_alpha = max(1.0, 2.0 ** (alpha - 1.0))
    N = 256
    while N <= TERM_BUDGET:
        caps = [min(N, c.max_support()) if c.max_support() is not None else N for c in comps]
        p = norm_pmf(IndependentComponents(comps), caps)
        partial = float(np.sum(p * np.arange(len(p), dtype=float) ** alpha))
        slack = 0.0
        for i, c in enumerate(comps):
            tail_mass, tail_alpha = _scalar_tail(c, alpha, caps[i])
            rest = [single[j] for j in range(len(comps)) if j != i]
            if alpha <= 1:
                rest_bound = sum(rest)
            else:
                rest_bound = sum(x ** (1.0 / alpha) for x in rest) ** alpha
            slack += c_alpha * (tail_alpha + rest_bound * tail_mass)
        if slack <= MIXED_REL_TOL * partial:
            return partial + slack
        N *= 4
    raise TruncationBudgetExceeded(f"could not certify the order-{alpha} moment within {TERM_BUDGET} terms")


def mean_matrix(spec: OffspringSpec) -> MeanMatrix:
    rows = []
    for j, law in enumerate(spec.per_type):
        mv = mean_vector(law)
        if any(m.infinite for m in mv):
            raise InfiniteOffspringMean(f"offspring law of type {j + 1} has an infinite mean component")
        rows.append([float(m) for m in mv])
    return MeanMatrix(rows)


# ---------------------------------------------------------------------------
# (de)serialization of the config schema


def scalar_from_dict(obj: dict, where: str = "law") -> ScalarLaw:
    if not isinstance(obj, dict) or "family" not in obj:
        raise ConfigError("expected a mapping with a 'family' key", where)
    fam = obj["family"]
    cls = SCALAR_FAMILIES.get(fam)
    if cls is None:
        raise ConfigError(f"unknown family {fam!r}; expected one of {sorted(SCALAR_FAMILIES)}", where)
    params = {k: v for k, v in obj.items() if k != "family"}
    try:
        if cls is FinitePMF:
            rows = params.pop("pmf")
            if params:
                raise TypeError(f"unexpected parameters {sorted(params)}")
            return FinitePMF(tuple(r[0] for r in rows), tuple(r[1] for r in rows))
        return cls(**params)
    except ConfigError as exc:
        raise ConfigError(str(exc), where) from None
    except (TypeError, KeyError, IndexError, ValueError) as exc:
        raise ConfigError(f"bad parameters for {fam}: {exc}", where) from None


def scalar_to_dict(law: ScalarLaw) -> dict:
    return {"family": law.family, **law.params()}


def vector_from_dict(obj, d: int, where: str = "law") -> VectorLaw:
    if isinstance(obj, dict) and "family" in obj:
        if d != 1:
            raise ConfigError(f"a bare scalar law is only allowed when d = 1 (d = {d})", where)
        return IndependentComponents((scalar_from_dict(obj, where),))
    if not isinstance(obj, dict) or "kind" not in obj:
        raise ConfigError("expected a mapping with kind: independent | joint", where)
    kind = obj["kind"]
    if kind == "independent":
        comps = obj.get("components")
        if not isinstance(comps, list) or len(comps) != d:
            raise ConfigError(f"independent law needs exactly d = {d} components", f"{where}.components")
        return IndependentComponents(
            tuple(scalar_from_dict(c, f"{where}.components[{i}]") for i, c in enumerate(comps))
        )
    if kind == "joint":
        rows = obj.get("rows")
        if not isinstance(rows, list) or not rows:
            raise ConfigError("joint law needs a nonempty list of [vector, probability] rows", f"{where}.rows")
        try:
            law = joint([(list(r[0]), float(r[1])) for r in rows])
        except ConfigError as exc:
            raise ConfigError(str(exc), f"{where}.rows") from None
        except (TypeError, IndexError, ValueError) as exc:
            raise ConfigError(f"malformed rows: {exc}", f"{where}.rows") from None
        if law.d != d:
            raise ConfigError(f"joint law vectors have dimension {law.d}, expected {d}", f"{where}.rows")
        return law
    raise ConfigError(f"unknown law kind {kind!r}", f"{where}.kind")


def vector_to_dict(law: VectorLaw) -> dict:
    if isinstance(law, JointPMF):
        return {
            "kind": "joint",
            "rows": [[[int(x) for x in v], float(p)] for v, p in zip(law.vectors, law.probs)],
        }
    return {"kind": "independent", "components": [scalar_to_dict(c) for c in law.components]}
