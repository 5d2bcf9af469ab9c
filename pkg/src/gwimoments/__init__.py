"""Subcritical multitype Galton-Watson processes with immigration: simulation,
stationary sampling, alpha-moment decay, moment-bound certificates and tail
diagnostics."""
from ._accel import HAS_NUMBA, backend_name
from .analysis import (
    classify_moment,
    decay_analysis,
    estimate_Mk,
    estimate_Mk_sequence,
    fit_decay_rate,
    hill_estimator,
    tail_stability,
)
from .certificate import Budgets, build_certificate, format_report
from .distributions import (
    Bernoulli,
    Binomial,
    Deterministic,
    DiscretePareto,
    FinitePMF,
    Geometric,
    IndependentComponents,
    JointPMF,
    OffspringSpec,
    Poisson,
    alpha_moment,
    independent,
    joint,
    mean_matrix,
)
from .errors import ConfigError, GWIError, RuntimeBudgetError
from .matrix import MeanMatrix, contraction_power, spectral_radius
from .process import (
    GWIModel,
    exact_generation_pmf,
    sample_stationary,
    simulate_batch,
    simulate_trajectory,
    stationary_samples,
    truncation_depth,
)

__version__ = "0.1.0"
