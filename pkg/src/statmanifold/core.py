"""Parametric-family abstraction and generic likelihood numerics.

A :class:`ModelFamily` bundles a log density, a sampler, the open
parameter domain and (optionally) analytic score / Fisher callables.
Everything downstream -- metrics, distances, curvature, volumes -- is
built on the three operations defined here: the score vector, the
Fisher information matrix as the expected outer product of scores, and
the cross-check of that definition against the negative expected
Hessian.

Expectations over the sample space are exact whenever the space is a
finite enumeration (or the family ships a quadrature rule, as the
normals do); otherwise they fall back to seeded Monte Carlo with a
reported standard error.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from . import _numdiff

__all__ = [
    "DomainError",
    "ZeroDensityError",
    "SupportError",
    "SingularMetricError",
    "QuadratureError",
    "RankDeficiencyWarning",
    "FiniteSampleSpace",
    "ContinuousSampleSpace",
    "CountableSampleSpace",
    "Dataset",
    "as_dataset",
    "ModelFamily",
    "expect",
    "score",
    "numeric_fisher",
    "check_identity",
    "IdentityReport",
    "ENUMERATION_LIMIT",
    "DEFAULT_MC_DRAWS",
]

ENUMERATION_LIMIT = 2**20
DEFAULT_MC_DRAWS = 10**6

# Relative eigenvalue threshold below which the Fisher matrix is
# reported as rank deficient (regularity violation).
RANK_TOLERANCE = 1e-10


class DomainError(ValueError):
    """Parameter vector outside (or on the boundary of) the open domain."""


class ZeroDensityError(ValueError):
    """Log density is -inf at the requested point (zero-probability observation)."""


class SupportError(ValueError):
    """Two distributions do not share a common support."""


class SingularMetricError(ArithmeticError):
    """Metric (or Jacobian) is singular where an inverse is required."""


class QuadratureError(RuntimeError):
    """Adaptive quadrature failed to reach the requested tolerance.

    The achieved error estimate is carried in :attr:`achieved`.
    """

    def __init__(self, message: str, achieved: float):
        super().__init__(f"{message} (achieved error estimate {achieved:.3e})")
        self.achieved = achieved


class RankDeficiencyWarning(UserWarning):
    """Fisher information is numerically rank deficient."""


# --------------------------------------------------------------------- #
# Sample spaces and data
# --------------------------------------------------------------------- #


@dataclass(frozen=True)
class FiniteSampleSpace:
    """Finite enumeration of the sample space.

    ``points`` must iterate over every possible observation; expectations
    over this space are computed exactly.
    """

    points: Sequence[Any]

    @property
    def size(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class ContinuousSampleSpace:
    dim: int


@dataclass(frozen=True)
class CountableSampleSpace:
    """Countably infinite support (no exact enumeration available)."""


@dataclass(frozen=True)
class Dataset:
    """Ordered collection of observations from a family's sample space."""

    observations: Any

    def __post_init__(self):
        if len(self.observations) < 1:
            raise ValueError("a Dataset needs at least one observation")

    @property
    def n(self) -> int:
        return len(self.observations)

    def __iter__(self):
        return iter(self.observations)

    def __len__(self) -> int:
        return len(self.observations)


def as_dataset(data: Any) -> Dataset:
    return data if isinstance(data, Dataset) else Dataset(data)


# --------------------------------------------------------------------- #
# Model family
# --------------------------------------------------------------------- #


@dataclass(frozen=True)
class ModelFamily:
    """A regular parametric family of distributions.

    Parameters
    ----------
    name : str
        Identifier used in reports and model-spec files.
    dim_k : int
        Number of free parameters.
    domain : tuple of (low, high)
        Open interval per coordinate; +-inf allowed.  Boundary values are
        rejected, never clamped (the Fisher metric typically degenerates
        there).
    log_density : callable(y, theta) -> float
    sampler : callable(theta, rng, size) -> observations
        Leading axis of the result indexes the ``size`` draws.
    sample_space : FiniteSampleSpace | ContinuousSampleSpace | CountableSampleSpace
    analytic_fisher : callable(theta) -> (k, k) array, optional
    analytic_score : callable(y, theta) -> (k,) array, optional
    analytic_kl : callable(theta0, theta1) -> float, optional
        Closed-form Kullback-Leibler divergence when the family has one.
    quadrature_rule : callable(theta) -> (points, weights), optional
        Deterministic rule such that ``sum(w_i * f(y_i))`` equals
        ``E[f(y)]`` to near machine precision (e.g. Gauss-Hermite for
        normals).  Used in place of Monte Carlo when present.
    constraint : callable(theta) -> bool, optional
        Joint domain restriction beyond the per-coordinate intervals
        (e.g. multinomial probabilities summing below one).
    default_start : callable(Dataset) -> theta, optional
        Family-specific starting value for maximum likelihood.
    """

    name: str
    dim_k: int
    domain: tuple
    log_density: Callable[[Any, np.ndarray], float]
    sampler: Callable[..., Any]
    sample_space: Any
    analytic_fisher: Callable[[np.ndarray], np.ndarray] | None = None
    analytic_score: Callable[[Any, np.ndarray], np.ndarray] | None = None
    analytic_kl: Callable[[np.ndarray, np.ndarray], float] | None = None
    quadrature_rule: Callable[[np.ndarray], tuple] | None = None
    constraint: Callable[[np.ndarray], bool] | None = None
    default_start: Callable[[Dataset], np.ndarray] | None = None
    meta: dict = field(default_factory=dict)

    def check_interior(self, theta: np.ndarray) -> np.ndarray:
        """Validate and return theta as a float array strictly inside the domain."""
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        if theta.shape != (self.dim_k,):
            raise DomainError(
                f"{self.name}: expected {self.dim_k} parameters, got shape {theta.shape}"
            )
        if not np.all(np.isfinite(theta)):
            raise DomainError(f"{self.name}: non-finite parameter value {theta}")
        for i, (lo, hi) in enumerate(self.domain):
            if not (lo < theta[i] < hi):
                raise DomainError(
                    f"{self.name}: parameter {i} = {theta[i]} outside open interval "
                    f"({lo}, {hi})"
                )
        if self.constraint is not None and not self.constraint(theta):
            raise DomainError(f"{self.name}: joint domain constraint violated at {theta}")
        return theta


# --------------------------------------------------------------------- #
# Expectations
# --------------------------------------------------------------------- #


def _enumeration_terms(model: ModelFamily, theta: np.ndarray):
    """Yield (probability, observation) pairs over a finite sample space."""
    for y in model.sample_space.points:
        yield math.exp(model.log_density(y, theta)), y


def expect(model: ModelFamily, theta: np.ndarray, fn: Callable[[Any], Any], *,
           seed: int = 0, n_draws: int | None = None, with_se: bool = False):
    """Expectation of ``fn(y)`` under ``p(y | theta)``.

    Exact enumeration for finite spaces up to ``ENUMERATION_LIMIT`` points,
    the family quadrature rule if one is available, otherwise seeded Monte
    Carlo.  Returns the expectation, or ``(expectation, se)`` when
    ``with_se`` is true (``se`` is ``None`` for the deterministic routes).
    """
    theta = model.check_interior(theta)
    space = model.sample_space
    if isinstance(space, FiniteSampleSpace) and space.size <= ENUMERATION_LIMIT:
        total = None
        for p, y in _enumeration_terms(model, theta):
            term = p * np.asarray(fn(y), dtype=float)
            total = term if total is None else total + term
        return (total, None) if with_se else total
    if model.quadrature_rule is not None:
        points, weights = model.quadrature_rule(theta)
        total = None
        for w, y in zip(weights, points):
            term = w * np.asarray(fn(y), dtype=float)
            total = term if total is None else total + term
        return (total, None) if with_se else total
    n = DEFAULT_MC_DRAWS if n_draws is None else int(n_draws)
    rng = np.random.default_rng(seed)
    draws = model.sampler(theta, rng, n)
    vals = np.stack([np.asarray(fn(draws[i]), dtype=float) for i in range(n)])
    mean = vals.mean(axis=0)
    if with_se:
        se = vals.std(axis=0, ddof=1) / math.sqrt(n)
        return mean, se
    return mean


# --------------------------------------------------------------------- #
# Score, Fisher information, identity check
# --------------------------------------------------------------------- #


def score(model: ModelFamily, theta: np.ndarray, y: Any) -> np.ndarray:
    """Gradient of the log density with respect to the parameters.

    Analytic when the family supplies it, otherwise central finite
    differences on the log density.
    """
    theta = model.check_interior(theta)
    lp = model.log_density(y, theta)
    if not np.isfinite(lp):
        raise ZeroDensityError(
            f"{model.name}: log density is {lp} at theta={theta} for observation {y!r}"
        )
    if model.analytic_score is not None:
        return np.asarray(model.analytic_score(y, theta), dtype=float)
    return _numdiff.gradient(lambda t: model.log_density(y, t), theta)


def _warn_if_rank_deficient(g: np.ndarray, name: str) -> None:
    eigvals = np.linalg.eigvalsh(g)
    if eigvals[0] < RANK_TOLERANCE * max(eigvals[-1], 0.0):
        warnings.warn(
            f"{name}: Fisher information numerically rank deficient "
            f"(eigenvalues {eigvals}); the model is not regular here",
            RankDeficiencyWarning,
            stacklevel=3,
        )


def numeric_fisher(model: ModelFamily, theta: np.ndarray, *, seed: int = 0,
                   n_draws: int | None = None, with_se: bool = False):
    """Fisher information as ``E[score score^T]``, symmetrized.

    Exact for enumerable spaces, Gauss-type quadrature when the family
    provides a rule, else seeded Monte Carlo.  With ``with_se`` the
    entrywise Monte Carlo standard error matrix is returned alongside
    (``None`` on the deterministic routes).
    """
    theta = model.check_interior(theta)

    def outer(y):
        s = score(model, theta, y)
        return np.outer(s, s)

    g, se = expect(model, theta, outer, seed=seed, n_draws=n_draws, with_se=True)
    g = 0.5 * (g + g.T)
    _warn_if_rank_deficient(g, model.name)
    return (g, se) if with_se else g


@dataclass(frozen=True)
class IdentityReport:
    """Agreement between the two Fisher information definitions."""

    fisher_outer: np.ndarray
    fisher_neg_hessian: np.ndarray
    max_abs_deviation: float


def check_identity(model: ModelFamily, theta: np.ndarray, *, seed: int = 0,
                   n_draws: int | None = None) -> IdentityReport:
    """Compare ``E[score score^T]`` with ``-E[Hessian log p]``.

    The Hessian is the differentiated analytic score when the family has
    one (first-order differences carry far less round-off than second
    differences of the log density).
    """
    theta = model.check_interior(theta)
    g_outer = numeric_fisher(model, theta, seed=seed, n_draws=n_draws)

    if model.analytic_score is not None:
        def neg_hess(y):
            # one Richardson step on the score Jacobian kills the O(h^2) term
            steps = _numdiff.first_order_steps(theta)
            full = _numdiff.jacobian(lambda t: model.analytic_score(y, t), theta,
                                     steps=steps)
            half = _numdiff.jacobian(lambda t: model.analytic_score(y, t), theta,
                                     steps=0.5 * steps)
            return -(4.0 * half - full) / 3.0
    else:
        def neg_hess(y):
            return -_numdiff.hessian(lambda t: model.log_density(y, t), theta)

    g_hess = expect(model, theta, neg_hess, seed=seed, n_draws=n_draws)
    g_hess = 0.5 * (g_hess + g_hess.T)
    dev = float(np.max(np.abs(g_outer - g_hess)))
    return IdentityReport(g_outer, g_hess, dev)
