"""Maximum likelihood with gradient ascent, Newton-Raphson and Fisher
scoring, plus Riemannian volume elements and Jeffreys priors.

All three optimizers share one iteration ``theta <- theta + a C(theta)
grad``, differing only in the direction matrix C: the identity, the
inverse observed information, or the inverse Fisher information (the
natural-gradient direction).  Steps are halved until the log likelihood
does not decrease.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import _numdiff
from .core import (
    Dataset,
    DomainError,
    ModelFamily,
    SingularMetricError,
    as_dataset,
    numeric_fisher,
    score,
)
from .geometry import MetricField
from .quadrature import adaptive_simpson, tanh_sinh

__all__ = [
    "OptimizerConfig",
    "FitResult",
    "maximize",
    "fit_mle",
    "observed_information",
    "natural_gradient_direction",
    "volume_element",
    "jeffreys_prior",
    "jeffreys_normalization",
    "NormalizationReport",
]

_METHODS = ("gradient-ascent", "newton-raphson", "fisher-scoring")


@dataclass(frozen=True)
class OptimizerConfig:
    method: str = "fisher-scoring"
    step: float = 1.0
    tol_grad: float = 1e-10
    max_iter: int = 500
    max_halvings: int = 30

    def __post_init__(self):
        if self.method not in _METHODS:
            raise ValueError(f"method must be one of {_METHODS}")
        if self.tol_grad <= 0 or self.max_iter < 1:
            raise ValueError("tol_grad must be positive and max_iter >= 1")


@dataclass
class FitResult:
    theta: np.ndarray
    loglik: float
    iterations: int
    converged: bool
    grad_norm: float
    n_fallback_steps: int = 0
    loglik_trace: list = field(default_factory=list)


def _direction(method: str, grad: np.ndarray,
               info: Callable[[], np.ndarray] | None) -> tuple[np.ndarray, bool]:
    """Ascent direction and whether a fallback to the plain gradient occurred."""
    if method == "gradient-ascent" or info is None:
        return grad, False
    try:
        matrix = info()
        d = np.linalg.solve(matrix, grad)
    except np.linalg.LinAlgError:
        return grad, True
    if not np.all(np.isfinite(d)) or float(d @ grad) <= 0.0:
        # singular or non-ascent curvature matrix: take the safe gradient step
        return grad, True
    return d, False


def maximize(loglik: Callable[[np.ndarray], float],
             grad: Callable[[np.ndarray], np.ndarray],
             theta0: np.ndarray,
             config: OptimizerConfig | None = None, *,
             observed_info: Callable[[np.ndarray], np.ndarray] | None = None,
             expected_info: Callable[[np.ndarray], np.ndarray] | None = None) -> FitResult:
    """Iterate ``theta + a C grad`` with step halving on decrease.

    ``observed_info`` / ``expected_info`` provide the Newton-Raphson and
    Fisher-scoring direction matrices; out-of-domain proposals must make
    ``loglik`` raise :class:`DomainError` (treated as minus infinity).
    """
    config = config or OptimizerConfig()
    theta = np.atleast_1d(np.asarray(theta0, dtype=float)).copy()

    def safe_ll(t):
        try:
            v = loglik(t)
        except (DomainError, FloatingPointError, np.linalg.LinAlgError):
            return -math.inf
        return v if np.isfinite(v) else -math.inf

    current = safe_ll(theta)
    if not np.isfinite(current):
        raise DomainError("objective is not finite at the starting value")

    trace = [current]
    n_fallback = 0
    iterations = 0
    gvec = np.asarray(grad(theta), dtype=float)
    gnorm = float(np.linalg.norm(gvec))

    while iterations < config.max_iter and gnorm > config.tol_grad:
        iterations += 1
        if config.method == "newton-raphson" and observed_info is not None:
            info = lambda: observed_info(theta)  # noqa: E731
        elif config.method == "fisher-scoring" and expected_info is not None:
            info = lambda: expected_info(theta)  # noqa: E731
        else:
            info = None
        d, fell_back = _direction(config.method, gvec, info)
        n_fallback += fell_back

        # increments below this are indistinguishable from rounding noise
        slack = 8.0 * np.finfo(float).eps * max(1.0, abs(current))
        alpha = config.step
        accepted = False
        for _ in range(config.max_halvings + 1):
            candidate = theta + alpha * d
            if np.array_equal(candidate, theta):
                break  # step underflowed; no point halving further
            value = safe_ll(candidate)
            if value >= current + slack:
                theta, current = candidate, value
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            # the objective is flat to rounding near the optimum; accept by
            # gradient-norm contraction instead, allowing a 1-ulp dip in
            # the objective
            alpha = config.step
            for _ in range(config.max_halvings + 1):
                candidate = theta + alpha * d
                value = safe_ll(candidate)
                if value >= current - slack:
                    cnorm = float(np.linalg.norm(np.asarray(grad(candidate), dtype=float)))
                    if cnorm <= 0.99 * gnorm:
                        theta, current = candidate, value
                        accepted = True
                        break
                alpha *= 0.5
        trace.append(current)
        if not accepted:
            break
        gvec = np.asarray(grad(theta), dtype=float)
        gnorm = float(np.linalg.norm(gvec))

    return FitResult(theta=theta, loglik=current, iterations=iterations,
                     converged=gnorm <= config.tol_grad, grad_norm=gnorm,
                     n_fallback_steps=n_fallback, loglik_trace=trace)


def observed_information(model: ModelFamily, data, theta) -> np.ndarray:
    """Negative Hessian of the sample log likelihood.

    Differentiates the analytic score when the family has one (a
    central-difference Jacobian), otherwise takes second differences of
    the log likelihood.
    """
    data = as_dataset(data)
    theta = model.check_interior(theta)
    if model.analytic_score is not None:
        def total_score(t):
            return sum(np.asarray(model.analytic_score(y, t), dtype=float) for y in data)
        H = _numdiff.jacobian(total_score, theta)
    else:
        def total_ll(t):
            return sum(model.log_density(y, t) for y in data)
        H = _numdiff.hessian(total_ll, theta)
    H = 0.5 * (H + H.T)
    return -H


def fit_mle(model: ModelFamily, data, config: OptimizerConfig | None = None,
            theta0=None) -> FitResult:
    """Maximum likelihood for a model family on a dataset."""
    data = as_dataset(data)
    config = config or OptimizerConfig()
    if theta0 is None:
        if model.default_start is None:
            raise ValueError(f"{model.name} has no default start; pass theta0")
        theta0 = model.default_start(data)

    def loglik(t):
        t = model.check_interior(t)
        return float(sum(model.log_density(y, t) for y in data))

    def grad(t):
        return np.sum([score(model, t, y) for y in data], axis=0)

    def expected_info(t):
        g = (model.analytic_fisher(t) if model.analytic_fisher is not None
             else numeric_fisher(model, t))
        return data.n * np.asarray(g, dtype=float)

    return maximize(loglik, grad, theta0, config,
                    observed_info=lambda t: observed_information(model, data, t),
                    expected_info=expected_info)


def fit_cef(spec, data, config: OptimizerConfig | None = None, theta0=None) -> FitResult:
    """Maximum likelihood for a curved-exponential-family spec.

    ``data`` is one observation of the family (or a :class:`Dataset`
    whose stacked observations form one).  Fisher scoring uses the
    induced metric ``J' Psi'' J``; the observed information falls back
    to a finite-difference Jacobian of the analytic score.
    """
    from . import _numdiff as nd

    y = np.asarray(data.observations if isinstance(data, Dataset) else data, dtype=float)
    t_obs = np.asarray(spec.suff_stat(y), dtype=float)
    config = config or OptimizerConfig()
    if theta0 is None:
        if spec.default_start is None:
            raise ValueError(f"{spec.name} has no default start; pass theta0")
        theta0 = spec.default_start(y)

    def eta_jac(theta):
        return (np.asarray(spec.eta_jacobian(theta), dtype=float)
                if spec.eta_jacobian is not None
                else nd.jacobian(spec.eta, theta)).reshape(spec.k, spec.q)

    def loglik(theta):
        theta = spec.check_theta(theta)
        eta = spec.eta(theta)
        return float(eta @ t_obs) - spec.log_partition(eta)

    def grad(theta):
        theta = spec.check_theta(theta)
        eta = spec.eta(theta)
        mean_t = (np.asarray(spec.log_partition_gradient(eta), dtype=float)
                  if spec.log_partition_gradient is not None
                  else nd.gradient(spec.log_partition, eta))
        return eta_jac(theta).T @ (t_obs - mean_t)

    def expected_info(theta):
        eta = spec.eta(theta)
        G = (np.asarray(spec.log_partition_hessian(eta), dtype=float)
             if spec.log_partition_hessian is not None
             else nd.hessian(spec.log_partition, eta))
        J = eta_jac(theta)
        return J.T @ G @ J

    return maximize(loglik, grad, theta0, config,
                    expected_info=expected_info,
                    observed_info=lambda th: -nd.jacobian(grad, th))


def natural_gradient_direction(model: ModelFamily, theta, data=None, grad=None) -> np.ndarray:
    """Steepest-ascent direction on the manifold: ``g(theta)^{-1} grad``.

    Either a dataset (whose score sum is the gradient) or an explicit
    gradient vector must be supplied.  The metric is the per-observation
    Fisher information.
    """
    theta = model.check_interior(theta)
    if grad is None:
        if data is None:
            raise ValueError("pass either data or an explicit gradient")
        grad = np.sum([score(model, theta, y) for y in as_dataset(data)], axis=0)
    grad = np.atleast_1d(np.asarray(grad, dtype=float))
    g = (model.analytic_fisher(theta) if model.analytic_fisher is not None
         else numeric_fisher(model, theta))
    try:
        return np.linalg.solve(g, grad)
    except np.linalg.LinAlgError as exc:
        raise SingularMetricError(f"Fisher metric singular at {theta}") from exc


# --------------------------------------------------------------------- #
# Riemannian volume and Jeffreys priors
# --------------------------------------------------------------------- #


def volume_element(g: MetricField, theta) -> float:
    """Riemannian volume density sqrt(det g(theta))."""
    sign, logdet = np.linalg.slogdet(g(theta))
    if sign <= 0:
        raise SingularMetricError(f"metric is not positive definite at {theta}")
    return math.exp(0.5 * logdet)


def jeffreys_prior(g: MetricField, theta) -> float:
    """Unnormalized Jeffreys density: the volume element of the Fisher metric."""
    return volume_element(g, theta)


@dataclass(frozen=True)
class NormalizationReport:
    proper: bool
    constant: float | None
    box_integrals: tuple
    bounds: tuple


def _box_integral(g: MetricField, box, tol: float) -> float:
    dims = len(box)
    if dims == 1:
        (a, b), = box
        return adaptive_simpson(lambda x: volume_element(g, [x]), a, b,
                                tol=tol, max_depth=48)
    if dims == 2:
        (a, b), (c, d) = box

        def inner(x):
            return adaptive_simpson(lambda y: volume_element(g, [x, y]), c, d,
                                    tol=tol, max_depth=30)

        return adaptive_simpson(inner, a, b, tol=tol * max(1.0, b - a), max_depth=30)
    raise NotImplementedError("normalization integrals implemented for k <= 2")


def jeffreys_normalization(g: MetricField, bounds, *, expansions: int = 6,
                           tol: float = 1e-9,
                           divergence_ratio: float = 1.5) -> NormalizationReport:
    """Decide propriety of the Jeffreys prior and normalize it when proper.

    The volume element is integrated over a sequence of compact boxes
    expanding toward the (open or infinite) domain boundary; the prior is
    declared improper when the last three expansion ratios all exceed
    ``divergence_ratio``.  For a proper 1-D prior the constant is refined
    with double-exponential quadrature on the full open interval.
    """
    bounds = tuple((float(lo), float(hi)) for lo, hi in bounds)

    def box_at(level: int):
        out = []
        grow = 2.0 ** (level + 1)
        for lo, hi in bounds:
            if math.isfinite(lo) and math.isfinite(hi):
                inset = (hi - lo) * 0.25 * 2.0 ** (-level)
                out.append((lo + inset, hi - inset))
            elif math.isfinite(lo):
                # approach the open lower edge while growing toward +inf
                out.append((lo + 1.0 / grow, lo + grow))
            elif math.isfinite(hi):
                out.append((hi - grow, hi - 1.0 / grow))
            else:
                out.append((-grow, grow))
        return tuple(out)

    values = [_box_integral(g, box_at(level), tol) for level in range(expansions)]
    ratios = [hi / lo if lo > 0.0 else math.inf
              for lo, hi in zip(values[:-1], values[1:])]
    improper = len(ratios) >= 3 and all(r > divergence_ratio for r in ratios[-3:])
    if improper:
        return NormalizationReport(False, None, tuple(values), bounds)
    if len(bounds) == 1:
        (a, b), = bounds
        if math.isfinite(a) and math.isfinite(b):
            constant = tanh_sinh(lambda x: volume_element(g, [x]), a, b, tol=1e-9)
        else:
            constant = values[-1]
    else:
        constant = values[-1]
    return NormalizationReport(True, float(constant), tuple(values), bounds)
