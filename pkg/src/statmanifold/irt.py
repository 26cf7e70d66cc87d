"""Parametrization-invariant ability scales for the Rasch model.

The flattening coordinate turns the one-dimensional ability manifold
into a Euclidean line; its value measured от the low-ability end is the
geodesic ability, an absolute scale with zero at minus infinity and
ceiling pi sqrt(m).  Also provided: the closed form for equal item
difficulties, the Euclidean arc length of the item characteristic
curve, the exponential-family power transforms that contain the
geodesic scale as the variance-stabilizing case, and the delta-method
standard error of the estimated scale (constant in theta by
construction).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .families import CEFSpec, RaschTest, logistic_variance, test_information
from .quadrature import adaptive_simpson

__all__ = [
    "AbilityScale",
    "TRUNCATION_OFFSET",
    "flatten",
    "geodesic_ability",
    "geodesic_ability_closed_form",
    "ramsay_arclength",
    "hougaard_transform",
    "AbilitySE",
    "ability_se",
    "ability_grid",
]

# Lower truncation point for the improper integrals: min(beta) - OFFSET.
# Below it the information integrand is under sqrt(m) e^((x - min beta)/2),
# whose remaining tail integrates to < 1e-9 for any realistic test length.
TRUNCATION_OFFSET = 45.0

_DEFAULT_TOL = 1e-10


def _theta_floor(test: RaschTest) -> float:
    return float(np.min(test.beta)) - TRUNCATION_OFFSET


def _sqrt_info(test: RaschTest):
    def f(x: float) -> float:
        return math.sqrt(test_information(test, x))
    return f


def _chunked_quad(f, a: float, b: float, tol: float, chunk: float = 15.0) -> float:
    """Adaptive quadrature over [a, b] in bounded segments.

    Long ranges with exponentially small integrands can fool a single
    adaptive pass into terminating early; bounded segments keep the
    error estimate honest.
    """
    if a == b:
        return 0.0
    sign = 1.0
    if b < a:
        a, b, sign = b, a, -1.0
    edges = np.arange(a, b, chunk).tolist() + [b]
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        total += adaptive_simpson(f, lo, hi, tol=tol)
    return sign * total


def flatten(test: RaschTest, theta0: float, theta1: float, *,
            tol: float = _DEFAULT_TOL) -> float:
    """Flattening coordinate difference: integral of sqrt(g) over [theta0, theta1].

    This equals the geodesic distance between the two abilities; it is
    signed, so it is additive over adjacent intervals.
    """
    return _chunked_quad(_sqrt_info(test), theta0, theta1, tol)


def geodesic_ability(test: RaschTest, theta: float, *, theta_L: float | None = None,
                     tol: float = _DEFAULT_TOL) -> float:
    """Geodesic ability: arc length of the ability manifold from -inf to theta.

    The improper integral is truncated at ``theta_L`` and completed with
    the asymptotic tail ``2 sqrt(g(theta_L))`` (the information integrand
    decays like e^theta far below the easiest item).
    """
    floor = _theta_floor(test) if theta_L is None else float(theta_L)
    tail = 2.0 * math.sqrt(test_information(test, floor))
    if theta <= floor:
        return 2.0 * math.sqrt(test_information(test, theta))
    return _chunked_quad(_sqrt_info(test), floor, theta, tol) + tail


def geodesic_ability_closed_form(m: int, theta: float) -> float:
    """Geodesic ability for m items of difficulty zero: 2 sqrt(m) arctan(e^(theta/2))."""
    if m < 1:
        raise ValueError("m must be >= 1")
    half = theta / 2.0
    e = math.exp(half) if half < 700.0 else math.inf
    return 2.0 * math.sqrt(m) * math.atan(e)


def ramsay_arclength(test: RaschTest, theta: float, *, theta_L: float | None = None,
                     tol: float = _DEFAULT_TOL) -> float:
    """Euclidean arc length of the item characteristic curve up to theta.

    The integrand is ``sqrt(sum_j (pi_j (1 - pi_j))^2)``, pointwise below
    the Fisher integrand, so this scale never exceeds the geodesic one.
    """
    floor = _theta_floor(test) if theta_L is None else float(theta_L)

    def integrand(x: float) -> float:
        v = logistic_variance(x - test.beta)
        return math.sqrt(float(np.sum(v * v)))

    # tail decays like e^theta, so the completed mass is integrand(floor)
    tail = integrand(floor)
    if theta <= floor:
        return integrand(theta)
    return _chunked_quad(integrand, floor, theta, tol) + tail


def hougaard_transform(spec: CEFSpec, delta: float, theta: float, *,
                       theta_L: float | None = None,
                       tol: float = _DEFAULT_TOL) -> float:
    """Power-family transform of a scalar exponential family.

    Integrates ``[Psi''(x)]^delta`` from the lower truncation point to
    theta.  ``delta = 1/2`` is the variance-stabilizing case and equals
    the geodesic ability; ``delta = 0`` returns ``theta - theta_L``
    (identity up to shift; the untruncated integral diverges there).
    """
    if spec.k != 1 or spec.q != 1:
        raise ValueError("the power transform needs a scalar natural parameter")
    if theta_L is None:
        test = spec.meta.get("test")
        if test is None:
            raise ValueError("pass theta_L for specs without a known lower scale")
        theta_L = _theta_floor(test)

    if spec.log_partition_hessian is not None:
        def psi2(x: float) -> float:
            return float(spec.log_partition_hessian(np.array([x]))[0, 0])
    else:
        from . import _numdiff

        def psi2(x: float) -> float:
            return float(_numdiff.hessian(spec.log_partition, np.array([x]))[0, 0])

    def integrand(x: float) -> float:
        return psi2(x) ** delta

    value = _chunked_quad(integrand, theta_L, theta, tol)
    if delta > 0.0:
        # exponential-tail completion, exact in the e^theta asymptote
        value += integrand(theta_L) / delta
    return value


@dataclass(frozen=True)
class AbilitySE:
    """Delta-method standard error of the estimated geodesic ability.

    ``unnormalized`` is sqrt(1/g) * A'(theta) with A' = sqrt(g), i.e.
    exactly one: the scale has constant uncertainty.  ``paper_convention``
    reports it in the sqrt(m)-normalized asymptotics commonly quoted for
    the equal-difficulty closed form, which carries an extra factor two.
    """

    unnormalized: float
    paper_convention: float


def ability_se(test: RaschTest, theta_hat: float) -> AbilitySE:
    g = test_information(test, theta_hat)
    if g <= 0.0:
        raise ZeroDivisionError("test information vanished; no uncertainty available")
    se = math.sqrt(1.0 / g) * math.sqrt(g)
    return AbilitySE(unnormalized=se, paper_convention=2.0 * se)


@dataclass(frozen=True)
class AbilityScale:
    """Bundled configuration for the ability-scale integrals of one test."""

    test: RaschTest
    theta_L: float | None = None
    quad_tol: float = _DEFAULT_TOL

    def flatten(self, theta0: float, theta1: float) -> float:
        return flatten(self.test, theta0, theta1, tol=self.quad_tol)

    def geodesic(self, theta: float) -> float:
        return geodesic_ability(self.test, theta, theta_L=self.theta_L,
                                tol=self.quad_tol)

    def ramsay(self, theta: float) -> float:
        return ramsay_arclength(self.test, theta, theta_L=self.theta_L,
                                tol=self.quad_tol)

    def se(self, theta_hat: float) -> AbilitySE:
        return ability_se(self.test, theta_hat)


def ability_grid(test: RaschTest, thetas) -> np.ndarray:
    """Grid of (theta, A, A0, s) rows for plotting or CSV emission.

    A0 is the equal-difficulty closed form with this test's item count.
    """
    thetas = np.asarray(thetas, dtype=float)
    out = np.empty((thetas.size, 4))
    for i, th in enumerate(thetas):
        out[i] = (th,
                  geodesic_ability(test, th),
                  geodesic_ability_closed_form(test.m, th),
                  ramsay_arclength(test, th))
    return out
