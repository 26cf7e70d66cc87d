"""Metric-level computations on statistical manifolds.

Line elements, distinguishability of nearby distributions, KL
comparison, arc length along parametric curves, geodesic distance and
geodesic balls for the univariate normal manifold, and pullbacks of the
metric under reparametrization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import _numdiff
from .core import (
    FiniteSampleSpace,
    ModelFamily,
    SingularMetricError,
    SupportError,
    expect,
    numeric_fisher,
)
from .quadrature import adaptive_simpson

__all__ = [
    "MetricField",
    "Curve",
    "line_element",
    "delta_moments",
    "distinguishability",
    "kl_divergence",
    "arc_length",
    "line_path",
    "normal_metric",
    "normal_line_path",
    "normal_circle_path",
    "normal_geodesic_path",
    "geodesic_distance_normal",
    "shoot_normal_geodesic",
    "geodesic_ball_normal",
    "pullback_metric",
]


class MetricField:
    """A symmetric positive-definite matrix field ``theta -> g(theta)``."""

    def __init__(self, fn: Callable[[np.ndarray], np.ndarray], dim: int | None = None,
                 name: str = "metric"):
        self._fn = fn
        self.dim = dim
        self.name = name

    def __call__(self, theta) -> np.ndarray:
        g = np.asarray(self._fn(np.atleast_1d(np.asarray(theta, dtype=float))), dtype=float)
        return 0.5 * (g + g.T)

    @classmethod
    def from_family(cls, model: ModelFamily, **fisher_kwargs) -> "MetricField":
        """Fisher metric of a family: analytic when available, numeric otherwise."""
        if model.analytic_fisher is not None:
            fn = model.analytic_fisher
        else:
            fn = lambda theta: numeric_fisher(model, theta, **fisher_kwargs)  # noqa: E731
        return cls(fn, dim=model.dim_k, name=f"fisher[{model.name}]")

    @classmethod
    def euclidean(cls, dim: int) -> "MetricField":
        eye = np.eye(dim)
        return cls(lambda theta: eye, dim=dim, name="euclidean")


@dataclass(frozen=True)
class Curve:
    """Parametric path ``t -> theta(t)`` on [t0, t1].

    The derivative is optional; central finite differences of the map
    are used when it is absent.
    """

    map: Callable[[float], np.ndarray]
    t0: float
    t1: float
    derivative: Callable[[float], np.ndarray] | None = None

    def point(self, t: float) -> np.ndarray:
        return np.atleast_1d(np.asarray(self.map(t), dtype=float))

    def velocity(self, t: float) -> np.ndarray:
        if self.derivative is not None:
            return np.atleast_1d(np.asarray(self.derivative(t), dtype=float))
        h = _numdiff.EPS ** (1.0 / 3.0) * max(1.0, abs(t))
        return (self.point(t + h) - self.point(t - h)) / (2.0 * h)


def line_element(g: MetricField, theta, dtheta) -> float:
    """Squared distance element ``ds^2 = dtheta' g(theta) dtheta``."""
    dtheta = np.atleast_1d(np.asarray(dtheta, dtype=float))
    return float(dtheta @ g(theta) @ dtheta)


def delta_moments(model: ModelFamily, theta, dtheta, *, seed: int = 0,
                  n_draws: int | None = None):
    """First and second moments of the relative density deviation.

    ``Delta(y) = p(y | theta + dtheta) / p(y | theta) - 1``; the first
    moment is zero in exact arithmetic and the second approximates the
    squared line element for small displacements.
    """
    theta = model.check_interior(theta)
    theta1 = model.check_interior(theta + np.asarray(dtheta, dtype=float))

    def both(y):
        delta = math.exp(model.log_density(y, theta1) - model.log_density(y, theta)) - 1.0
        return np.array([delta, delta * delta])

    first, second = expect(model, theta, both, seed=seed, n_draws=n_draws)
    return float(first), float(second)


def distinguishability(model: ModelFamily, theta, dtheta, *, seed: int = 0,
                       n_draws: int | None = None) -> float:
    """Mean squared relative deviation between nearby distributions."""
    return delta_moments(model, theta, dtheta, seed=seed, n_draws=n_draws)[1]


def kl_divergence(model: ModelFamily, theta0, theta1, *, seed: int = 0,
                  n_draws: int | None = None) -> float:
    """KL divergence of ``p(.|theta1)`` from ``p(.|theta0)``.

    Closed form when the family has one, exact enumeration on finite
    spaces (with a support check), quadrature/Monte Carlo otherwise.
    """
    theta0 = model.check_interior(theta0)
    theta1 = model.check_interior(theta1)
    if model.analytic_kl is not None:
        return float(model.analytic_kl(theta0, theta1))
    if isinstance(model.sample_space, FiniteSampleSpace):
        total = 0.0
        for y in model.sample_space.points:
            lp0 = model.log_density(y, theta0)
            if not np.isfinite(lp0):
                continue
            lp1 = model.log_density(y, theta1)
            if not np.isfinite(lp1):
                raise SupportError(
                    f"{model.name}: observation {y!r} has positive probability under "
                    "theta0 but zero under theta1"
                )
            total += math.exp(lp0) * (lp0 - lp1)
        return total

    def log_ratio(y):
        return model.log_density(y, theta0) - model.log_density(y, theta1)

    return float(expect(model, theta0, log_ratio, seed=seed, n_draws=n_draws))


def arc_length(g: MetricField, curve: Curve, tol: float = 1e-8, *,
               max_depth: int = 60, full_output: bool = False):
    """Arc length of a curve under the metric, by adaptive quadrature."""

    def speed(t):
        v = curve.velocity(t)
        return math.sqrt(max(line_element(g, curve.point(t), v), 0.0))

    return adaptive_simpson(speed, curve.t0, curve.t1, tol=tol,
                            max_depth=max_depth, full_output=full_output)


def line_path(theta0, theta1) -> Curve:
    """Straight segment between two parameter vectors, t in [0, 1]."""
    theta0 = np.atleast_1d(np.asarray(theta0, dtype=float))
    theta1 = np.atleast_1d(np.asarray(theta1, dtype=float))
    diff = theta1 - theta0
    return Curve(map=lambda t: theta0 + t * diff, t0=0.0, t1=1.0,
                 derivative=lambda t: diff)


# --------------------------------------------------------------------- #
# The univariate normal manifold
# --------------------------------------------------------------------- #


def normal_metric() -> MetricField:
    """Fisher metric diag(1/sigma^2, 2/sigma^2) on the (mu, sigma) half-plane."""
    return MetricField(lambda th: np.diag([1.0, 2.0]) / th[1] ** 2, dim=2,
                       name="fisher[normal1d]")


def _check_normal_point(p) -> tuple:
    mu, sigma = float(p[0]), float(p[1])
    if sigma <= 0.0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    return mu, sigma


normal_line_path = line_path


def normal_circle_path(p0, p1) -> Curve:
    """Circular arc through two normals, centered on the mu-axis."""
    mu0, s0 = _check_normal_point(p0)
    mu1, s1 = _check_normal_point(p1)
    if mu0 == mu1:
        raise ValueError("a circle centered on the mu-axis needs distinct means")
    c = (mu1**2 + s1**2 - mu0**2 - s0**2) / (2.0 * (mu1 - mu0))
    r = math.hypot(mu0 - c, s0)
    t0 = math.atan2(s0, mu0 - c)
    t1 = math.atan2(s1, mu1 - c)
    lo, hi = min(t0, t1), max(t0, t1)
    return Curve(
        map=lambda t: np.array([c + r * math.cos(t), r * math.sin(t)]),
        t0=lo,
        t1=hi,
        derivative=lambda t: np.array([-r * math.sin(t), r * math.cos(t)]),
    )


def normal_geodesic_path(p0, p1) -> Curve:
    """Geodesic between two normals.

    For distinct means this is the arc of an ellipse centered on the
    mu-axis whose horizontal semi-axis exceeds the vertical one by a
    factor sqrt(2); for equal means it is the vertical segment.
    """
    mu0, s0 = _check_normal_point(p0)
    mu1, s1 = _check_normal_point(p1)
    if mu0 == mu1:
        return line_path((mu0, s0), (mu1, s1))
    c = (mu1**2 + 2.0 * s1**2 - mu0**2 - 2.0 * s0**2) / (2.0 * (mu1 - mu0))
    a = math.sqrt((mu0 - c) ** 2 + 2.0 * s0**2)
    b = a / math.sqrt(2.0)
    t0 = math.atan2(math.sqrt(2.0) * s0, mu0 - c)
    t1 = math.atan2(math.sqrt(2.0) * s1, mu1 - c)
    lo, hi = min(t0, t1), max(t0, t1)
    return Curve(
        map=lambda t: np.array([c + a * math.cos(t), b * math.sin(t)]),
        t0=lo,
        t1=hi,
        derivative=lambda t: np.array([-a * math.sin(t), b * math.cos(t)]),
    )


def geodesic_distance_normal(p0, p1) -> float:
    """Closed-form Fisher-Rao distance between univariate normals."""
    mu0, s0 = _check_normal_point(p0)
    mu1, s1 = _check_normal_point(p1)
    dmu2 = (mu0 - mu1) ** 2
    lo = dmu2 + 2.0 * (s0 - s1) ** 2
    hi = dmu2 + 2.0 * (s0 + s1) ** 2
    num = math.sqrt(lo * hi) + dmu2 + 2.0 * (s0**2 + s1**2)
    return math.sqrt(2.0) * math.log(num / (4.0 * s0 * s1))


def _normal_geodesic_rhs(state: np.ndarray) -> np.ndarray:
    # Christoffel symbols of diag(1/s^2, 2/s^2):
    #   G^mu_{mu,s} = -1/s,  G^s_{mu,mu} = 1/(2s),  G^s_{s,s} = -1/s
    mu, s, vmu, vs = state
    return np.array([vmu, vs, 2.0 * vmu * vs / s, -0.5 * vmu**2 / s + vs**2 / s])


def shoot_normal_geodesic(center, angle: float, length: float,
                          n_steps: int | None = None) -> np.ndarray:
    """Integrate the normal-manifold geodesic equation from ``center``.

    The ray leaves at the given angle (measured in an orthonormal frame
    at the center) with unit Fisher speed, so the curve parameter is arc
    length; classic fixed-step fourth-order integration with at most
    length/1000 arc length per step.
    """
    mu, s = _check_normal_point(center)
    if length < 0.0:
        raise ValueError("length must be nonnegative")
    if length == 0.0:
        return np.array([mu, s])
    steps = int(n_steps) if n_steps is not None else 1000
    h = length / steps
    state = np.array([mu, s, math.cos(angle) * s, math.sin(angle) * s / math.sqrt(2.0)])
    for _ in range(steps):
        k1 = _normal_geodesic_rhs(state)
        k2 = _normal_geodesic_rhs(state + 0.5 * h * k1)
        k3 = _normal_geodesic_rhs(state + 0.5 * h * k2)
        k4 = _normal_geodesic_rhs(state + h * k3)
        state = state + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if state[1] <= 0.0:
            raise RuntimeError("geodesic integration left the upper half-plane")
    return state[:2]


def geodesic_ball_normal(center, radius: float, n_rays: int) -> np.ndarray:
    """Endpoints of unit-speed geodesics of the given length in all directions."""
    if radius < 0.0:
        raise ValueError("radius must be nonnegative")
    if n_rays < 1:
        raise ValueError("n_rays must be >= 1")
    angles = np.linspace(0.0, 2.0 * math.pi, n_rays, endpoint=False)
    return np.array([shoot_normal_geodesic(center, a, radius) for a in angles])


# --------------------------------------------------------------------- #
# Reparametrization
# --------------------------------------------------------------------- #


def pullback_metric(g: MetricField, to_theta: Callable[[np.ndarray], np.ndarray],
                    jacobian: Callable[[np.ndarray], np.ndarray] | None = None,
                    name: str = "pullback") -> MetricField:
    """Metric in a new chart phi, where ``to_theta`` maps phi back to theta.

    ``g*(phi) = J' g(theta(phi)) J`` with J the Jacobian of theta(phi),
    computed by central differences when not supplied.
    """

    def fn(phi):
        phi = np.atleast_1d(np.asarray(phi, dtype=float))
        J = (np.asarray(jacobian(phi), dtype=float) if jacobian is not None
             else _numdiff.jacobian(lambda p: np.atleast_1d(to_theta(p)), phi))
        J = np.atleast_2d(J)
        if J.shape[0] == J.shape[1]:
            det = np.linalg.det(J)
            if not np.isfinite(det) or abs(det) < 1e-14:
                raise SingularMetricError(
                    f"Jacobian of the reparametrization is singular at {phi}"
                )
        theta = np.atleast_1d(np.asarray(to_theta(phi), dtype=float))
        return J.T @ g(theta) @ J

    return MetricField(fn, dim=g.dim, name=name)
