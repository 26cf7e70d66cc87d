"""Adaptive Simpson quadrature and a double-exponential rule.

The Simpson routine is the workhorse for arc lengths and ability
integrals: interval bisection with the classical ``(S2 - S1)/15``
error estimate, absolute tolerance, bounded recursion depth.  The
tanh-sinh rule is used for normalizing constants on open intervals
whose integrand may blow up (integrably) at the endpoints.
"""

from __future__ import annotations

import math
from typing import Callable

from .core import QuadratureError

__all__ = ["adaptive_simpson", "tanh_sinh"]


def _simpson(f_a, f_m, f_b, a, b):
    return (b - a) / 6.0 * (f_a + 4.0 * f_m + f_b)


def adaptive_simpson(f: Callable[[float], float], a: float, b: float, *,
                     tol: float = 1e-8, max_depth: int = 60,
                     full_output: bool = False):
    """Integrate ``f`` on [a, b] to absolute tolerance ``tol``.

    Returns the value, or ``(value, error_estimate)`` with
    ``full_output``.  Raises :class:`QuadratureError` when some
    subinterval still misses its share of the tolerance at
    ``max_depth`` bisections.
    """
    if a == b:
        return (0.0, 0.0) if full_output else 0.0
    sign = 1.0
    if b < a:
        a, b, sign = b, a, -1.0

    m = 0.5 * (a + b)
    fa, fm, fb = f(a), f(m), f(b)
    whole = _simpson(fa, fm, fb, a, b)

    total = 0.0
    err_total = 0.0
    exhausted_err = 0.0
    # stack entries: (a, b, fa, fm, fb, S, tol, depth)
    stack = [(a, b, fa, fm, fb, whole, tol, 0)]
    while stack:
        a0, b0, f0, f1, f2, s0, t0, depth = stack.pop()
        m0 = 0.5 * (a0 + b0)
        lm, rm = 0.5 * (a0 + m0), 0.5 * (m0 + b0)
        flm, frm = f(lm), f(rm)
        left = _simpson(f0, flm, f1, a0, m0)
        right = _simpson(f1, frm, f2, m0, b0)
        delta = left + right - s0
        if abs(delta) <= 15.0 * t0 or depth >= max_depth:
            total += left + right + delta / 15.0
            err_total += abs(delta) / 15.0
            if abs(delta) > 15.0 * t0:
                exhausted_err += abs(delta) / 15.0
        else:
            half = 0.5 * t0
            stack.append((a0, m0, f0, flm, f1, left, half, depth + 1))
            stack.append((m0, b0, f1, frm, f2, right, half, depth + 1))
    if exhausted_err > tol:
        raise QuadratureError(
            f"adaptive Simpson did not converge to tol={tol:g} within depth {max_depth}",
            achieved=err_total,
        )
    value = sign * total
    return (value, err_total) if full_output else value


def tanh_sinh(f: Callable[[float], float], a: float, b: float, *,
              tol: float = 1e-9, max_level: int = 12) -> float:
    """Double-exponential quadrature on the open interval (a, b).

    Tolerates integrable endpoint singularities.  Abscissae near the
    endpoints are formed by adding an exactly computed offset to the
    endpoint (rather than subtracting from the midpoint), which keeps
    ``f`` accurate right where it blows up.  The grid is refined until
    two successive levels agree to ``tol`` (relative).
    """
    half = 0.5 * (b - a)
    mid = 0.5 * (a + b)
    t_max = 4.0  # tanh(pi/2 sinh 4) is 1 to double precision

    def contribution(t: float) -> float:
        # one node at parameter t (signed); offset measured from the
        # endpoint the node approaches: 1 - tanh(u) = 2 / (e^{2u} + 1)
        u = 0.5 * math.pi * math.sinh(abs(t))
        q = 2.0 / (math.exp(2.0 * u) + 1.0) if u < 350.0 else 0.0
        w = half * 0.5 * math.pi * math.cosh(t) / math.cosh(u) ** 2
        if t == 0.0:
            x = mid
        elif t > 0.0:
            x = b - half * q
        else:
            x = a + half * q
        if not (a < x < b) or w <= 0.0:
            return 0.0
        return w * f(x)

    h = 1.0
    total = contribution(0.0)
    k = 1
    while k * h <= t_max:
        total += contribution(k * h) + contribution(-k * h)
        k += 1
    prev = h * total

    cur = prev
    for _ in range(max_level):
        h *= 0.5
        k = 1
        while k * h <= t_max:
            total += contribution(k * h) + contribution(-k * h)
            k += 2  # only the new (odd) nodes at this level
        cur = h * total
        if abs(cur - prev) <= tol * max(1.0, abs(cur)):
            return cur
        prev = cur
    raise QuadratureError("tanh-sinh quadrature did not converge",
                          achieved=abs(cur - prev))
