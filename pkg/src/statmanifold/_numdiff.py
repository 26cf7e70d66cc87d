"""Finite-difference helpers shared by the whole package.

Central differences with the usual truncation/round-off balanced steps:
cube root of machine epsilon for first derivatives, fourth root for
second derivatives, both scaled by ``max(1, |x_i|)`` per coordinate.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

EPS = float(np.finfo(float).eps)

_H1 = EPS ** (1.0 / 3.0)
_H2 = EPS ** 0.25


def first_order_steps(x: np.ndarray) -> np.ndarray:
    return _H1 * np.maximum(1.0, np.abs(x))


def second_order_steps(x: np.ndarray) -> np.ndarray:
    return _H2 * np.maximum(1.0, np.abs(x))


def _shift(x: np.ndarray, i: int, h: float) -> np.ndarray:
    out = np.array(x, dtype=float, copy=True)
    out[i] += h
    return out


def gradient(f: Callable[[np.ndarray], float], x: np.ndarray,
             steps: np.ndarray | None = None) -> np.ndarray:
    """Central-difference gradient of a scalar function."""
    x = np.asarray(x, dtype=float)
    h = first_order_steps(x) if steps is None else np.asarray(steps, dtype=float)
    g = np.empty(x.size)
    for i in range(x.size):
        # representable step: (x + h) - x, avoids spurious round-off
        hi = (x[i] + h[i]) - x[i]
        g[i] = (f(_shift(x, i, hi)) - f(_shift(x, i, -hi))) / (2.0 * hi)
    return g


def jacobian(f: Callable[[np.ndarray], np.ndarray], x: np.ndarray,
             steps: np.ndarray | None = None) -> np.ndarray:
    """Central-difference Jacobian of a vector function, shape (len(f), len(x))."""
    x = np.asarray(x, dtype=float)
    h = first_order_steps(x) if steps is None else np.asarray(steps, dtype=float)
    cols = []
    for i in range(x.size):
        hi = (x[i] + h[i]) - x[i]
        cols.append((np.asarray(f(_shift(x, i, hi)), dtype=float)
                     - np.asarray(f(_shift(x, i, -hi)), dtype=float)) / (2.0 * hi))
    return np.stack(cols, axis=-1)


def hessian(f: Callable[[np.ndarray], float], x: np.ndarray,
            steps: np.ndarray | None = None) -> np.ndarray:
    """Central-difference Hessian of a scalar function, symmetrized."""
    x = np.asarray(x, dtype=float)
    h = second_order_steps(x) if steps is None else np.asarray(steps, dtype=float)
    k = x.size
    out = np.empty((k, k))
    f0 = f(x)
    for i in range(k):
        hi = (x[i] + h[i]) - x[i]
        out[i, i] = (f(_shift(x, i, hi)) - 2.0 * f0 + f(_shift(x, i, -hi))) / hi**2
        for j in range(i + 1, k):
            hj = (x[j] + h[j]) - x[j]
            fpp = f(_shift(_shift(x, i, hi), j, hj))
            fpm = f(_shift(_shift(x, i, hi), j, -hj))
            fmp = f(_shift(_shift(x, i, -hi), j, hj))
            fmm = f(_shift(_shift(x, i, -hi), j, -hj))
            out[i, j] = out[j, i] = (fpp - fpm - fmp + fmm) / (4.0 * hi * hj)
    return out


def vector_hessian(f: Callable[[np.ndarray], np.ndarray], x: np.ndarray,
                   steps: np.ndarray | None = None) -> np.ndarray:
    """Second derivatives of a vector function: out[m, i, j] = d2 f_m / dx_i dx_j."""
    x = np.asarray(x, dtype=float)
    h = second_order_steps(x) if steps is None else np.asarray(steps, dtype=float)
    k = x.size
    f0 = np.asarray(f(x), dtype=float)
    out = np.empty((f0.size, k, k))
    for i in range(k):
        hi = (x[i] + h[i]) - x[i]
        fp = np.asarray(f(_shift(x, i, hi)), dtype=float)
        fm = np.asarray(f(_shift(x, i, -hi)), dtype=float)
        out[:, i, i] = (fp - 2.0 * f0 + fm) / hi**2
        for j in range(i + 1, k):
            hj = (x[j] + h[j]) - x[j]
            fpp = np.asarray(f(_shift(_shift(x, i, hi), j, hj)), dtype=float)
            fpm = np.asarray(f(_shift(_shift(x, i, hi), j, -hj)), dtype=float)
            fmp = np.asarray(f(_shift(_shift(x, i, -hi), j, hj)), dtype=float)
            fmm = np.asarray(f(_shift(_shift(x, i, -hi), j, -hj)), dtype=float)
            out[:, i, j] = out[:, j, i] = (fpp - fpm - fmp + fmm) / (4.0 * hi * hj)
    return out
