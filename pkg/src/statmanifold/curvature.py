"""Curvature of statistical manifolds.

Intrinsic curvature is computed from any metric field by finite
differences: Levi-Civita connection coefficients, the Riemann tensor,
its Ricci contraction and finally the scalar curvature (with Richardson
extrapolation over two step sizes).

Extrinsic (statistical) curvature of curved exponential families comes
in two pipelines that must agree: an analytic one built from tangent
vectors, the ambient log-partition metric and a metric-orthonormal
normal frame; and a numeric one at the maximum likelihood estimate
built from a Cholesky whitening and a QR rotation of the tangent frame,
which additionally yields the parameter-effects curvature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from . import _numdiff
from .core import Dataset, SingularMetricError
from .families import CEFSpec
from .geometry import Curve, MetricField, arc_length
from .inference import FitResult, OptimizerConfig, fit_cef

__all__ = [
    "christoffel",
    "riemann_tensor",
    "scalar_curvature",
    "CurvatureReport",
    "gamma2_analytic",
    "gamma2_cfa_closed_form",
    "gamma2_numeric",
    "SimulationSummary",
    "curvature_simulation",
    "SphereIsometryReport",
    "sphere_embedding_check",
    "EFRON_HIGH_CURVATURE",
]

# Rule-of-thumb threshold above which statistical curvature is considered high.
EFRON_HIGH_CURVATURE = 0.125

# Gram-Schmidt drop threshold on the metric norm of a candidate vector.
_GS_DROP = 1e-10


# --------------------------------------------------------------------- #
# Intrinsic curvature from a metric field
# --------------------------------------------------------------------- #


def _metric_first_derivatives(g: MetricField, theta: np.ndarray,
                              scale: float) -> np.ndarray:
    """dG[d, i, j] = d g_ij / d theta_d by central differences."""
    k = theta.size
    steps = scale * _numdiff.first_order_steps(theta)
    dG = np.empty((k, k, k))
    for d in range(k):
        h = (theta[d] + steps[d]) - theta[d]
        tp, tm = theta.copy(), theta.copy()
        tp[d] += h
        tm[d] -= h
        dG[d] = (g(tp) - g(tm)) / (2.0 * h)
    return dG


def _metric_second_derivatives(g: MetricField, theta: np.ndarray,
                               scale: float) -> np.ndarray:
    """d2G[c, d, i, j] = d^2 g_ij / d theta_c d theta_d, central differences."""
    k = theta.size
    steps = scale * _numdiff.second_order_steps(theta)
    g0 = g(theta)
    d2G = np.empty((k, k, k, k))
    for c in range(k):
        hc = (theta[c] + steps[c]) - theta[c]
        tp, tm = theta.copy(), theta.copy()
        tp[c] += hc
        tm[c] -= hc
        d2G[c, c] = (g(tp) - 2.0 * g0 + g(tm)) / hc**2
        for d in range(c + 1, k):
            hd = (theta[d] + steps[d]) - theta[d]
            tpp, tpm, tmp, tmm = (theta.copy() for _ in range(4))
            tpp[[c, d]] += (hc, hd)
            tpm[c] += hc
            tpm[d] -= hd
            tmp[c] -= hc
            tmp[d] += hd
            tmm[[c, d]] -= (hc, hd)
            mixed = (g(tpp) - g(tpm) - g(tmp) + g(tmm)) / (4.0 * hc * hd)
            d2G[c, d] = d2G[d, c] = mixed
    return d2G


def christoffel(g: MetricField, theta, *, scale: float = 1.0) -> np.ndarray:
    """Levi-Civita connection coefficients Gamma^a_{bc}, symmetric in (b, c)."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    G = g(theta)
    try:
        Ginv = np.linalg.inv(G)
    except np.linalg.LinAlgError as exc:
        raise SingularMetricError(f"metric singular at {theta}") from exc
    dG = _metric_first_derivatives(g, theta, scale)
    # T[d, b, c] = d_b g_dc + d_c g_db - d_d g_bc
    T = dG.transpose(1, 0, 2) + dG.transpose(1, 2, 0) - dG
    return 0.5 * np.einsum("ad,dbc->abc", Ginv, T)


def riemann_tensor(g: MetricField, theta, *, scale: float = 1.0) -> np.ndarray:
    """Riemann tensor R^a_{bcd} from finite differences of the metric."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    G = g(theta)
    Ginv = np.linalg.inv(G)
    dG = _metric_first_derivatives(g, theta, scale)
    d2G = _metric_second_derivatives(g, theta, scale)

    # T[e, d, b] = d_d g_eb + d_b g_ed - d_e g_db   (array dG[d, i, j] = d_d g_ij)
    T = dG.transpose(1, 0, 2) + dG.transpose(1, 2, 0) - dG
    Gamma = 0.5 * np.einsum("ae,edb->adb", Ginv, T)

    # dT[c, e, d, b] = d_c T[e, d, b]   (array d2G[c, d, i, j] = d_c d_d g_ij)
    dT = (d2G.transpose(0, 2, 1, 3)
          + np.einsum("cbed->cedb", d2G)
          - d2G)
    dGinv = -np.einsum("af,cfh,he->cae", Ginv, dG, Ginv)
    dGamma = 0.5 * (np.einsum("cae,edb->cadb", dGinv, T)
                    + np.einsum("ae,cedb->cadb", Ginv, dT))

    # R^a_{bcd} = d_c Gamma^a_{db} - d_d Gamma^a_{cb}
    #             + Gamma^a_{ce} Gamma^e_{db} - Gamma^a_{de} Gamma^e_{cb}
    return (np.einsum("cadb->abcd", dGamma)
            - np.einsum("dacb->abcd", dGamma)
            + np.einsum("ace,edb->abcd", Gamma, Gamma)
            - np.einsum("ade,ecb->abcd", Gamma, Gamma))


def _scalar_curvature_once(g: MetricField, theta: np.ndarray, scale: float) -> float:
    riem = riemann_tensor(g, theta, scale=scale)
    ricci = np.einsum("abad->bd", riem)
    Ginv = np.linalg.inv(g(theta))
    return float(np.einsum("bd,bd->", Ginv, ricci))


def scalar_curvature(g: MetricField, theta, *, richardson: bool = True) -> float:
    """Scalar curvature of the metric at a point (0 for one-parameter models)."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    if theta.size == 1:
        return 0.0
    full = _scalar_curvature_once(g, theta, 1.0)
    if not richardson:
        return full
    half = _scalar_curvature_once(g, theta, 0.5)
    return (4.0 * half - full) / 3.0


# --------------------------------------------------------------------- #
# Statistical curvature of curved exponential families
# --------------------------------------------------------------------- #


@dataclass
class CurvatureReport:
    """Statistical and parameter-effects curvature at a point."""

    gamma2: float
    omega2: float
    at_point: np.ndarray
    scalar_R: float | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def exceeds_efron_threshold(self) -> bool:
        return self.gamma2 > EFRON_HIGH_CURVATURE


def _cef_derivatives(spec: CEFSpec, theta: np.ndarray):
    """Tangent frame, second derivatives and ambient metric at theta."""
    eta0 = spec.eta(theta)
    J = (np.asarray(spec.eta_jacobian(theta), dtype=float)
         if spec.eta_jacobian is not None
         else _numdiff.jacobian(spec.eta, theta))
    H = (np.asarray(spec.eta_hessian(theta), dtype=float)
         if spec.eta_hessian is not None
         else _numdiff.vector_hessian(spec.eta, theta))
    G = (np.asarray(spec.log_partition_hessian(eta0), dtype=float)
         if spec.log_partition_hessian is not None
         else _numdiff.hessian(spec.log_partition, eta0))
    G = 0.5 * (G + G.T)
    return J.reshape(spec.k, spec.q), H.reshape(spec.k, spec.q, spec.q), G


def _gram_schmidt_normal_frame(J: np.ndarray, G: np.ndarray):
    """Metric-orthonormal basis of the normal space of span(J).

    Modified Gram-Schmidt with respect to the inner product x' G y,
    seeded with the tangent frame first and the standard basis after;
    returns the k - q normal vectors and the number of dropped seeds.
    """
    k, q = J.shape
    frame: list[np.ndarray] = []
    normals: list[np.ndarray] = []
    dropped = 0

    def orthogonalize(v):
        w = v.astype(float).copy()
        for u in frame:
            w -= (u @ G @ w) * u
        # second pass for numerical orthogonality
        for u in frame:
            w -= (u @ G @ w) * u
        return w

    seeds = [("tangent", J[:, a]) for a in range(q)]
    seeds += [("basis", e) for e in np.eye(k)]
    for kind, v in seeds:
        w = orthogonalize(v)
        norm2 = float(w @ G @ w)
        ref = float(v @ G @ v)
        if norm2 <= _GS_DROP * max(ref, 1.0):
            if kind == "tangent":
                raise SingularMetricError(
                    "tangent frame is rank deficient with respect to the ambient metric"
                )
            dropped += 1
            continue
        u = w / math.sqrt(norm2)
        frame.append(u)
        if kind == "basis":
            normals.append(u)
        if len(frame) == k:
            break
    if len(normals) != k - q:
        raise SingularMetricError(
            f"normal space has dimension {len(normals)}, expected {k - q}"
        )
    return np.array(normals).T if normals else np.zeros((k, 0)), dropped


def gamma2_analytic(spec: CEFSpec, theta, *, include_omega: bool = True) -> CurvatureReport:
    """Statistical curvature from the embedding derivatives at ``theta``.

    Tangent vectors and the ambient metric give the induced metric; the
    normal components of the second derivatives, contracted with the
    inverse induced metric and the inverse normal-frame metric, give the
    curvature.  The parameter-effects component is filled in with the
    whitened-QR construction at the same point when requested.
    """
    theta = spec.check_theta(theta)
    if spec.q >= spec.k:
        raise ValueError("statistical curvature needs a curved family (q < k)")
    J, H, G = _cef_derivatives(spec, theta)

    if np.linalg.matrix_rank(J) < spec.q:
        raise SingularMetricError("embedding Jacobian is rank deficient")

    g_ind = J.T @ G @ J
    g_inv = np.linalg.inv(g_ind)
    U, dropped = _gram_schmidt_normal_frame(J, G)
    g_star = U.T @ G @ U
    g_star_inv = np.linalg.inv(g_star)

    Habr = np.einsum("mab,mn,nr->abr", H, G, U)
    gamma2 = float(np.einsum("abr,cds,ac,bd,rs->", Habr, Habr, g_inv, g_inv, g_star_inv))

    omega2 = math.nan
    if include_omega:
        _, omega2, _ = _whitened_components(J, H, G)

    diag = {
        "ambient_condition": float(np.linalg.cond(G)),
        "induced_condition": float(np.linalg.cond(g_ind)),
        "gram_schmidt_drops": dropped,
        "converged": True,
    }
    if "n" in spec.meta:
        diag["n_washes_out_curvature"] = bool(spec.meta["n"] > 8.0 * gamma2)
    return CurvatureReport(gamma2=gamma2, omega2=omega2, at_point=theta,
                           diagnostics=diag)


def gamma2_cfa_closed_form(lam: float, tau: float, sigma: float, n: int) -> float:
    """Closed-form statistical curvature of the three-item one-factor model."""
    l2, t2, s2 = lam * lam, tau * tau, sigma * sigma
    u = 1.0 + t2 + l2
    s4, s6, s8 = s2**2, s2**3, s2**4
    s10, s12, s14, s16 = s2**5, s2**6, s2**7, s2**8

    p = 16.0 * u**8
    p += 32.0 * u**7 * (3.0 + 2.0 * t2 + 2.0 * l2) * s2
    p += 8.0 * u**6 * (37.0 + 9.0 * t2**2 + 42.0 * l2 + 9.0 * l2**2
                       + 6.0 * t2 * (7.0 + 3.0 * l2)) * s4
    p += 16.0 * u**6 * (36.0 + 17.0 * t2 + 17.0 * l2) * s6
    p += 8.0 * u**4 * (99.0 + 70.0 * t2**2 + 172.0 * l2 + 70.0 * l2**2
                       + 4.0 * t2 * (43.0 + 35.0 * l2)) * s8
    p += 4.0 * u**3 * (202.0 + 8.0 * t2**3 + 405.0 * l2 + 8.0 * l2**2 * (26.0 + l2)
                       + 8.0 * t2**2 * (26.0 + 3.0 * l2)
                       + t2 * (405.0 + 416.0 * l2 + 24.0 * l2**2)) * s10
    p += 2.0 * u**2 * (296.0 + 48.0 * t2**3 + 676.0 * l2 + 429.0 * l2**2
                       + 48.0 * l2**3 + 3.0 * t2**2 * (143.0 + 48.0 * l2)
                       + 2.0 * t2 * (338.0 + 429.0 * l2 + 72.0 * l2**2)) * s12
    p += 2.0 * u * (138.0 + 48.0 * t2**3 + 353.0 * l2 + 266.0 * l2**2
                    + 48.0 * l2**3 + 2.0 * t2**2 * (133.0 + 72.0 * l2)
                    + t2 * (353.0 + 532.0 * l2 + 144.0 * l2**2)) * s14
    p += (63.0 + 32.0 * t2**3 + 174.0 * l2 + 146.0 * l2**2 + 32.0 * l2**3
          + 2.0 * t2**2 * (73.0 + 48.0 * l2)
          + 2.0 * t2 * (87.0 + 146.0 * l2 + 48.0 * l2**2)) * s16

    denom = n * u**2 * (2.0 * u**2 + 4.0 * u**2 * s2 + (3.0 + 4.0 * t2 + 4.0 * l2) * s4) ** 3
    return 2.0 * p / denom


def _whitened_components(J: np.ndarray, H: np.ndarray, G: np.ndarray,
                         max_jitter_tries: int = 3):
    """Curvature components in the whitened, QR-rotated frame.

    Whitens with the upper Cholesky factor (G = h h'), rotates so the
    first q axes span the tangent space, and rescales the parameter grid
    with the inverse triangular factor; squared normal components give
    the statistical curvature, squared tangent components the
    parameter-effects curvature.
    """
    k, q = J.shape
    jitter = 0.0
    base = float(np.mean(np.diag(G)))
    for attempt in range(max_jitter_tries + 1):
        try:
            h = np.linalg.cholesky(G + jitter * np.eye(k))
            break
        except np.linalg.LinAlgError:
            jitter = 1e-12 * base * 100.0**attempt if jitter == 0.0 else jitter * 100.0
    else:
        raise SingularMetricError("ambient metric is not positive definite")

    W = h.T @ J
    Qfull, Rfull = np.linalg.qr(W, mode="complete")
    R = Rfull[:q, :q]
    L = np.linalg.inv(R)
    # rescale the parameter grid, whiten, and rotate into the adapted frame
    T = np.einsum("mab,ax,by->mxy", H, L, L)
    Z = np.einsum("om,oab->mab", h, T)
    A = np.einsum("nm,nab->mab", Qfull, Z)
    gamma2 = float(np.sum(A[q:] ** 2))
    omega2 = float(np.sum(A[:q] ** 2))
    return gamma2, omega2, {"cholesky_jitter": jitter,
                            "ambient_condition": float(np.linalg.cond(G))}


def gamma2_numeric(spec: CEFSpec, data, *, config: OptimizerConfig | None = None,
                   theta0=None) -> CurvatureReport:
    """Statistical and parameter-effects curvature at the MLE of a dataset.

    ``data`` is one observation of the exponential family (for the
    covariance-structure model the full n x 3 data matrix; for the
    grouped logistic design the vector of cell success counts), or a
    :class:`Dataset` whose stacked observations form one.
    """
    fit = fit_cef(spec, data, config, theta0)
    theta_hat = fit.theta

    diagnostics: dict[str, Any] = {
        "converged": bool(fit.converged),
        "iterations": fit.iterations,
        "grad_norm": fit.grad_norm,
    }
    if not fit.converged:
        return CurvatureReport(gamma2=math.nan, omega2=math.nan, at_point=theta_hat,
                               diagnostics=diagnostics)
    try:
        J, H, G = _cef_derivatives(spec, theta_hat)
        gamma2, omega2, extra = _whitened_components(J, H, G)
    except (SingularMetricError, np.linalg.LinAlgError) as exc:
        diagnostics["converged"] = False
        diagnostics["error"] = str(exc)
        return CurvatureReport(gamma2=math.nan, omega2=math.nan, at_point=theta_hat,
                               diagnostics=diagnostics)
    diagnostics.update(extra)
    if "n" in spec.meta:
        diagnostics["n_washes_out_curvature"] = bool(spec.meta["n"] > 8.0 * gamma2)
    return CurvatureReport(gamma2=gamma2, omega2=omega2, at_point=theta_hat,
                           diagnostics=diagnostics)


@dataclass(frozen=True)
class SimulationSummary:
    """Harmonic-mean summary of replicated curvature estimates."""

    K: int
    converged: int
    gamma2_harmonic: float
    omega2_harmonic: float
    base_seed: int


def curvature_simulation(spec: CEFSpec, theta_true, n: int | None = None,
                         K: int = 1000, base_seed: int = 0, *,
                         config: OptimizerConfig | None = None) -> SimulationSummary:
    """Replicate data generation and curvature estimation K times.

    Per-replicate seeds are ``base_seed XOR j``; harmonic means are taken
    over converged replicates only.  ``n`` is validated against the
    sample size built into the spec when both are present.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    if spec.sampler is None:
        raise ValueError(f"{spec.name} has no sampler")
    theta_true = spec.check_theta(theta_true)
    spec_n = spec.meta.get("n")
    if n is not None and spec_n is not None and int(n) != int(spec_n):
        raise ValueError(f"spec was built for n={spec_n}, got n={n}")

    inv_gamma = 0.0
    inv_omega = 0.0
    converged = 0
    for j in range(K):
        rng = np.random.default_rng(base_seed ^ j)
        y = spec.sampler(theta_true, rng)
        report = gamma2_numeric(spec, y, config=config)
        if not report.diagnostics.get("converged", False):
            continue
        if not (np.isfinite(report.gamma2) and np.isfinite(report.omega2)):
            continue
        converged += 1
        with np.errstate(divide="ignore"):
            inv_gamma += 1.0 / report.gamma2 if report.gamma2 > 0.0 else math.inf
            inv_omega += 1.0 / report.omega2 if report.omega2 > 0.0 else math.inf
    if converged == 0:
        raise RuntimeError("all replicates failed to converge")
    gamma_h = converged / inv_gamma if math.isfinite(inv_gamma) else 0.0
    omega_h = converged / inv_omega if math.isfinite(inv_omega) else 0.0
    return SimulationSummary(K=K, converged=converged, gamma2_harmonic=gamma_h,
                             omega2_harmonic=omega_h, base_seed=base_seed)


# --------------------------------------------------------------------- #
# Multinomial simplex / sphere isometry
# --------------------------------------------------------------------- #


@dataclass(frozen=True)
class SphereIsometryReport:
    sphere_distance: float
    fisher_arc_length: float
    gap: float


def sphere_embedding_check(M: int, n: int, pi0, pi1, *,
                           tol: float = 1e-9) -> SphereIsometryReport:
    """Compare the Fisher arc length with the great-circle distance.

    The square-root embedding ``z_i = 2 sqrt(n) sqrt(pi_i)`` maps the
    M-category simplex onto the positive orthant of a sphere of radius
    ``2 sqrt(n)``; the Fisher arc length along the pulled-back great
    circle must match the spherical distance.
    """
    pi0 = np.asarray(pi0, dtype=float)
    pi1 = np.asarray(pi1, dtype=float)
    for p in (pi0, pi1):
        if p.shape != (M,) or np.any(p <= 0.0) or abs(p.sum() - 1.0) > 1e-12:
            raise ValueError("probability vectors must be strictly positive and sum to 1")

    if np.array_equal(pi0, pi1):
        return SphereIsometryReport(0.0, 0.0, 0.0)
    u0, u1 = np.sqrt(pi0), np.sqrt(pi1)
    cosw = float(np.clip(u0 @ u1, -1.0, 1.0))
    omega = math.acos(cosw)
    radius = 2.0 * math.sqrt(n)
    sphere_distance = radius * omega

    sinw = math.sin(omega)

    def path(t):
        u = (math.sin((1.0 - t) * omega) * u0 + math.sin(t * omega) * u1) / sinw
        return (u * u)[: M - 1]

    from .families import multinomial  # local import to avoid a cycle

    metric = MetricField.from_family(multinomial(M, n))
    curve = Curve(map=path, t0=0.0, t1=1.0)
    fisher_len = arc_length(metric, curve, tol=tol)
    return SphereIsometryReport(sphere_distance, fisher_len,
                                abs(sphere_distance - fisher_len))
