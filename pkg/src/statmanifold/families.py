"""Concrete model families: normals, multinomials, Rasch tests, a grouped
two-parameter logistic design, and a one-factor three-item covariance
structure model, each with its analytic Fisher metric where one exists.

Exponential-family structure is captured by :class:`CEFSpec`: a smooth
embedding ``theta -> eta`` of a q-dimensional parameter into the natural
parameter space of a k-dimensional full exponential family with
log-partition ``Psi`` and sufficient statistic ``t(y)``.  The curvature
module consumes these specs; ``q == k`` is allowed and simply means the
family is a reparametrized full family.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from .core import (
    ContinuousSampleSpace,
    Dataset,
    DomainError,
    FiniteSampleSpace,
    ModelFamily,
)

__all__ = [
    "sigmoid",
    "log1pexp",
    "logistic_variance",
    "normal1d",
    "normal1d_kl",
    "iid_replicates",
    "mvnormal",
    "multinomial",
    "RaschTest",
    "rasch_family",
    "rasch_joint_loglik",
    "rasch_reparam_check",
    "ReparamReport",
    "test_information",
    "rasch_cef",
    "TwoPLGrouped",
    "CEFSpec",
    "cef_loglik",
    "cfa3_sigma",
    "cfa3_embedding",
    "cfa3_spec",
    "cfa3_family",
    "bernoulli_pi_family",
    "family_from_spec",
]

_REAL = (-math.inf, math.inf)
_POS = (0.0, math.inf)


def sigmoid(x):
    """Numerically stable logistic function."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out if out.ndim else float(out)


def log1pexp(x):
    """log(1 + e^x) without overflow."""
    return np.logaddexp(0.0, x)


def logistic_variance(x):
    """pi (1 - pi) for pi = sigmoid(x), stable in both tails.

    Uses the symmetric form e^(-|x|) / (1 + e^(-|x|))^2, which avoids the
    cancellation in 1 - pi when pi is within a few ulp of one.
    """
    e = np.exp(-np.abs(np.asarray(x, dtype=float)))
    out = e / (1.0 + e) ** 2
    return out if out.ndim else float(out)


# --------------------------------------------------------------------- #
# Univariate normal
# --------------------------------------------------------------------- #

_LOG_2PI = math.log(2.0 * math.pi)


def normal1d_kl(theta0, theta1) -> float:
    """Closed-form KL divergence between two univariate normals."""
    mu0, s0 = theta0
    mu1, s1 = theta1
    return math.log(s1 / s0) + (s0**2 + (mu0 - mu1) ** 2) / (2.0 * s1**2) - 0.5


def _normal1d_logpdf(y, theta):
    mu, sigma = theta
    z = (y - mu) / sigma
    return -0.5 * z * z - math.log(sigma) - 0.5 * _LOG_2PI


def _normal1d_score(y, theta):
    mu, sigma = theta
    d = y - mu
    return np.array([d / sigma**2, (d * d - sigma**2) / sigma**3])


def _normal1d_fisher(theta):
    sigma = theta[1]
    return np.diag([1.0 / sigma**2, 2.0 / sigma**2])


_GH_NODES, _GH_WEIGHTS = np.polynomial.hermite.hermgauss(80)


def _normal1d_quadrature(theta):
    mu, sigma = theta
    points = mu + sigma * math.sqrt(2.0) * _GH_NODES
    return points, _GH_WEIGHTS / math.sqrt(math.pi)


def normal1d() -> ModelFamily:
    """N(mu, sigma^2) with parameters (mu, sigma); Fisher diag(1/s^2, 2/s^2)."""
    return ModelFamily(
        name="normal1d",
        dim_k=2,
        domain=(_REAL, _POS),
        log_density=_normal1d_logpdf,
        sampler=lambda theta, rng, size: rng.normal(theta[0], theta[1], size),
        sample_space=ContinuousSampleSpace(dim=1),
        analytic_fisher=_normal1d_fisher,
        analytic_score=_normal1d_score,
        analytic_kl=normal1d_kl,
        quadrature_rule=_normal1d_quadrature,
        default_start=lambda data: np.array(
            [np.mean(data.observations), max(np.std(data.observations), 1e-3)]
        ),
    )


def iid_replicates(base: ModelFamily, n: int) -> ModelFamily:
    """Family whose observation is ``n`` i.i.d. draws from ``base``.

    The Fisher information scales by ``n``; everything else is summed or
    broadcast accordingly.
    """
    if n < 1:
        raise ValueError("n must be >= 1")

    def logp(y, theta):
        return float(sum(base.log_density(yi, theta) for yi in y))

    def sampler(theta, rng, size):
        return base.sampler(theta, rng, (size, n))

    fisher = None
    if base.analytic_fisher is not None:
        fisher = lambda theta: n * base.analytic_fisher(theta)  # noqa: E731

    score_fn = None
    if base.analytic_score is not None:
        score_fn = lambda y, theta: sum(base.analytic_score(yi, theta) for yi in y)  # noqa: E731

    return ModelFamily(
        name=f"{base.name}-iid{n}",
        dim_k=base.dim_k,
        domain=base.domain,
        log_density=logp,
        sampler=sampler,
        sample_space=ContinuousSampleSpace(dim=n),
        analytic_fisher=fisher,
        analytic_score=score_fn,
        constraint=base.constraint,
    )


# --------------------------------------------------------------------- #
# Multivariate normal variants (Table of constant-curvature cases)
# --------------------------------------------------------------------- #


def _mvn_pieces(variant: str, d: int | None, known_cov):
    """Return (k, d, domain, mu_of, sigma_of, dsigma_of) for a variant."""
    if variant == "full-2d":
        dd = 2

        def sigma_of(t):
            s1, s2, r = t[2], t[3], t[4]
            return np.array([[s1 * s1, r * s1 * s2], [r * s1 * s2, s2 * s2]])

        def dsigma_of(t):
            s1, s2, r = t[2], t[3], t[4]
            return [
                np.array([[2 * s1, r * s2], [r * s2, 0.0]]),
                np.array([[0.0, r * s1], [r * s1, 2 * s2]]),
                np.array([[0.0, s1 * s2], [s1 * s2, 0.0]]),
            ]

        domain = (_REAL, _REAL, _POS, _POS, (-1.0, 1.0))
    elif variant == "uncorrelated-2d":
        dd = 2

        def sigma_of(t):
            return np.diag([t[2] ** 2, t[3] ** 2])

        def dsigma_of(t):
            return [np.diag([2 * t[2], 0.0]), np.diag([0.0, 2 * t[3]])]

        domain = (_REAL, _REAL, _POS, _POS)
    elif variant == "iso-2d" or variant == "iso-d":
        dd = 2 if variant == "iso-2d" else int(d)

        def sigma_of(t):
            return t[dd] ** 2 * np.eye(dd)

        def dsigma_of(t):
            return [2 * t[dd] * np.eye(dd)]

        domain = (_REAL,) * dd + (_POS,)
    elif variant == "known-cov-d":
        dd = int(d)
        S = np.asarray(known_cov, dtype=float)
        if S.shape != (dd, dd):
            raise ValueError("known covariance must be d x d")

        def sigma_of(t):
            return S

        def dsigma_of(t):
            return []

        domain = (_REAL,) * dd
    else:
        raise ValueError(f"unknown mvnormal variant {variant!r}")

    k = len(domain)
    return k, dd, domain, (lambda t: t[:dd]), sigma_of, dsigma_of


def mvnormal(variant: str, d: int | None = None, known_cov=None) -> ModelFamily:
    """Multivariate normal family in one of the fixed parametrizations.

    Variants: ``full-2d`` (mu1, mu2, s1, s2, rho), ``uncorrelated-2d``,
    ``iso-2d``, ``iso-d`` (means plus one common sigma), ``known-cov-d``
    (means only, fixed covariance).
    """
    k, dd, domain, mu_of, sigma_of, dsigma_of = _mvn_pieces(variant, d, known_cov)

    def logp(y, theta):
        S = sigma_of(theta)
        diff = np.asarray(y, dtype=float) - mu_of(theta)
        L = np.linalg.cholesky(S)
        z = np.linalg.solve(L, diff)
        return float(-0.5 * z @ z - np.log(np.diag(L)).sum() - 0.5 * dd * _LOG_2PI)

    def fisher(theta):
        # mean block Sigma^-1; scale block (1/2) tr(Sigma^-1 dS Sigma^-1 dS)
        S = sigma_of(theta)
        Sinv = np.linalg.inv(S)
        dS = dsigma_of(theta)
        g = np.zeros((k, k))
        g[:dd, :dd] = Sinv
        for i, Di in enumerate(dS):
            Ai = Sinv @ Di
            for j, Dj in enumerate(dS[: i + 1]):
                val = 0.5 * np.trace(Ai @ Sinv @ Dj)
                g[dd + i, dd + j] = g[dd + j, dd + i] = val
        return g

    def sampler(theta, rng, size):
        L = np.linalg.cholesky(sigma_of(theta))
        shape = (size, dd) if np.isscalar(size) else tuple(size) + (dd,)
        return mu_of(theta) + rng.standard_normal(shape) @ L.T

    nodes, weights = np.polynomial.hermite.hermgauss(12)

    def quadrature(theta):
        L = np.linalg.cholesky(sigma_of(theta))
        grids = np.meshgrid(*([nodes] * dd), indexing="ij")
        x = np.stack([g.ravel() for g in grids], axis=-1)
        pts = mu_of(theta) + math.sqrt(2.0) * x @ L.T
        w = np.ones(len(pts))
        for g in np.meshgrid(*([weights] * dd), indexing="ij"):
            w = w * g.ravel()
        return pts, w / math.pi ** (dd / 2.0)

    return ModelFamily(
        name=f"mvnormal-{variant}" + (f"-d{dd}" if "d" in variant else ""),
        dim_k=k,
        domain=domain,
        log_density=logp,
        sampler=sampler,
        sample_space=ContinuousSampleSpace(dim=dd),
        analytic_fisher=fisher,
        quadrature_rule=quadrature if dd <= 3 else None,
    )


# --------------------------------------------------------------------- #
# Multinomial
# --------------------------------------------------------------------- #


def multinomial(categories: int, trials: int) -> ModelFamily:
    """Multinomial with M categories and n trials; free parameters pi_1..pi_{M-1}."""
    M, n = int(categories), int(trials)
    if M < 2 or n < 1:
        raise ValueError("need categories >= 2 and trials >= 1")
    k = M - 1

    counts = [
        np.array(c + (n - sum(c),), dtype=np.int64)
        for c in itertools.product(range(n + 1), repeat=k)
        if sum(c) <= n
    ]

    def full_p(theta):
        p = np.empty(M)
        p[:k] = theta
        p[k] = 1.0 - theta.sum()
        return p

    def logp(y, theta):
        p = full_p(np.asarray(theta, dtype=float))
        y = np.asarray(y)
        out = math.lgamma(n + 1)
        for yi, pi in zip(y, p):
            out += yi * math.log(pi) - math.lgamma(yi + 1)
        return out

    def score_fn(y, theta):
        p = full_p(np.asarray(theta, dtype=float))
        y = np.asarray(y, dtype=float)
        return y[:k] / p[:k] - y[k] / p[k]

    def fisher(theta):
        p = full_p(np.asarray(theta, dtype=float))
        return n * (np.diag(1.0 / p[:k]) + 1.0 / p[k])

    return ModelFamily(
        name=f"multinomial-M{M}-n{n}",
        dim_k=k,
        domain=((0.0, 1.0),) * k,
        log_density=logp,
        sampler=lambda theta, rng, size: rng.multinomial(n, full_p(theta), size=size),
        sample_space=FiniteSampleSpace(counts),
        analytic_fisher=fisher,
        analytic_score=score_fn,
        constraint=lambda theta: float(np.sum(theta)) < 1.0,
    )


# --------------------------------------------------------------------- #
# Rasch test (one person, m known items)
# --------------------------------------------------------------------- #


@dataclass(frozen=True)
class RaschTest:
    """A test of m items with known difficulties, one latent ability."""

    beta: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "beta", np.atleast_1d(np.asarray(self.beta, dtype=float)))

    @property
    def m(self) -> int:
        return self.beta.size

    def prob(self, theta: float) -> np.ndarray:
        """Success probabilities pi_j(theta) for all items."""
        return sigmoid(theta - self.beta)


def rasch_joint_loglik(test: RaschTest, theta: float, y) -> float:
    """Joint log likelihood of a binary response vector under the Rasch model.

    Evaluated as ``sum_j y_j (theta - beta_j) - log(1 + e^(theta - beta_j))``,
    stable for large ``|theta|``.
    """
    y = np.asarray(y, dtype=float)
    if y.shape != (test.m,):
        raise ValueError(f"response vector must have length {test.m}, got {y.shape}")
    x = theta - test.beta
    return float(np.sum(y * x - log1pexp(x)))


def test_information(test: RaschTest, theta: float) -> float:
    """Fisher information of the whole test: sum_j pi_j (1 - pi_j)."""
    return float(np.sum(logistic_variance(theta - test.beta)))


@dataclass(frozen=True)
class ReparamReport:
    """Pointwise agreement of success probabilities across parametrizations."""

    theta: float
    probabilities: np.ndarray  # rows: theta-, xi-, psi-form
    max_discrepancy: float


def rasch_reparam_check(test: RaschTest, theta: float) -> ReparamReport:
    """Evaluate pi_j under the ability charts theta, xi = e^theta and
    psi = 2 arctan(e^(theta/2)), and report the largest discrepancy."""
    direct = test.prob(theta)
    xi = math.exp(theta)
    u = xi * np.exp(-test.beta)
    via_xi = u / (1.0 + u)
    psi = 2.0 * math.atan(math.exp(theta / 2.0))
    v = math.tan(psi / 2.0) ** 2 * np.exp(-test.beta)
    via_psi = v / (1.0 + v)
    probs = np.vstack([direct, via_xi, via_psi])
    gap = float(np.max(np.abs(probs - probs[0])))
    return ReparamReport(theta=theta, probabilities=probs, max_discrepancy=gap)


def rasch_family(test: RaschTest) -> ModelFamily:
    """ModelFamily view of a Rasch test (finite sample space of 2^m patterns)."""
    if test.m > 20:
        raise ValueError("enumeration limited to m <= 20 items")
    patterns = [np.array(p, dtype=np.int64) for p in itertools.product((0, 1), repeat=test.m)]

    def sampler(theta, rng, size):
        return (rng.random((size, test.m)) < test.prob(theta[0])).astype(np.int64)

    return ModelFamily(
        name=f"rasch-m{test.m}",
        dim_k=1,
        domain=(_REAL,),
        log_density=lambda y, theta: rasch_joint_loglik(test, theta[0], y),
        sampler=sampler,
        sample_space=FiniteSampleSpace(patterns),
        analytic_fisher=lambda theta: np.array([[test_information(test, theta[0])]]),
        analytic_score=lambda y, theta: np.array(
            [float(np.sum(y)) - float(np.sum(test.prob(theta[0])))]
        ),
        default_start=lambda data: np.array([0.0]),
        meta={"test": test},
    )


# --------------------------------------------------------------------- #
# Curved exponential family structure
# --------------------------------------------------------------------- #


@dataclass(frozen=True)
class CEFSpec:
    """Exponential-family structure ``p(y|theta) = exp(eta(theta)' t(y) - Psi(eta)) p0(y)``.

    ``q`` is the dimension of theta, ``k`` the dimension of the natural
    parameter; ``q < k`` gives a curved family, ``q == k`` a reparametrized
    full family.  Derivative callables are optional; pipelines fall back
    to finite differences when they are absent.
    """

    name: str
    k: int
    q: int
    eta: Callable[[np.ndarray], np.ndarray]
    log_partition: Callable[[np.ndarray], float]
    suff_stat: Callable[[Any], np.ndarray]
    carrier_log: Callable[[Any], float] | None = None
    eta_jacobian: Callable[[np.ndarray], np.ndarray] | None = None
    eta_hessian: Callable[[np.ndarray], np.ndarray] | None = None
    log_partition_gradient: Callable[[np.ndarray], np.ndarray] | None = None
    log_partition_hessian: Callable[[np.ndarray], np.ndarray] | None = None
    sampler: Callable[[np.ndarray, np.random.Generator], Any] | None = None
    theta_domain: tuple | None = None
    default_start: Callable[[Any], np.ndarray] | None = None
    meta: dict = field(default_factory=dict)

    def check_theta(self, theta: np.ndarray) -> np.ndarray:
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        if theta.shape != (self.q,):
            raise DomainError(f"{self.name}: expected {self.q} parameters")
        if self.theta_domain is not None:
            for i, (lo, hi) in enumerate(self.theta_domain):
                if not (lo < theta[i] < hi):
                    raise DomainError(
                        f"{self.name}: parameter {i} = {theta[i]} outside ({lo}, {hi})"
                    )
        return theta


def cef_loglik(spec: CEFSpec, theta: np.ndarray, y) -> float:
    """Log density assembled from the exponential-family pieces."""
    theta = spec.check_theta(theta)
    eta = spec.eta(theta)
    out = float(eta @ spec.suff_stat(y)) - spec.log_partition(eta)
    if spec.carrier_log is not None:
        out += spec.carrier_log(y)
    return out


def rasch_cef(test: RaschTest) -> CEFSpec:
    """Rasch model as a one-parameter full exponential family.

    Natural parameter theta, sufficient statistic the raw sum score,
    log partition ``sum_j log(1 + e^(theta - beta_j))`` and carrying
    density ``exp(-sum_j y_j beta_j)``.
    """

    def log_partition(eta):
        return float(np.sum(log1pexp(eta[0] - test.beta)))

    def psi_grad(eta):
        return np.array([float(np.sum(sigmoid(eta[0] - test.beta)))])

    def psi_hess(eta):
        return np.array([[float(np.sum(logistic_variance(eta[0] - test.beta)))]])

    return CEFSpec(
        name=f"rasch-cef-m{test.m}",
        k=1,
        q=1,
        eta=lambda theta: np.asarray(theta, dtype=float).reshape(1),
        log_partition=log_partition,
        suff_stat=lambda y: np.array([float(np.sum(y))]),
        carrier_log=lambda y: -float(np.asarray(y, dtype=float) @ test.beta),
        eta_jacobian=lambda theta: np.eye(1),
        eta_hessian=lambda theta: np.zeros((1, 1, 1)),
        log_partition_gradient=psi_grad,
        log_partition_hessian=psi_hess,
        sampler=lambda theta, rng: (rng.random(test.m) < test.prob(theta[0])).astype(np.int64),
        default_start=lambda y: np.array([0.0]),
        meta={"test": test},
    )


# --------------------------------------------------------------------- #
# Grouped two-parameter logistic design
# --------------------------------------------------------------------- #


@dataclass(frozen=True)
class TwoPLGrouped:
    """Two-parameter logistic model with grouped parameters.

    ``a_idx[j]`` / ``b_idx[j]`` select each item's discrimination and
    difficulty value (0 = the fixed reference ``alpha=1`` / ``beta=0``,
    1 = the free ``alpha2`` / ``beta2``); ``g_idx[p]`` selects each
    person's ability group.  Free parameters, in order:
    ``(alpha2, beta2, theta1, theta2)``.

    Because parameters are shared within groups, the data collapse to
    success counts in the distinct ``(group, a, b)`` cells; observations
    are stored in that reduced form.
    """

    n: int
    m: int
    a_idx: np.ndarray
    b_idx: np.ndarray
    g_idx: np.ndarray

    def __post_init__(self):
        for name in ("a_idx", "b_idx", "g_idx"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.int64))
        if self.a_idx.shape != (self.m,) or self.b_idx.shape != (self.m,):
            raise ValueError("item selectors must have length m")
        if self.g_idx.shape != (self.n,):
            raise ValueError("person selector must have length n")

    @classmethod
    def paper_design(cls, n: int = 500, m: int = 20) -> "TwoPLGrouped":
        """Balanced design: half the items carry the free (alpha2, beta2)
        pair, half the persons each ability group, everything crossed."""
        if n % 2 or m % 2:
            raise ValueError("need even person and item counts")
        half_m = np.repeat([0, 1], m // 2)
        return cls(
            n=n,
            m=m,
            a_idx=half_m,
            b_idx=half_m,
            g_idx=np.repeat([0, 1], n // 2),
        )

    @property
    def cells(self):
        """Distinct (g, a, b) cells and their person x item counts."""
        persons_per_group = np.bincount(self.g_idx, minlength=2)
        combos: dict[tuple, int] = {}
        items = np.stack([self.a_idx, self.b_idx], axis=1)
        for a, b in {(int(r[0]), int(r[1])) for r in items}:
            n_items = int(np.sum((self.a_idx == a) & (self.b_idx == b)))
            for g in np.unique(self.g_idx):
                combos[(int(g), a, b)] = int(persons_per_group[g]) * n_items
        keys = sorted(combos)
        return keys, np.array([combos[c] for c in keys], dtype=np.int64)

    def cell_eta(self, theta: np.ndarray) -> np.ndarray:
        alpha2, beta2, th1, th2 = theta
        alpha = (1.0, alpha2)
        beta = (0.0, beta2)
        ability = (th1, th2)
        keys, _ = self.cells
        return np.array([alpha[a] * (ability[g] - beta[b]) for g, a, b in keys])

    def cef(self) -> CEFSpec:
        keys, counts = self.cells
        k = len(keys)

        def eta_jacobian(theta):
            alpha2, beta2, th1, th2 = theta
            alpha = (1.0, alpha2)
            beta = (0.0, beta2)
            ability = (th1, th2)
            J = np.zeros((k, 4))
            for c, (g, a, b) in enumerate(keys):
                if a == 1:
                    J[c, 0] = ability[g] - beta[b]
                if b == 1:
                    J[c, 1] = -alpha[a]
                J[c, 2 + g] = alpha[a]
            return J

        def eta_hessian(theta):
            H = np.zeros((k, 4, 4))
            for c, (g, a, b) in enumerate(keys):
                if a == 1 and b == 1:
                    H[c, 0, 1] = H[c, 1, 0] = -1.0
                if a == 1:
                    H[c, 0, 2 + g] = H[c, 2 + g, 0] = 1.0
            return H

        def log_partition(eta):
            return float(counts @ log1pexp(eta))

        def psi_grad(eta):
            return counts * sigmoid(eta)

        def psi_hess(eta):
            return np.diag(counts * logistic_variance(eta))

        def sampler(theta, rng):
            p = sigmoid(self.cell_eta(theta))
            return rng.binomial(counts, p)

        def default_start(y):
            # abilities from the reference-item cells, then a crude beta2
            # at alpha2 = 1; the textbook start (1, 0, 0, 0) makes the
            # alpha2 tangent direction vanish and the metric singular
            y = np.asarray(y, dtype=float)
            phat = np.clip(y / counts, 0.5 / counts.max(), 1.0 - 0.5 / counts.max())
            logits = np.log(phat / (1.0 - phat))
            by_cell = dict(zip(keys, logits))
            th = [by_cell.get((g, 0, 0), 0.0) for g in (0, 1)]
            free_logits = [(g, lg) for (g, a, b), lg in by_cell.items() if a == 1 or b == 1]
            beta2 = (float(np.mean([th[g] - lg for g, lg in free_logits]))
                     if free_logits else 0.1)
            return np.array([1.0, beta2, th[0], th[1]])

        return CEFSpec(
            name=f"twopl-grouped-n{self.n}-m{self.m}",
            k=k,
            q=4,
            eta=self.cell_eta,
            log_partition=log_partition,
            suff_stat=lambda y: np.asarray(y, dtype=float),
            eta_jacobian=eta_jacobian,
            eta_hessian=eta_hessian,
            log_partition_gradient=psi_grad,
            log_partition_hessian=psi_hess,
            sampler=sampler,
            default_start=default_start,
            meta={"design": self, "cell_keys": keys, "cell_counts": counts},
        )


# --------------------------------------------------------------------- #
# One-factor, three-item covariance structure model
# --------------------------------------------------------------------- #

# symmetric basis matrices matching the row-wise upper-triangle ordering
# eta = (F11, F12, F13, F22, F23, F33) of the precision matrix
_VEC_IDX = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)]
_E_BASIS = np.zeros((6, 3, 3))
for _m, (_i, _j) in enumerate(_VEC_IDX):
    _E_BASIS[_m, _i, _j] = 1.0
    _E_BASIS[_m, _j, _i] = 1.0


def _vec_star(A: np.ndarray) -> np.ndarray:
    return np.array([A[i, j] for i, j in _VEC_IDX])


def _mat_from_vec(eta: np.ndarray) -> np.ndarray:
    A = np.empty((3, 3))
    for m, (i, j) in enumerate(_VEC_IDX):
        A[i, j] = A[j, i] = eta[m]
    return A


def cfa3_sigma(theta: np.ndarray) -> np.ndarray:
    """Model-implied covariance: loadings (1, lambda, tau), common error
    variance sigma^2."""
    lam, tau, sig = theta
    load = np.array([1.0, lam, tau])
    return np.outer(load, load) + sig**2 * np.eye(3)


def _cfa3_dsigma(theta: np.ndarray) -> np.ndarray:
    lam, tau, sig = theta
    d = np.zeros((3, 3, 3))
    d[0] = np.array([[0.0, 1.0, 0.0], [1.0, 2 * lam, tau], [0.0, tau, 0.0]])
    d[1] = np.array([[0.0, 0.0, 1.0], [0.0, 0.0, lam], [1.0, lam, 2 * tau]])
    d[2] = 2.0 * sig * np.eye(3)
    return d


def _cfa3_d2sigma() -> np.ndarray:
    d2 = np.zeros((3, 3, 3, 3))
    d2[0, 0] = np.diag([0.0, 2.0, 0.0])
    d2[1, 1] = np.diag([0.0, 0.0, 2.0])
    d2[0, 1, 1, 2] = d2[0, 1, 2, 1] = 1.0
    d2[1, 0] = d2[0, 1]
    d2[2, 2] = 2.0 * np.eye(3)
    return d2


_CFA3_D2SIGMA = _cfa3_d2sigma()


def cfa3_embedding(theta: np.ndarray) -> np.ndarray:
    """Row-wise unique elements of the model-implied precision matrix."""
    return _vec_star(np.linalg.inv(cfa3_sigma(theta)))


def _cfa3_eta_jacobian(theta: np.ndarray) -> np.ndarray:
    phi = np.linalg.inv(cfa3_sigma(theta))
    dS = _cfa3_dsigma(theta)
    return np.stack([_vec_star(-phi @ dS[a] @ phi) for a in range(3)], axis=1)


def _cfa3_eta_hessian(theta: np.ndarray) -> np.ndarray:
    phi = np.linalg.inv(cfa3_sigma(theta))
    dS = _cfa3_dsigma(theta)
    H = np.zeros((6, 3, 3))
    for a in range(3):
        for b in range(a, 3):
            M = (phi @ dS[a] @ phi @ dS[b] @ phi
                 + phi @ dS[b] @ phi @ dS[a] @ phi
                 - phi @ _CFA3_D2SIGMA[a, b] @ phi)
            H[:, a, b] = H[:, b, a] = _vec_star(M)
    return H


def cfa3_spec(n: int) -> CEFSpec:
    """CEF structure of the three-item model for a sample of size n.

    The ambient family is the zero-mean trivariate normal in its natural
    (precision) parametrization; the log partition is
    ``-(n/2) log det Phi(eta)``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")

    def log_partition(eta):
        phi = _mat_from_vec(np.asarray(eta, dtype=float))
        sign, logdet = np.linalg.slogdet(phi)
        if sign <= 0:
            raise DomainError("precision matrix is not positive definite")
        return -0.5 * n * logdet

    def psi_grad(eta):
        S = np.linalg.inv(_mat_from_vec(np.asarray(eta, dtype=float)))
        # tr(Phi^-1 E_m): diagonal entries once, off-diagonals twice
        return -0.5 * n * np.array([S[i, j] * (1.0 if i == j else 2.0) for i, j in _VEC_IDX])

    def psi_hess(eta):
        S = np.linalg.inv(_mat_from_vec(np.asarray(eta, dtype=float)))
        return 0.5 * n * np.einsum("ab,mbc,cd,nda->mn", S, _E_BASIS, S, _E_BASIS)

    def suff_stat(Y):
        Y = np.asarray(Y, dtype=float)
        C = Y.T @ Y
        return np.array([-0.5 * C[0, 0], -C[0, 1], -C[0, 2],
                         -0.5 * C[1, 1], -C[1, 2], -0.5 * C[2, 2]])

    def sampler(theta, rng):
        L = np.linalg.cholesky(cfa3_sigma(theta))
        return rng.standard_normal((n, 3)) @ L.T

    return CEFSpec(
        name=f"cfa3-n{n}",
        k=6,
        q=3,
        eta=cfa3_embedding,
        log_partition=log_partition,
        suff_stat=suff_stat,
        carrier_log=lambda Y: -1.5 * n * _LOG_2PI,
        eta_jacobian=_cfa3_eta_jacobian,
        eta_hessian=_cfa3_eta_hessian,
        log_partition_gradient=psi_grad,
        log_partition_hessian=psi_hess,
        sampler=sampler,
        theta_domain=(_REAL, _REAL, _POS),
        default_start=lambda y: np.array([1.0, 1.0, 1.0]),
        meta={"n": n},
    )


def cfa3_family(n_for_metric: int = 1) -> ModelFamily:
    """Per-observation view of the three-item model (one 3-vector at a time).

    ``analytic_fisher`` is the single-observation induced metric; a sample
    of n observations carries n times this information.
    """
    spec1 = cfa3_spec(1)

    def logp(y, theta):
        return cef_loglik(spec1, theta, np.asarray(y, dtype=float).reshape(1, 3))

    def score_fn(y, theta):
        theta = np.asarray(theta, dtype=float)
        eta = spec1.eta(theta)
        t = spec1.suff_stat(np.asarray(y, dtype=float).reshape(1, 3))
        return spec1.eta_jacobian(theta).T @ (t - spec1.log_partition_gradient(eta))

    def fisher(theta):
        theta = np.asarray(theta, dtype=float)
        J = spec1.eta_jacobian(theta)
        G = spec1.log_partition_hessian(spec1.eta(theta))
        return J.T @ G @ J

    def sampler(theta, rng, size):
        L = np.linalg.cholesky(cfa3_sigma(theta))
        shape = (size, 3) if np.isscalar(size) else tuple(size) + (3,)
        return rng.standard_normal(shape) @ L.T

    return ModelFamily(
        name="cfa3",
        dim_k=3,
        domain=(_REAL, _REAL, _POS),
        log_density=logp,
        sampler=sampler,
        sample_space=ContinuousSampleSpace(dim=3),
        analytic_fisher=fisher,
        analytic_score=score_fn,
        default_start=lambda data: np.array([1.0, 1.0, 1.0]),
        meta={"n_for_metric": n_for_metric},
    )


# --------------------------------------------------------------------- #
# Bernoulli in the success-probability chart
# --------------------------------------------------------------------- #


def bernoulli_pi_family() -> ModelFamily:
    """Single Bernoulli trial parametrized by the success probability.

    Equivalent to a one-item Rasch test under the chart pi = logistic(theta);
    Fisher information 1/(pi (1 - pi)).
    """

    def logp(y, theta):
        p = theta[0]
        return math.log(p) if y else math.log1p(-p)

    return ModelFamily(
        name="bernoulli-pi",
        dim_k=1,
        domain=((0.0, 1.0),),
        log_density=logp,
        sampler=lambda theta, rng, size: (rng.random(size) < theta[0]).astype(np.int64),
        sample_space=FiniteSampleSpace([0, 1]),
        analytic_fisher=lambda theta: np.array([[1.0 / (theta[0] * (1.0 - theta[0]))]]),
        analytic_score=lambda y, theta: np.array(
            [(y - theta[0]) / (theta[0] * (1.0 - theta[0]))]
        ),
    )


# --------------------------------------------------------------------- #
# Model-spec files
# --------------------------------------------------------------------- #


def family_from_spec(spec: dict):
    """Build a family from a model-spec mapping (the CLI's JSON schema).

    Schemas::

        {"family": "normal1d"}
        {"family": "normal1d-iid", "n": 5}
        {"family": "mvnormal", "variant": "full-2d" | "uncorrelated-2d" |
         "iso-2d" | "iso-d" | "known-cov-d", "d": 3, "S": [[...], ...]}
        {"family": "multinomial", "categories": 3, "trials": 10}
        {"family": "rasch", "difficulties": [-1, 0, 1]}
        {"family": "twopl-grouped", "persons": 500, "items": 20}
        {"family": "cfa3", "n": 30}

    Returns a :class:`ModelFamily` except for ``twopl-grouped`` and
    ``cfa3``, which return the richer design / CEF objects.
    """
    kind = spec.get("family")
    if kind == "normal1d":
        return normal1d()
    if kind == "normal1d-iid":
        return iid_replicates(normal1d(), int(spec["n"]))
    if kind == "mvnormal":
        return mvnormal(spec["variant"], d=spec.get("d"), known_cov=spec.get("S"))
    if kind == "multinomial":
        return multinomial(int(spec["categories"]), int(spec["trials"]))
    if kind == "rasch":
        return rasch_family(RaschTest(np.asarray(spec["difficulties"], dtype=float)))
    if kind == "twopl-grouped":
        return TwoPLGrouped.paper_design(int(spec.get("persons", 500)),
                                         int(spec.get("items", 20)))
    if kind == "cfa3":
        return cfa3_spec(int(spec["n"]))
    raise ValueError(f"unknown family {kind!r} in model spec")
