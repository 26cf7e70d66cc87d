"""Maximum likelihood schemes, natural gradients, volumes and priors."""

import math

import numpy as np
import pytest
from scipy.integrate import quad

import statmanifold as sm
from statmanifold.core import ModelFamily
from statmanifold.geometry import MetricField
from statmanifold.inference import (
    NormalizationReport,
    OptimizerConfig,
    fit_cef,
    fit_mle,
    jeffreys_normalization,
    jeffreys_prior,
    observed_information,
    volume_element,
)

NORMAL_METRIC = sm.normal_metric()


@pytest.fixture(scope="module")
def normal_data():
    rng = np.random.default_rng(3)
    return rng.normal(1.7, 0.8, 40)


class TestFitMle:
    @pytest.mark.parametrize("method", ["gradient-ascent", "newton-raphson",
                                        "fisher-scoring"])
    def test_normal_closed_form_mle(self, normal_data, method):
        mle = np.array([normal_data.mean(), normal_data.std()])
        config = OptimizerConfig(method=method,
                                 max_iter=5000 if method == "gradient-ascent" else 500)
        result = fit_mle(sm.normal1d(), normal_data, config, theta0=[0.0, 2.5])
        np.testing.assert_allclose(result.theta, mle, atol=1e-8)
        assert result.converged
        assert result.grad_norm <= config.tol_grad

    def test_loglik_nondecreasing_trace(self, normal_data):
        result = fit_mle(sm.normal1d(), normal_data,
                         OptimizerConfig(method="fisher-scoring"), theta0=[0.0, 2.5])
        diffs = np.diff(result.loglik_trace)
        slack = 1e-10 * max(1.0, abs(result.loglik))
        assert np.all(diffs >= -slack)

    def test_rasch_fisher_equals_newton_steps(self):
        # natural parametrization: expected information equals observed
        test = sm.RaschTest([-1.0, 0.0, 1.0])
        fam = sm.rasch_family(test)
        rng = np.random.default_rng(9)
        data = [(rng.random(3) < test.prob(0.8)).astype(int) for _ in range(25)]
        for theta in ([-1.2], [0.0], [0.9]):
            theta = np.asarray(theta, dtype=float)
            grad = np.sum([sm.score(fam, theta, y) for y in data], axis=0)
            newton = np.linalg.solve(observed_information(fam, data, theta), grad)
            fisher = np.linalg.solve(len(data) * fam.analytic_fisher(theta), grad)
            np.testing.assert_allclose(newton, fisher, atol=1e-10)

    def test_cfa_consistency_large_n(self):
        spec = sm.cfa3_spec(5000)
        truth = np.array([1.0, 1.0, 1.0])
        y = spec.sampler(truth, np.random.default_rng(7))
        result = fit_cef(spec, y)
        assert result.converged
        np.testing.assert_allclose(result.theta, truth, atol=0.05)

    def test_nonconvergence_is_flagged_not_fatal(self, normal_data):
        result = fit_mle(sm.normal1d(), normal_data,
                         OptimizerConfig(method="gradient-ascent", max_iter=3),
                         theta0=[0.0, 2.5])
        assert not result.converged
        assert result.iterations == 3

    def test_fallback_on_singular_direction_matrix(self):
        # a flat direction makes the observed information singular; the
        # optimizer must fall back to gradient steps and still improve
        base = sm.normal1d()
        fam = ModelFamily(
            name="flat", dim_k=2, domain=((-math.inf, math.inf),) * 2,
            log_density=lambda y, th: base.log_density(y, [th[0], 1.0]),
            sampler=lambda th, rng, size: rng.normal(th[0], 1.0, size),
            sample_space=base.sample_space,
            analytic_score=lambda y, th: np.array([y - th[0], 0.0]),
            analytic_fisher=lambda th: np.diag([1.0, 0.0]),
            default_start=lambda data: np.array([0.0, 0.0]))
        rng = np.random.default_rng(1)
        data = rng.normal(0.7, 1.0, 30)
        result = fit_mle(fam, data, OptimizerConfig(method="fisher-scoring",
                                                    tol_grad=1e-8))
        assert result.n_fallback_steps > 0
        assert result.theta[0] == pytest.approx(data.mean(), abs=1e-6)


class TestNaturalGradient:
    def test_euclidean_metric_reduces_to_gradient(self):
        fam = sm.mvnormal("known-cov-d", d=2, known_cov=np.eye(2))
        direction = sm.natural_gradient_direction(fam, [0.0, 0.0], grad=[0.3, -0.7])
        np.testing.assert_allclose(direction, [0.3, -0.7], atol=1e-12)

    def test_normal_unit_gradient(self):
        # g^-1 = diag(sigma^2, sigma^2/2) at sigma = 2
        direction = sm.natural_gradient_direction(sm.normal1d(), [0.0, 2.0],
                                                  grad=[1.0, 1.0])
        np.testing.assert_allclose(direction, [4.0, 2.0], atol=1e-12)

    def test_invariant_under_linear_reparametrization(self):
        B = np.array([[2.0, 0.3], [-0.4, 1.5]])
        Binv = np.linalg.inv(B)
        base = sm.normal1d()
        # family in phi = B theta coordinates
        fam = ModelFamily(
            name="normal-linear-chart", dim_k=2,
            domain=((-math.inf, math.inf), (-math.inf, math.inf)),
            log_density=lambda y, phi: base.log_density(y, Binv @ phi),
            sampler=lambda phi, rng, size: base.sampler(Binv @ phi, rng, size),
            sample_space=base.sample_space,
            quadrature_rule=lambda phi: base.quadrature_rule(Binv @ phi),
            constraint=lambda phi: (Binv @ phi)[1] > 0.0)
        theta = np.array([0.4, 1.3])
        rng = np.random.default_rng(5)
        data = rng.normal(0.2, 1.1, 15)
        d_theta = sm.natural_gradient_direction(base, theta, data=data)
        d_phi = sm.natural_gradient_direction(fam, B @ theta, data=data)
        np.testing.assert_allclose(Binv @ d_phi, d_theta, atol=1e-6)

    def test_singular_metric_raises(self):
        fam = ModelFamily(
            name="rank1", dim_k=2, domain=((-math.inf, math.inf),) * 2,
            log_density=lambda y, th: 0.0,
            sampler=lambda th, rng, size: np.zeros(size),
            sample_space=sm.normal1d().sample_space,
            analytic_fisher=lambda th: np.ones((2, 2)))
        with pytest.raises(sm.SingularMetricError):
            sm.natural_gradient_direction(fam, [0.0, 1.0], grad=[1.0, 0.0])


class TestVolumeElement:
    def test_normal(self):
        # det diag(1/s^2, 2/s^2) = 2/s^4
        for sigma in (0.5, 1.0, 2.0):
            assert volume_element(NORMAL_METRIC, [0.0, sigma]) == pytest.approx(
                math.sqrt(2.0) / sigma**2, rel=1e-12)

    def test_identity_metric(self):
        assert volume_element(MetricField.euclidean(3), [0.0, 0.0, 0.0]) == 1.0

    def test_transforms_by_jacobian_determinant(self):
        chart = sm.pullback_metric(NORMAL_METRIC,
                                   lambda phi: np.array([phi[0], math.exp(phi[1])]))
        mu, sigma = 0.3, 1.4
        value = volume_element(chart, [mu, math.log(sigma)])
        assert value == pytest.approx(sigma * math.sqrt(2.0) / sigma**2, abs=1e-8)

    def test_positive_at_interior_points(self):
        g = MetricField.from_family(sm.multinomial(3, 10))
        assert volume_element(g, [0.2, 0.3]) > 0.0


class TestJeffreys:
    def test_bernoulli_matches_beta_half_half(self):
        g = MetricField.from_family(sm.bernoulli_pi_family())
        for pi in (0.2, 0.5, 0.9):
            assert jeffreys_prior(g, [pi]) == pytest.approx(
                1.0 / math.sqrt(pi * (1.0 - pi)), rel=1e-12)
        report = jeffreys_normalization(g, [(0.0, 1.0)])
        assert isinstance(report, NormalizationReport)
        assert report.proper
        assert report.constant == pytest.approx(math.pi, abs=1e-6)

    def test_bernoulli_scipy_oracle(self):
        oracle = quad(lambda p: 1.0 / math.sqrt(p * (1.0 - p)), 0.0, 1.0)[0]
        g = MetricField.from_family(sm.bernoulli_pi_family())
        report = jeffreys_normalization(g, [(0.0, 1.0)])
        assert report.constant == pytest.approx(oracle, abs=1e-6)

    def test_normal_flagged_improper(self):
        report = jeffreys_normalization(NORMAL_METRIC,
                                        [(-math.inf, math.inf), (0.0, math.inf)])
        assert not report.proper
        assert report.constant is None

    def test_construction_rule_invariance_normal(self):
        # applying the sqrt(det g) rule in the (mu, log sigma) chart equals
        # the transformed theta-chart density
        chart = sm.pullback_metric(NORMAL_METRIC,
                                   lambda phi: np.array([phi[0], math.exp(phi[1])]))
        for mu, logsig in [(0.0, 0.0), (1.2, 0.4), (-0.7, -0.5)]:
            direct = jeffreys_prior(chart, [mu, logsig])
            jac_det = math.exp(logsig)
            transformed = jac_det * jeffreys_prior(NORMAL_METRIC,
                                                   [mu, math.exp(logsig)])
            assert direct == pytest.approx(transformed, abs=1e-8)

    def test_construction_rule_invariance_bernoulli(self):
        # Bernoulli in pi vs in theta = logit(pi)
        g_pi = MetricField.from_family(sm.bernoulli_pi_family())
        g_theta = MetricField.from_family(sm.rasch_family(sm.RaschTest([0.0])))
        for theta in (-1.0, 0.0, 2.0):
            pi = 1.0 / (1.0 + math.exp(-theta))
            jac_det = pi * (1.0 - pi)  # dpi/dtheta
            assert jeffreys_prior(g_theta, [theta]) == pytest.approx(
                jac_det * jeffreys_prior(g_pi, [pi]), rel=1e-9)
