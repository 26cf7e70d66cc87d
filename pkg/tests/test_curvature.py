"""Intrinsic scalar curvature and the two statistical-curvature pipelines."""

import math

import numpy as np
import pytest

import statmanifold as sm
from statmanifold.cli import TABLE1_CASES
from statmanifold.curvature import EFRON_HIGH_CURVATURE, _whitened_components
from statmanifold.families import CEFSpec
from statmanifold.geometry import MetricField
from statmanifold.inference import OptimizerConfig

NORMAL_METRIC = sm.normal_metric()


class TestChristoffel:
    def test_euclidean_vanishes(self):
        gamma = sm.christoffel(MetricField.euclidean(3), [0.2, -0.4, 1.0])
        np.testing.assert_allclose(gamma, 0.0, atol=1e-10)

    def test_normal_known_coefficients(self):
        # G^mu_{mu,s} = -1/s, G^s_{mu,mu} = 1/(2s), G^s_{s,s} = -1/s
        sigma = 1.7
        gamma = sm.christoffel(NORMAL_METRIC, [0.3, sigma])
        np.testing.assert_allclose(gamma[0, 0, 1], -1.0 / sigma, atol=1e-6)
        np.testing.assert_allclose(gamma[0, 1, 0], -1.0 / sigma, atol=1e-6)
        np.testing.assert_allclose(gamma[1, 0, 0], 1.0 / (2.0 * sigma), atol=1e-6)
        np.testing.assert_allclose(gamma[1, 1, 1], -1.0 / sigma, atol=1e-6)
        np.testing.assert_allclose(gamma[0, 0, 0], 0.0, atol=1e-6)

    def test_symmetry_between_lower_indices(self):
        g = MetricField.from_family(sm.mvnormal("full-2d"))
        gamma = sm.christoffel(g, [0.1, -0.2, 1.1, 0.9, 0.2])
        np.testing.assert_allclose(gamma, np.swapaxes(gamma, 1, 2), atol=1e-12)

    def test_singular_metric_raises(self):
        bad = MetricField(lambda th: np.zeros((2, 2)), dim=2)
        with pytest.raises(sm.SingularMetricError):
            sm.christoffel(bad, [0.0, 1.0])


class TestScalarCurvature:
    def test_sphere_positive(self):
        r = 2.0
        sphere = MetricField(lambda th: np.diag([r**2, r**2 * math.sin(th[0]) ** 2]))
        assert sm.scalar_curvature(sphere, [1.1, 0.7]) == pytest.approx(2.0 / r**2,
                                                                        abs=1e-6)

    def test_normal_constant_minus_one(self):
        for point in [(0.0, 1.0), (3.0, 2.0), (-1.0, 0.5), (0.5, 3.0)]:
            assert sm.scalar_curvature(NORMAL_METRIC, point) == pytest.approx(
                -1.0, abs=1e-3)

    def test_one_parameter_models_are_flat(self):
        g = MetricField.from_family(sm.rasch_family(sm.RaschTest([0.0, 1.0])))
        assert sm.scalar_curvature(g, [0.4]) == 0.0

    def test_known_covariance_flat(self):
        fam = sm.mvnormal("known-cov-d", d=3,
                          known_cov=[[1.0, 0.3, 0.1], [0.3, 1.5, -0.2],
                                     [0.1, -0.2, 0.8]])
        g = MetricField.from_family(fam)
        assert sm.scalar_curvature(g, [0.3, -0.2, 0.4]) == pytest.approx(0.0, abs=1e-6)

    def test_table_of_constant_curvatures(self):
        for label, build_metric, point, expected in TABLE1_CASES:
            value = sm.scalar_curvature(build_metric(), point)
            assert value == pytest.approx(expected, abs=1e-2), label

    def test_trinomial_gauss_curvature(self):
        # R = 2 * Gauss curvature = 2/(4n)
        n = 10
        g = MetricField.from_family(sm.multinomial(3, n))
        assert sm.scalar_curvature(g, [0.2, 0.3]) == pytest.approx(
            2.0 / (4.0 * n), abs=1e-3)

    def test_invariant_under_reparametrization(self):
        chart = sm.pullback_metric(NORMAL_METRIC,
                                   lambda phi: np.array([phi[0], math.exp(phi[1])]))
        r_theta = sm.scalar_curvature(NORMAL_METRIC, [0.4, 1.3])
        r_phi = sm.scalar_curvature(chart, [0.4, math.log(1.3)])
        assert abs(r_theta - r_phi) < 1e-3


def linear_embedding_spec() -> CEFSpec:
    """Affine embedding theta -> M theta into a Gaussian natural space."""
    M = np.array([[1.0, 0.2], [0.5, -1.0], [0.3, 0.7], [-0.2, 0.1]])

    return CEFSpec(
        name="affine", k=4, q=2,
        eta=lambda th: M @ th,
        log_partition=lambda eta: 0.5 * float(eta @ eta),
        suff_stat=lambda y: np.asarray(y, dtype=float),
        log_partition_gradient=lambda eta: eta,
        log_partition_hessian=lambda eta: np.eye(4),
        sampler=lambda th, rng: M @ th + rng.standard_normal(4),
        default_start=lambda y: np.zeros(2),
    )


class TestGamma2Analytic:
    @pytest.mark.parametrize("lam,tau,sig,n,expected", [
        (1.0, 1.0, 1.0, 30, 0.083),
        (2.0, 2.0, 1.0, 30, 0.055),
        (1.0, 1.0, math.sqrt(2.0), 30, 0.098),
        (1.0, 1.0, 1.0, 50, 0.050),
        (2.0, 2.0, 1.0, 50, 0.033),
        (1.0, 1.0, math.sqrt(2.0), 50, 0.059),
    ])
    def test_paper_scenarios(self, lam, tau, sig, n, expected):
        report = sm.gamma2_analytic(sm.cfa3_spec(n), [lam, tau, sig])
        assert report.gamma2 == pytest.approx(expected, abs=1e-3)

    def test_matches_closed_form_on_grid(self):
        for lam in (0.5, 1.0, 2.0):
            for tau in (0.5, 1.0, 2.0):
                for sig in (0.8, 1.0, 1.4):
                    for n in (25, 50):
                        pipeline = sm.gamma2_analytic(sm.cfa3_spec(n),
                                                      [lam, tau, sig]).gamma2
                        closed = sm.gamma2_cfa_closed_form(lam, tau, sig, n)
                        assert pipeline == pytest.approx(closed, rel=1e-6)

    def test_affine_embedding_is_flat(self):
        report = sm.gamma2_analytic(linear_embedding_spec(), [0.4, -0.8])
        assert report.gamma2 == pytest.approx(0.0, abs=1e-12)

    def test_invariant_under_reparametrization(self):
        # lambda -> e^a chart
        base = sm.cfa3_spec(30)
        curved = CEFSpec(
            name="cfa3-log-lambda", k=6, q=3,
            eta=lambda th: base.eta(np.array([math.exp(th[0]), th[1], th[2]])),
            log_partition=base.log_partition,
            suff_stat=base.suff_stat,
            log_partition_gradient=base.log_partition_gradient,
            log_partition_hessian=base.log_partition_hessian,
        )
        direct = sm.gamma2_analytic(base, [1.0, 1.0, 1.0]).gamma2
        chart = sm.gamma2_analytic(curved, [0.0, 1.0, 1.0]).gamma2
        assert chart == pytest.approx(direct, rel=1e-6)

    def test_requires_curved_family(self):
        with pytest.raises(ValueError):
            sm.gamma2_analytic(sm.rasch_cef(sm.RaschTest([0.0])), [0.0])

    def test_efron_flag(self):
        report = sm.gamma2_analytic(sm.cfa3_spec(30), [1.0, 1.0, 1.0])
        assert not report.exceeds_efron_threshold
        report_small_n = sm.gamma2_analytic(sm.cfa3_spec(5), [1.0, 1.0, 1.0])
        assert report_small_n.gamma2 > EFRON_HIGH_CURVATURE
        assert report_small_n.exceeds_efron_threshold


class TestCfaClosedForm:
    def test_sigma_to_zero_limit(self):
        for n in (25, 30, 50):
            assert sm.gamma2_cfa_closed_form(1.0, 1.0, 1e-4, n) == pytest.approx(
                4.0 / n, rel=1e-3)

    def test_large_loading_limit(self):
        assert sm.gamma2_cfa_closed_form(50.0, 50.0, 1.0, 25) == pytest.approx(
            38.0 / (27.0 * 25.0), rel=1e-3)
        assert 38.0 / (27.0 * 25.0) == pytest.approx(0.0563, abs=1e-4)

    def test_decays_as_one_over_n(self):
        values = [sm.gamma2_cfa_closed_form(1.3, 0.7, 1.1, n) * n
                  for n in (10, 25, 100, 1000)]
        np.testing.assert_allclose(values, values[0], rtol=1e-10)


class TestGamma2Numeric:
    def test_agrees_with_analytic_at_mle(self):
        spec = sm.cfa3_spec(5000)
        y = spec.sampler(np.array([1.0, 1.0, 1.0]), np.random.default_rng(7))
        numeric = sm.gamma2_numeric(spec, y)
        analytic = sm.gamma2_analytic(spec, numeric.at_point)
        assert numeric.diagnostics["converged"]
        assert numeric.gamma2 == pytest.approx(analytic.gamma2, rel=0.10)
        assert numeric.gamma2 == pytest.approx(analytic.gamma2, rel=1e-9)
        assert numeric.omega2 == pytest.approx(analytic.omega2, rel=1e-9)

    def test_affine_embedding_zero(self):
        spec = linear_embedding_spec()
        y = spec.sampler(np.array([0.4, -0.8]), np.random.default_rng(3))
        report = sm.gamma2_numeric(spec, y)
        assert report.diagnostics["converged"]
        assert report.gamma2 == pytest.approx(0.0, abs=1e-10)

    def test_twopl_negligible_gamma_large_omega(self):
        spec = sm.TwoPLGrouped.paper_design(500, 20).cef()
        for seed in (0, 1, 2):
            y = spec.sampler(np.array([1.5, 0.5, -0.1, 0.1]),
                             np.random.default_rng(seed))
            report = sm.gamma2_numeric(spec, y)
            assert report.diagnostics["converged"]
            assert report.gamma2 < 1e-6
            assert report.omega2 > 10.0

    def test_nonconvergence_flagged(self):
        spec = sm.cfa3_spec(30)
        y = spec.sampler(np.array([1.0, 1.0, 1.0]), np.random.default_rng(4))
        report = sm.gamma2_numeric(spec, y,
                                   config=OptimizerConfig(max_iter=1))
        assert not report.diagnostics["converged"]
        assert math.isnan(report.gamma2)


class TestTablePipelinesAgree:
    def test_whitened_components_match_analytic_contraction(self):
        # the QR construction and the Gram-Schmidt contraction are two
        # routes to the same invariant
        spec = sm.cfa3_spec(40)
        for theta in ([1.0, 1.0, 1.0], [0.7, 1.4, 0.9], [2.0, 0.5, 1.2]):
            theta = np.asarray(theta, dtype=float)
            J = spec.eta_jacobian(theta)
            H = spec.eta_hessian(theta)
            G = spec.log_partition_hessian(spec.eta(theta))
            gamma2, _omega2, _diag = _whitened_components(J, H, G)
            assert gamma2 == pytest.approx(
                sm.gamma2_analytic(spec, theta).gamma2, rel=1e-9)


class TestSimulation:
    def test_k_one_reduces_to_single_call(self):
        spec = sm.cfa3_spec(30)
        summary = sm.curvature_simulation(spec, [1.0, 1.0, 1.0], n=30, K=1,
                                          base_seed=17)
        y = spec.sampler(np.array([1.0, 1.0, 1.0]), np.random.default_rng(17))
        single = sm.gamma2_numeric(spec, y)
        assert summary.K == 1 and summary.converged == 1
        assert summary.gamma2_harmonic == pytest.approx(single.gamma2, rel=1e-12)
        assert summary.omega2_harmonic == pytest.approx(single.omega2, rel=1e-12)

    def test_deterministic_under_seed(self):
        spec = sm.cfa3_spec(30)
        a = sm.curvature_simulation(spec, [1.0, 1.0, 1.0], K=20, base_seed=5)
        b = sm.curvature_simulation(spec, [1.0, 1.0, 1.0], K=20, base_seed=5)
        assert a == b

    def test_sample_size_validated_against_spec(self):
        with pytest.raises(ValueError):
            sm.curvature_simulation(sm.cfa3_spec(30), [1.0, 1.0, 1.0], n=50, K=2)

    def test_small_run_lands_near_analytic(self):
        summary = sm.curvature_simulation(sm.cfa3_spec(30), [1.0, 1.0, 1.0],
                                          K=100, base_seed=1)
        assert summary.converged == 100
        assert summary.gamma2_harmonic == pytest.approx(0.087, rel=0.25)


class TestSphereIsometry:
    def test_identical_points(self):
        report = sm.sphere_embedding_check(3, 10, [0.4, 0.3, 0.3], [0.4, 0.3, 0.3])
        assert report.sphere_distance == 0.0
        assert report.fisher_arc_length == 0.0

    def test_interior_pair(self):
        report = sm.sphere_embedding_check(3, 1, [0.4, 0.3, 0.3], [0.2, 0.5, 0.3])
        assert report.gap < 1e-6
        # independent closed form: 2 sqrt(n) arccos(sum of sqrt(pi pi'))
        bc = sum(math.sqrt(a * b) for a, b in
                 zip([0.4, 0.3, 0.3], [0.2, 0.5, 0.3]))
        assert report.sphere_distance == pytest.approx(2.0 * math.acos(bc), rel=1e-12)

    def test_higher_dimensional_pairs(self):
        rng = np.random.default_rng(2)
        for M, n in [(4, 5), (5, 10)]:
            for _ in range(3):
                p = rng.dirichlet(np.full(M, 5.0))
                q = rng.dirichlet(np.full(M, 5.0))
                report = sm.sphere_embedding_check(M, n, p, q)
                assert report.gap < 1e-6

    def test_rejects_boundary(self):
        with pytest.raises(ValueError):
            sm.sphere_embedding_check(3, 10, [0.5, 0.5, 0.0], [0.4, 0.3, 0.3])
