"""Geodesic ability scales: flattening, closed forms, Euclidean arc
length, power transforms, and the constant delta-method uncertainty."""

import math

import numpy as np
import pytest
from scipy.integrate import quad

import statmanifold as sm
from statmanifold.geometry import MetricField
from statmanifold.quadrature import adaptive_simpson

T3 = sm.RaschTest([-1.0, 0.0, 1.0])
T5 = sm.RaschTest(np.zeros(5))


class TestFlatten:
    def test_zero_width(self):
        assert sm.flatten(T3, 0.7, 0.7) == 0.0

    def test_single_item_antiderivative(self):
        # integral of sqrt(pi(1-pi)) is 2 arctan(e^(theta/2))
        test = sm.RaschTest([0.0])
        for theta in (-3.0, -0.5, 1.0, 4.0):
            expected = 2.0 * math.atan(math.exp(theta / 2.0)) - 2.0 * math.atan(1.0)
            assert sm.flatten(test, 0.0, theta) == pytest.approx(expected, abs=1e-9)

    def test_additivity(self):
        total = sm.flatten(T3, -2.0, 3.0)
        split = sm.flatten(T3, -2.0, 0.4) + sm.flatten(T3, 0.4, 3.0)
        assert split == pytest.approx(total, abs=1e-9)

    def test_matches_scipy(self):
        oracle = quad(lambda x: math.sqrt(sm.test_information(T3, x)), -2.0, 3.0,
                      epsabs=1e-12)[0]
        assert sm.flatten(T3, -2.0, 3.0) == pytest.approx(oracle, abs=1e-9)


class TestGeodesicAbility:
    def test_equal_items_at_zero(self):
        assert sm.geodesic_ability(T5, 0.0) == pytest.approx(
            (math.pi / 2.0) * math.sqrt(5.0), abs=1e-8)

    def test_lower_limit(self):
        assert sm.geodesic_ability(T5, -40.0) == pytest.approx(0.0, abs=1e-8)

    def test_upper_limit(self):
        assert sm.geodesic_ability(T5, 40.0) == pytest.approx(
            math.pi * math.sqrt(5.0), abs=1e-6)

    def test_strictly_increasing_and_nonnegative(self):
        grid = np.linspace(-8.0, 8.0, 33)
        values = [sm.geodesic_ability(T3, float(t)) for t in grid]
        assert all(v >= 0.0 for v in values)
        assert all(b > a for a, b in zip(values, values[1:]))

    def test_bounded_by_equal_item_ceiling(self):
        for theta in np.linspace(-4.0, 4.0, 9):
            assert sm.geodesic_ability(T5, float(theta)) <= math.pi * math.sqrt(5.0)

    def test_invariant_under_exp_chart(self):
        # recompute A through xi = e^theta with the pulled-back metric;
        # the chart squeezes the lower tail into ~1e-20, so integrate over
        # log-spaced chunks and complete with the same asymptotic tail
        fam = sm.rasch_family(T3)
        g = MetricField.from_family(fam)
        chart = sm.pullback_metric(g, lambda xi: np.array([math.log(xi[0])]),
                                   jacobian=lambda xi: np.array([[1.0 / xi[0]]]))
        theta = 1.1
        theta_L = min(T3.beta) - 45.0
        tail = 2.0 * math.sqrt(sm.test_information(T3, theta_L))
        edges = np.exp(np.arange(theta_L, theta, 3.0).tolist() + [theta])
        via_xi = tail + sum(
            adaptive_simpson(lambda x: math.sqrt(chart([x])[0, 0]), lo, hi, tol=1e-10)
            for lo, hi in zip(edges[:-1], edges[1:]))
        assert via_xi == pytest.approx(sm.geodesic_ability(T3, theta), abs=1e-6)


class TestClosedForm:
    def test_three_items(self):
        assert sm.geodesic_ability_closed_form(3, 0.0) == pytest.approx(
            2.0 * math.sqrt(3.0) * math.pi / 4.0, abs=1e-12)
        assert sm.geodesic_ability_closed_form(3, 0.0) == pytest.approx(2.7207, abs=1e-4)

    def test_single_item(self):
        assert sm.geodesic_ability_closed_form(1, 0.0) == pytest.approx(math.pi / 2.0)

    def test_quadrature_agreement_on_grid(self):
        for m in (1, 5, 10):
            test = sm.RaschTest(np.zeros(m))
            for theta in np.linspace(-6.0, 6.0, 13):
                assert sm.geodesic_ability(test, float(theta)) == pytest.approx(
                    sm.geodesic_ability_closed_form(m, float(theta)), abs=1e-8)

    def test_approximates_symmetric_spread_items(self):
        gaps = [abs(sm.geodesic_ability(T3, float(t))
                    - sm.geodesic_ability_closed_form(3, float(t)))
                for t in np.linspace(-4.0, 4.0, 81)]
        # regression lock; the lower limits agree exactly (both zero)
        assert max(gaps) == pytest.approx(0.1590830719, abs=1e-6)
        assert sm.geodesic_ability(T3, -40.0) == pytest.approx(
            sm.geodesic_ability_closed_form(3, -40.0), abs=1e-8)


class TestRamsayArcLength:
    def test_lower_limit(self):
        assert sm.ramsay_arclength(T3, -40.0) == pytest.approx(0.0, abs=1e-10)

    def test_below_geodesic_ability_everywhere(self):
        # integrand (sum of squared logistic variances)^(1/2) is pointwise
        # below (sum of logistic variances)^(1/2)
        for theta in np.linspace(-5.0, 5.0, 11):
            assert sm.ramsay_arclength(T3, float(theta)) < sm.geodesic_ability(
                T3, float(theta))

    def test_regression_lock(self):
        s = sm.ramsay_arclength(T3, 1.0)
        A = sm.geodesic_ability(T3, 1.0)
        assert s == pytest.approx(1.3052942969, abs=1e-8)
        assert s / A == pytest.approx(0.3619153659, abs=1e-8)

    def test_matches_scipy(self):
        def integrand(x):
            v = [math.exp(2.0 * (x - b)) / (1.0 + math.exp(x - b)) ** 4
                 for b in T3.beta]
            return math.sqrt(sum(v))

        oracle = quad(integrand, -50.0, 1.0, epsabs=1e-13)[0]
        assert sm.ramsay_arclength(T3, 1.0) == pytest.approx(oracle, abs=1e-9)


class TestHougaardTransform:
    def test_half_is_geodesic_ability(self):
        spec = sm.rasch_cef(T3)
        for theta in (-2.0, 0.3, 1.3):
            assert sm.hougaard_transform(spec, 0.5, theta) == pytest.approx(
                sm.geodesic_ability(T3, theta), abs=1e-9)

    def test_zero_is_identity_up_to_shift(self):
        spec = sm.rasch_cef(T3)
        theta_L = min(T3.beta) - 45.0
        assert sm.hougaard_transform(spec, 0.0, 1.3) == pytest.approx(
            1.3 - theta_L, abs=1e-9)

    def test_one_integrates_logistic_variance(self):
        test = sm.RaschTest([0.0])
        spec = sm.rasch_cef(test)
        theta = 0.7
        pi = 1.0 / (1.0 + math.exp(-theta))
        # antiderivative of pi(1-pi) is the logistic cdf; the lower-end
        # value is ~e^-45 and absorbed by the tail completion
        assert sm.hougaard_transform(spec, 1.0, theta) == pytest.approx(pi, abs=1e-9)

    def test_requires_scalar_parameter(self):
        with pytest.raises(ValueError):
            sm.hougaard_transform(sm.cfa3_spec(5), 0.5, 0.0)


class TestAbilitySe:
    def test_exact_values(self):
        se = sm.ability_se(T5, 0.3)
        assert se.unnormalized == pytest.approx(1.0, abs=1e-12)
        assert se.paper_convention == pytest.approx(2.0, abs=1e-12)

    def test_constant_in_theta(self):
        a = sm.ability_se(T3, 0.5)
        b = sm.ability_se(T3, -2.0)
        assert abs(a.unnormalized - b.unnormalized) < 1e-12
        assert abs(a.paper_convention - b.paper_convention) < 1e-12


class TestGridAndScale:
    def test_ability_grid_columns(self):
        grid = sm.ability_grid(T3, [-1.0, 0.0, 1.0])
        assert grid.shape == (3, 4)
        np.testing.assert_allclose(grid[:, 0], [-1.0, 0.0, 1.0])
        assert grid[1, 1] == pytest.approx(sm.geodesic_ability(T3, 0.0))
        assert grid[1, 2] == pytest.approx(sm.geodesic_ability_closed_form(3, 0.0))
        assert grid[1, 3] == pytest.approx(sm.ramsay_arclength(T3, 0.0))

    def test_ability_scale_wrapper(self):
        scale = sm.AbilityScale(test=T3)
        assert scale.geodesic(0.5) == pytest.approx(sm.geodesic_ability(T3, 0.5))
        assert scale.flatten(0.0, 1.0) == pytest.approx(sm.flatten(T3, 0.0, 1.0))
        assert scale.ramsay(0.5) == pytest.approx(sm.ramsay_arclength(T3, 0.5))
        assert scale.se(0.1).unnormalized == pytest.approx(1.0)

    def test_truncation_tail_is_negligible(self):
        # halving the truncation point must not move A beyond the stated bound
        base = sm.geodesic_ability(T3, 1.0)
        deeper = sm.geodesic_ability(T3, 1.0, theta_L=min(T3.beta) - 90.0)
        assert abs(base - deeper) < 1e-9
