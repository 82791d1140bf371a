#!/usr/bin/env python3
"""
Unit tests for the large-deviation bound, empirical deviation masses and
the fitted concentration constant.
"""

import math

import numpy as np
import pytest

from deviations import (
    BelowThreshold, BudgetExceeded, DegenerateSeminorm, LDBoundConstants, bound_rows, default_fit_functions,
    discrete_deviation, empirical_Z_exact, empirical_Z_mc, explicit_bound, fit_D, implied_D,
    ld_bound, ld_constants, proposition_bound, required_length, theorem1_rows,
)
from sft_core import LocallyConstantFunction, validate_sft
from suspension import RoofFunction, build_observable, observable_from_function
from thermo import equilibrium_measure, integrate

BINOMIAL_AT_LEAST = 112 / 1024
BINOMIAL_STRICT = 22 / 1024
BINOMIAL_NU = 38 / 512


@pytest.fixture
def full_shift():
    return validate_sft([[1, 1], [1, 1]], 0.5)


@pytest.fixture
def uniform(full_shift):
    return equilibrium_measure(full_shift, LocallyConstantFunction.constant(full_shift, 0.0))


@pytest.fixture
def indicator(full_shift):
    """g(1) = 0, g(2) = 1."""
    return LocallyConstantFunction.from_table(full_shift, 1, {'1': 0.0, '2': 1.0})


@pytest.fixture
def binomial(full_shift, indicator):
    """Unit roof, so the flow average over [0, 10] is a binomial frequency."""
    f = RoofFunction(LocallyConstantFunction.constant(full_shift, 1.0))
    return observable_from_function(f, indicator)


@pytest.fixture
def stepped(full_shift, indicator):
    """Roof f(1) = 1, f(2) = 1.25 with F = g along every fibre."""
    f = RoofFunction(LocallyConstantFunction.from_table(full_shift, 1, {'1': 1.0, '2': 1.25}))
    return observable_from_function(f, indicator)


class TestBoundConstants:
    """X, Y and T0 by hand."""

    @pytest.mark.parametrize('D, epsilon, f_sup, F_sup, F_tilde_semi, f_semi, X, Y, T0', [
        (1 / 16, 0.1, 2.0, 1.0, 1.0, 1.0, 3.125e-4, math.log(8) + 0.00125, 120.0),
        (1 / 8, 0.2, 1.5, 2.0, 1.0, 1.0, 0.02 / 54, math.log(6) + 0.04 / 36, 75.0),
        (1.0, 0.5, 1.25, 1.0, 0.5, 0.25, 0.008, math.log(5) + 0.02, 11.25),
    ])
    def test_hand_arithmetic(self, D, epsilon, f_sup, F_sup, F_tilde_semi, f_semi, X, Y, T0):
        c = LDBoundConstants.from_norms(epsilon, D, f_sup, F_sup, F_tilde_semi, f_semi)
        assert c.X == pytest.approx(X, rel=1e-12)
        assert c.Y == pytest.approx(Y, rel=1e-12)
        assert c.T0 == pytest.approx(T0, rel=1e-12)

    def test_C_is_the_smaller_rate(self):
        c = LDBoundConstants.from_norms(0.5, 1.0, 1.25, 1.0, 0.5, 0.25)
        assert c.C1 == pytest.approx(0.25)
        assert c.C2 == pytest.approx(1.0)
        assert c.C == c.C1

    def test_degenerate_seminorm(self):
        with pytest.raises(DegenerateSeminorm):
            LDBoundConstants.from_norms(0.1, 1.0, 2.0, 1.0, 1.0, 0.0)
        with pytest.raises(DegenerateSeminorm):
            LDBoundConstants.from_norms(0.1, 1.0, 2.0, 1.0, 0.0, 1.0)

    def test_constant_roof_is_degenerate(self, uniform, binomial):
        with pytest.raises(DegenerateSeminorm):
            ld_constants(uniform, binomial, 0.3, 1.0)


class TestBound:
    """The bound and its two-term forms."""

    @pytest.fixture
    def constants(self):
        return LDBoundConstants.from_norms(0.1, 1 / 16, 2.0, 1.0, 1.0, 1.0)

    def test_value_at_t_120(self, constants):
        evaluation = ld_bound(constants, 120.0)
        assert evaluation.theorem == pytest.approx(960.0 * math.exp(-0.03625), rel=1e-12)
        assert evaluation.theorem == pytest.approx(925.8, abs=0.1)
        assert evaluation.log_theorem == pytest.approx(-0.0375 + math.log(120) + math.log(8) + 0.00125)

    def test_below_threshold(self, constants):
        with pytest.raises(BelowThreshold):
            ld_bound(constants, 119.0)

    def test_decreasing_past_the_peak(self, constants):
        grid = np.linspace(1.0 / constants.X, 10 / constants.X, 50)
        values = [ld_bound(constants, float(t)).theorem for t in grid]
        assert all(b < a for a, b in zip(values, values[1:]))

    def test_two_term_forms_are_ordered(self, constants):
        assert constants.collapse_licensed
        for t in np.linspace(constants.T0, 40 * constants.T0, 100):
            t = float(t)
            evaluation = ld_bound(constants, t)
            assert explicit_bound(constants, t) <= proposition_bound(constants, t) * (1 + 1e-12)
            assert evaluation.proposition <= evaluation.theorem * (1 + 1e-12)

    def test_collapse_needs_product_at_least_one(self):
        c = LDBoundConstants.from_norms(0.1, 1.0, 1.5, 0.5, 1.0, 1.0)
        assert not c.collapse_licensed

    def test_bound_rows_skip_small_t(self, constants):
        rows = bound_rows(constants, [60.0, 120.0, 240.0])
        assert [row['t'] for row in rows] == [120.0, 240.0]
        assert rows[0]['T0'] == pytest.approx(120.0)


class TestExactDeviation:
    """Exact deviation masses by enumeration."""

    def test_binomial_tail(self, uniform, binomial):
        exact = empirical_Z_exact(uniform, binomial, 0.3, 10.0)
        assert exact.at_least == pytest.approx(BINOMIAL_AT_LEAST, abs=1e-12)
        assert exact.strictly == pytest.approx(BINOMIAL_STRICT, abs=1e-12)
        assert exact.words == 2 ** 11

    def test_nu_levels(self, uniform, binomial):
        exact = empirical_Z_exact(uniform, binomial, 0.3, 10.0, level_mode='nu')
        assert exact.at_least == pytest.approx(BINOMIAL_NU, abs=1e-9)
        # with a unit roof ||f|| / integral f = 1
        zero = empirical_Z_exact(uniform, binomial, 0.3, 10.0)
        assert exact.at_least <= zero.at_least + 1e-12

    @pytest.mark.parametrize('roof_table, epsilon, t', [
        ({'1': 1.0, '2': 1.25}, 0.4, 9.0),
        ({'1': 1.0, '2': 1.25}, 0.5, 11.0),
        ({'1': 1.0, '2': 1.75}, 0.5, 10.0),
    ])
    def test_nu_levels_against_level_zero(self, uniform, full_shift, indicator, roof_table, epsilon, t):
        f = RoofFunction(LocallyConstantFunction.from_table(full_shift, 1, roof_table))
        F = observable_from_function(f, indicator)
        nu_level = empirical_Z_exact(uniform, F, epsilon, t, level_mode='nu').at_least
        # starting at level s <= ||f|| moves the average by at most 2 ||f|| ||F|| / t
        shift = 2 * f.sup_norm * F.sup_norm / t
        zero_level = empirical_Z_exact(uniform, F, epsilon - shift, t).at_least
        ratio = f.sup_norm / integrate(uniform, f.base)
        assert 0.0 < nu_level <= ratio * zero_level + 1e-12

    def test_independent_of_threads(self, uniform, stepped):
        one = empirical_Z_exact(uniform, stepped, 0.2, 9.0, threads=1)
        four = empirical_Z_exact(uniform, stepped, 0.2, 9.0, threads=4)
        assert one == four

    def test_monotone_in_epsilon(self, uniform, stepped):
        masses = [empirical_Z_exact(uniform, stepped, eps, 6.0).at_least for eps in (0.05, 0.1, 0.2, 0.3, 0.4)]
        assert all(b <= a for a, b in zip(masses, masses[1:]))

    def test_large_epsilon_is_null(self, uniform, stepped):
        assert empirical_Z_exact(uniform, stepped, 2.5, 6.0).at_least == 0.0

    def test_constant_observable_never_deviates(self, uniform, full_shift, stepped):
        F = build_observable(full_shift, stepped.roof, {'1': [0.7], '2': [0.7]})
        assert empirical_Z_exact(uniform, F, 0.1, 7.0).at_least == 0.0
        assert empirical_Z_exact(uniform, F, 0.1, 7.0, level_mode='nu').at_least == 0.0

    def test_budget(self, uniform, binomial):
        with pytest.raises(BudgetExceeded):
            empirical_Z_exact(uniform, binomial, 0.3, 10.0, budget=1000)

    def test_required_length(self, stepped):
        assert required_length(stepped, 10.0, 'zero') == 11
        assert required_length(stepped, 10.0, 'nu') == 13


class TestMonteCarlo:
    """Monte-Carlo deviation frequencies."""

    def test_agrees_with_exact(self, uniform, binomial):
        estimate = empirical_Z_mc(uniform, binomial, 0.3, 10.0, 20000, seed=7)
        stderr = math.sqrt(BINOMIAL_AT_LEAST * (1 - BINOMIAL_AT_LEAST) / 20000)
        assert abs(estimate.estimate - BINOMIAL_AT_LEAST) <= 4 * stderr
        assert estimate.samples == 20000

    def test_nu_levels_agree_with_exact(self, uniform, binomial):
        estimate = empirical_Z_mc(uniform, binomial, 0.3, 10.0, 20000, seed=9, level_mode='nu')
        stderr = math.sqrt(BINOMIAL_NU * (1 - BINOMIAL_NU) / 20000)
        assert abs(estimate.estimate - BINOMIAL_NU) <= 4 * stderr

    def test_reproducible_across_threads(self, uniform, stepped):
        one = empirical_Z_mc(uniform, stepped, 0.2, 8.0, 9000, seed=3, threads=1, block_size=2000)
        four = empirical_Z_mc(uniform, stepped, 0.2, 8.0, 9000, seed=3, threads=4, block_size=2000)
        assert one == four


class TestFitD:
    """Concentration constant from exact discrete deviations."""

    def test_discrete_deviation(self, uniform, indicator):
        assert discrete_deviation(uniform, indicator, 10, 0.3) == pytest.approx(BINOMIAL_AT_LEAST, abs=1e-12)

    def test_implied_D(self, uniform, indicator):
        D = implied_D(BINOMIAL_AT_LEAST, 10, 0.3, indicator.seminorm)
        assert D == pytest.approx(0.9 / (4 * math.log(2 / BINOMIAL_AT_LEAST)), rel=1e-12)
        assert D == pytest.approx(0.0774, abs=1e-3)

    def test_fit_applies_margin(self, uniform, indicator):
        result = fit_D(uniform, [indicator], [10], [0.3], margin=0.1)
        assert not result.fallback
        assert result.D == pytest.approx(1.1 * implied_D(BINOMIAL_AT_LEAST, 10, 0.3, 1.0), rel=1e-12)

    def test_fitted_D_dominates_every_point(self, uniform, stepped):
        result = fit_D(uniform, default_fit_functions(stepped), [4, 6, 8, 10], [0.1, 0.2, 0.3])
        for point in result.points:
            seminorm = default_fit_functions(stepped)[point.function].seminorm
            bound = 2 * math.exp(-point.m * point.epsilon ** 2 / (4 * result.D * seminorm ** 2))
            assert point.probability <= bound

    def test_constant_function_falls_back(self, uniform, full_shift):
        g = LocallyConstantFunction.constant(full_shift, 1.0)
        result = fit_D(uniform, [g], [4, 8], [0.1], default_D=2.5)
        assert result.fallback
        assert result.D == 2.5


class TestTheoremOne:
    """Exact deviation masses never exceed the bound."""

    def test_exact_mass_below_bound(self, uniform, stepped):
        D = fit_D(uniform, default_fit_functions(stepped), [4, 6, 8, 10, 12], [0.1, 0.2, 0.3]).D
        constants = ld_constants(uniform, stepped, 0.5, D)
        assert constants.T0 == pytest.approx(11.25)
        for t in (12.0, 14.0, 16.0):
            exact = empirical_Z_exact(uniform, stepped, 0.5, t)
            evaluation = ld_bound(constants, t)
            assert exact.at_least <= evaluation.proposition
            assert exact.at_least <= evaluation.theorem

    def test_rows_drop_small_t(self, uniform, stepped):
        constants = ld_constants(uniform, stepped, 0.5, 0.1)
        rows = theorem1_rows(uniform, stepped, constants, [5.0, 12.0], 0, 1, 'zero', 2 ** 20, 2)
        assert [row['t'] for row in rows] == [12.0]
        assert rows[0]['Z_mc'] is None
        assert rows[0]['Z_exact'] <= rows[0]['bound_thm1']
