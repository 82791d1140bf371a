#!/usr/bin/env python3
"""
Unit tests for roofs, the suspension flow and flow observables.
"""

import math

import numpy as np
import pytest
from numpy.polynomial import Polynomial

from sft_core import LocallyConstantFunction, MissingWord, WordTooShort, to_word, validate_sft
from suspension import (
    DegreeTooHigh, FlowError, FlowPoint, RoofFunction, RoofTooLow, abs_integral, batch_flow_integrals,
    build_observable, flow_birkhoff, flow_step, lap_decomposition, make_point, nu_integral,
    observable_from_function, real_roots, sample_nu, sample_nu_batch, semigroup_check, tilde_bound_holds,
    transport_check,
)
from thermo import equilibrium_measure, sample_orbits


@pytest.fixture
def full_shift():
    return validate_sft([[1, 1], [1, 1]], 0.5)


@pytest.fixture
def golden_mean():
    return validate_sft([[1, 1], [1, 0]], 0.5)


@pytest.fixture
def step_roof(full_shift):
    """f(1) = 1, f(2) = 1.5."""
    return RoofFunction(LocallyConstantFunction.from_table(full_shift, 1, {'1': 1.0, '2': 1.5}))


@pytest.fixture
def golden_roof(golden_mean):
    return RoofFunction(LocallyConstantFunction.from_table(golden_mean, 2, {'11': 1.0, '12': 1.7, '21': 1.3}))


@pytest.fixture
def uniform(full_shift):
    return equilibrium_measure(full_shift, LocallyConstantFunction.constant(full_shift, 0.0))


@pytest.fixture
def golden_uniform(golden_mean):
    return equilibrium_measure(golden_mean, LocallyConstantFunction.constant(golden_mean, 0.0))


@pytest.fixture
def quadratic(golden_mean, golden_roof):
    """Degree-2 observable of depth 2 on the golden-mean shift."""
    return build_observable(golden_mean, golden_roof, {
        '11': [0.5, -1.0, 0.25],
        '12': [-0.2, 0.3],
        '21': [1.0, 0.0, -0.5],
    })


def random_points(mu, f, count, length, seed):
    rng = np.random.default_rng(seed)
    words = sample_orbits(mu, length, count, rng)
    points = []
    for row in words:
        word = to_word(row)
        points.append(FlowPoint(word, float(rng.uniform(0.0, f(word)))))
    return points, rng


class TestRoof:
    """Roof validation and points."""

    def test_roof_below_one_is_rejected(self, full_shift):
        with pytest.raises(RoofTooLow, match="roof below 1"):
            RoofFunction(LocallyConstantFunction.from_table(full_shift, 1, {'1': 0.5, '2': 2.0}))

    def test_roof_of_exactly_one_is_accepted(self, full_shift):
        assert RoofFunction(LocallyConstantFunction.constant(full_shift, 1.0)).min_value == 1.0

    def test_make_point_checks_level(self, step_roof):
        assert make_point(step_roof, (2, 1), 1.2).level == 1.2
        with pytest.raises(FlowError):
            make_point(step_roof, (1, 2), 1.0)

    def test_with_measure(self, step_roof, uniform):
        assert step_roof.with_measure(uniform).mean == pytest.approx(1.25, abs=1e-14)


class TestFlowStep:
    """The flow map and its semigroup property."""

    def test_two_laps(self, step_roof):
        x = (1, 2, 2, 1, 2, 1, 1, 2, 1, 2)
        point, laps, level = flow_step(step_roof, FlowPoint(x, 0.5), 2.2)
        assert laps == 2
        assert point.base_word == x[2:]
        assert level == pytest.approx(0.2, abs=1e-12)

    def test_unit_roof_tie_goes_to_next_lap(self, full_shift):
        f = RoofFunction(LocallyConstantFunction.constant(full_shift, 1.0))
        point, laps, level = flow_step(f, FlowPoint((1, 2, 1), 0.0), 1.0)
        assert (point.base_word, laps, level) == ((2, 1), 1, 0.0)

    def test_zero_time_is_identity(self, step_roof):
        p = FlowPoint((2, 1, 1), 0.7)
        point, laps, _ = flow_step(step_roof, p, 0.0)
        assert point == p and laps == 0

    def test_negative_time(self, step_roof):
        with pytest.raises(ValueError):
            flow_step(step_roof, FlowPoint((1, 1), 0.0), -1.0)

    def test_truncation_too_short(self, step_roof):
        with pytest.raises(WordTooShort):
            flow_step(step_roof, FlowPoint((1, 1, 1), 0.0), 10.0)

    def test_semigroup(self, golden_roof, golden_uniform):
        points, rng = random_points(golden_uniform, golden_roof, 1000, 40, 11)
        for p in points:
            t1, t2 = rng.uniform(0.0, 5.0, size=2)
            assert semigroup_check(golden_roof, p, float(t1), float(t2))

    @pytest.mark.parametrize('t', [2.0, 5.0, 10.0, 20.0])
    def test_lap_count_bounds(self, step_roof, uniform, t):
        words = sample_orbits(uniform, 30, 200, np.random.default_rng(2))
        for row in words:
            laps, residual = lap_decomposition(step_roof, to_word(row), t)
            assert laps <= t <= (laps + 1) * step_roof.sup_norm
            assert 0.0 <= residual < step_roof(to_word(row)[laps:])


class TestObservable:
    """Coefficient tables, lap integrals, norms and the condition constant."""

    def test_constant_one(self, full_shift, step_roof):
        F = build_observable(full_shift, step_roof, {'1': [1.0], '2': [1.0]})
        assert F.tilde.values == {(1,): 1.0, (2,): 1.5}
        assert F.sup_norm == 1.0
        assert F.condition_constant == 0.0

    def test_level_observable(self, full_shift):
        f = RoofFunction(LocallyConstantFunction.constant(full_shift, 2.0))
        F = build_observable(full_shift, f, {'1': [0.0, 1.0], '2': [0.0, 1.0]})
        assert F.tilde((1,)) == pytest.approx(2.0)
        assert F.tilde((2,)) == pytest.approx(2.0)
        assert F.sup_norm == pytest.approx(2.0)
        assert F.condition_constant == 0.0

    def test_condition_constant_of_indicator(self, full_shift):
        f = RoofFunction(LocallyConstantFunction.constant(full_shift, 1.0))
        F = build_observable(full_shift, f, {'1': [1.0], '2': [0.0]})
        assert F.condition_constant == pytest.approx(1.0)
        assert F.tilde.values == {(1,): 1.0, (2,): 0.0}

    def test_condition_constant_uses_distance(self, full_shift):
        f = RoofFunction(LocallyConstantFunction.constant(full_shift, 1.0))
        F = build_observable(full_shift, f, {'11': [0.0], '12': [0.5], '21': [0.0], '22': [0.5]})
        assert F.condition_constant == pytest.approx(0.5 / 0.5)

    def test_tilde_depth_follows_roof(self, quadratic):
        assert quadratic.tilde_depth == 2
        assert quadratic.tilde((1, 2)) == pytest.approx(-0.2 * 1.7 + 0.15 * 1.7 ** 2)

    def test_tilde_bound(self, quadratic, full_shift, step_roof):
        assert tilde_bound_holds(quadratic)
        F = build_observable(full_shift, step_roof, {'11': [0.1, 2.0], '12': [-1.0], '21': [0.0, 0.0, 1.0],
                                                     '22': [0.3, -0.3]})
        assert tilde_bound_holds(F)

    def test_degree_too_high(self, full_shift, step_roof):
        with pytest.raises(DegreeTooHigh):
            build_observable(full_shift, step_roof, {'1': [1.0] * 10, '2': [0.0]})

    def test_missing_word(self, golden_mean, golden_roof):
        with pytest.raises(MissingWord, match="21"):
            build_observable(golden_mean, golden_roof, {'11': [1.0], '12': [1.0]})

    def test_abs_integral_splits_at_roots(self):
        assert abs_integral(Polynomial([-1.0, 2.0]), 0.0, 1.0) == pytest.approx(0.5)

    def test_real_roots_inside_the_open_interval(self):
        assert real_roots(Polynomial([-1.0, 0.0, 1.0]), -2.0, 2.0) == pytest.approx([-1.0, 1.0])
        assert real_roots(Polynomial([-1.0, 0.0, 1.0]), -1.0, 1.0) == []
        assert real_roots(Polynomial([1.0, 0.0, 1.0]), -2.0, 2.0) == []
        assert real_roots(Polynomial([3.0]), 0.0, 1.0) == []

    def test_from_function(self, full_shift, step_roof):
        g = LocallyConstantFunction.from_table(full_shift, 1, {'1': 0.0, '2': 1.0})
        F = observable_from_function(step_roof, g)
        assert F.tilde.values == {(1,): 0.0, (2,): 1.5}


class TestFlowIntegrals:
    """Flow Birkhoff integrals."""

    def test_constant_observable(self, step_roof, full_shift):
        F = build_observable(full_shift, step_roof, {'1': [2.5], '2': [2.5]})
        p = FlowPoint((1, 2, 2, 1, 2, 1, 1, 2), 0.3)
        assert flow_birkhoff(F, p, 4.7) == pytest.approx(2.5 * 4.7, rel=1e-12)

    def test_unit_roof_reduces_to_birkhoff_sum(self, full_shift):
        f = RoofFunction(LocallyConstantFunction.constant(full_shift, 1.0))
        g = LocallyConstantFunction.from_table(full_shift, 1, {'1': 0.0, '2': 1.0})
        F = observable_from_function(f, g)
        assert flow_birkhoff(F, FlowPoint((2, 1, 2, 2, 1, 1), 0.0), 4.0) == 3.0

    def test_against_quadrature(self, quadratic, golden_roof, golden_uniform):
        points, rng = random_points(golden_uniform, golden_roof, 100, 30, 17)
        h = 1e-4
        for p in points:
            t = float(rng.uniform(0.0, 6.0))
            # midpoint rule on each lap, where the integrand is a polynomial
            parts = []
            word, level, remaining = p.base_word, p.level, t
            while True:
                roof = golden_roof(word)
                top = min(roof, level + remaining)
                steps = max(1, math.ceil((top - level) / h))
                width = (top - level) / steps
                mids = level + width * (np.arange(steps) + 0.5)
                parts.append(float(quadratic.polynomials[word[:2]](mids).sum() * width))
                remaining -= top - level
                if top < roof:
                    break
                word, level = word[1:], 0.0
            assert flow_birkhoff(quadratic, p, t) == pytest.approx(math.fsum(parts), abs=1e-6)

    def test_time_additivity(self, quadratic, golden_roof, golden_uniform):
        points, rng = random_points(golden_uniform, golden_roof, 200, 30, 23)
        for p in points:
            t1, t2 = (float(v) for v in rng.uniform(0.0, 4.0, size=2))
            middle, _, _ = flow_step(golden_roof, p, t1)
            combined = flow_birkhoff(quadratic, p, t1) + flow_birkhoff(quadratic, middle, t2)
            assert flow_birkhoff(quadratic, p, t1 + t2) == pytest.approx(combined, abs=1e-9)

    def test_vectorized_march_matches(self, quadratic, golden_uniform, golden_roof):
        rng = np.random.default_rng(29)
        words = sample_orbits(golden_uniform, 25, 300, rng)
        levels = np.array([rng.uniform(0.0, golden_roof(to_word(row))) for row in words])
        integrals = batch_flow_integrals(quadratic, words, levels, 7.5)
        for row, level, value in zip(words, levels, integrals):
            expected = flow_birkhoff(quadratic, FlowPoint(to_word(row), float(level)), 7.5)
            assert value == pytest.approx(expected, abs=1e-10)


class TestFlowMeasure:
    """The flow-invariant measure nu."""

    def test_nu_integral_of_constant(self, full_shift, step_roof, uniform):
        F = build_observable(full_shift, step_roof, {'1': [3.0], '2': [3.0]})
        assert nu_integral(uniform, F) == pytest.approx(3.0, rel=1e-12)

    def test_nu_integral_of_level(self, full_shift, uniform):
        f = RoofFunction(LocallyConstantFunction.constant(full_shift, 2.0))
        F = build_observable(full_shift, f, {'1': [0.0, 1.0], '2': [0.0, 1.0]})
        assert nu_integral(uniform, F) == pytest.approx(1.0, rel=1e-12)

    def test_nu_integral_of_base_function(self, full_shift, uniform):
        f = RoofFunction(LocallyConstantFunction.constant(full_shift, 1.0))
        g = LocallyConstantFunction.from_table(full_shift, 1, {'1': 0.0, '2': 1.0})
        assert nu_integral(uniform, observable_from_function(f, g)) == pytest.approx(0.5, abs=1e-14)

    def test_samples_lie_under_the_roof(self, uniform, step_roof):
        words, levels = sample_nu_batch(uniform, step_roof, 5000, 8, np.random.default_rng(4))
        assert words.shape == (5000, 8)
        assert (levels >= 0).all()
        assert (levels < step_roof.base.evaluate(words)).all()

    def test_sampled_level_mean(self, uniform, step_roof, full_shift):
        F = build_observable(full_shift, step_roof, {'1': [0.0, 1.0], '2': [0.0, 1.0]})
        _, levels = sample_nu_batch(uniform, step_roof, 200000, 4, np.random.default_rng(8))
        stderr = levels.std() / math.sqrt(levels.size)
        assert abs(levels.mean() - nu_integral(uniform, F)) <= 4 * stderr

    def test_sample_nu_is_reproducible(self, uniform, step_roof):
        assert sample_nu(uniform, step_roof, seed=3) == sample_nu(uniform, step_roof, seed=3)

    @pytest.mark.parametrize('t', [0.3, 0.7, 0.95])
    def test_transport(self, golden_uniform, golden_roof, t):
        assert transport_check(golden_uniform, golden_roof, t, depth=8, n_bins=12) < 1e-3

    def test_transport_needs_short_time(self, golden_uniform, golden_roof):
        with pytest.raises(FlowError):
            transport_check(golden_uniform, golden_roof, 1.2, depth=8, n_bins=4)
