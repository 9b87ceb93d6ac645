from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gdmsdim.constants import (bramble_hilbert_constant, derivative_constant_analytic2d,
                               derivative_constant_mobius, error_budget,
                               interpolation_error_factor, mobius_s_factor, round_up,
                               second_order_sum, tail_constant_apollonian, tail_constant_cf,
                               tail_sum_bounds_1d)
from gdmsdim.errors import ErrTooLarge, RangeError, UnsupportedDimension


def test_bramble_hilbert_values():
    assert bramble_hilbert_constant(2) == pytest.approx(3 * math.sqrt(6), rel=1e-15)
    assert bramble_hilbert_constant(3) == pytest.approx(6 * math.sqrt(15), rel=1e-15)
    assert second_order_sum(2) == pytest.approx(1.5)
    with pytest.raises(UnsupportedDimension):
        bramble_hilbert_constant(4)


def test_mobius_core_factor_cf_4gen():
    q, s = mobius_s_factor(1.15, 2)
    assert 0.7 * 41 <= q <= 41
    assert 0 < s < math.sqrt(2) - 1


def test_mobius_constant_is_prefactor_times_core():
    q, _ = mobius_s_factor(1.15, 2)
    c = derivative_constant_mobius(2, 1.15, 1.0, 2)
    assert c >= 4 * q
    assert c == pytest.approx(4 * q, rel=1e-3)


@given(st.floats(0.05, 3.0), st.floats(0.1, 0.3))
def test_mobius_core_is_the_minimum(t, ds):
    q, s = mobius_s_factor(t, 2)
    f = lambda u: u ** -2 / (1 - u * (2 + u)) ** t
    assert q == pytest.approx(f(s), rel=1e-12)
    for u in (s * (1 - ds), s * (1 + ds)):
        if 0 < u < math.sqrt(2) - 1:
            assert f(u) >= q * (1 - 1e-12)


@given(st.floats(0.1, 2.5), st.floats(0.2, 2.0), st.floats(1.01, 2.0))
def test_mobius_constant_monotone(t, eta, k):
    assert derivative_constant_mobius(2, t * k, eta, 2) >= derivative_constant_mobius(2, t, eta, 2)
    assert derivative_constant_mobius(2, t, eta * k, 2) <= derivative_constant_mobius(2, t, eta, 2)


def test_analytic_order_zero_tends_to_one():
    v = derivative_constant_analytic2d(0.633, 1.0, 0)
    assert 1.0 <= v <= 1.01


def test_analytic_fixed_s_is_not_better_than_free():
    free = derivative_constant_analytic2d(0.633, 1.0, 2)
    fixed = derivative_constant_analytic2d(0.633, 1.0, 2, s_fixed=0.2)
    assert free <= fixed


def test_interpolation_error_factor_examples():
    assert interpolation_error_factor(0.0, 5.0, 7.0, 3.0) == 0.0
    assert interpolation_error_factor(0.1, 1.0, 1.0, 1.0) == pytest.approx(0.022, rel=1e-12)
    with pytest.raises(ErrTooLarge) as ei:
        interpolation_error_factor(1.0, 1.0, 1.0, 1.0)
    assert "reduce mesh_h" in str(ei.value)


@given(st.floats(1e-4, 3e-3), st.floats(1.01, 3.0))
def test_interpolation_error_monotone_in_h(h, k):
    assert interpolation_error_factor(h * k, 10, 100, 7.3) > interpolation_error_factor(h, 10, 100, 7.3)


def test_tail_constant_cf_formula():
    t, R, C1 = 1.8, 30.0, 14.0
    assert tail_constant_cf(2, t, R, C1) == pytest.approx(math.pi * C1 * R ** (2 - 2 * t) / (2 * t - 2))
    assert tail_constant_cf(3, 2.6, 10.0, 18.0) == pytest.approx(
        2 * math.pi * 18 * 10 ** (3 - 5.2) / (5.2 - 3))
    with pytest.raises(RangeError):
        tail_constant_cf(2, 1.0, 10.0, 1.0)


def test_tail_constant_apollonian_value():
    assert tail_constant_apollonian(1.3, 100, 6) == pytest.approx(
        6 * 4 ** 1.3 * 100 ** -1.6 / 1.6, rel=1e-12)
    # the quoted 0.01427 is a rounded hand evaluation of the same formula
    assert tail_constant_apollonian(1.3, 100, 6) == pytest.approx(0.01427, rel=1e-2)
    vals = [tail_constant_apollonian(1.3, N, 6) for N in (10, 100, 1000, 10_000)]
    assert all(a > b for a, b in zip(vals, vals[1:]))
    with pytest.raises(RangeError):
        tail_constant_apollonian(0.5, 10, 6)


@given(st.floats(0.6, 2.5), st.floats(-0.9, 0.9), st.floats(-1.5, 1.5), st.integers(5, 60))
def test_tail_sum_bounds_bracket_partial_sums(t, a, b, N):
    n = np.arange(N + 1, N + 200_001, dtype=float)
    head = np.sum(((n + a) ** 2 + b * b) ** -t)
    # the rest beyond the window is bounded by the same integral comparison
    up_rest, lo_rest = tail_sum_bounds_1d(t, a, b, N + 200_000)
    up, lo = tail_sum_bounds_1d(t, a, b, N)
    assert lo <= head + up_rest
    assert head + lo_rest <= up


@given(st.floats(1e-300, 1e300))
def test_round_up_never_decreases(x):
    assert round_up(x) >= x


def test_error_budget_consistency():
    b = error_budget("mobius", 2, 1.15, 1.0, 1e-3)
    assert b.err_max == pytest.approx(
        2 * b.C_BH * (b.C1 * 1e-3 + 1) * b.C2 * 1e-6, rel=1e-12)
    assert b.kappa == pytest.approx(math.sqrt(2) * b.C1)
