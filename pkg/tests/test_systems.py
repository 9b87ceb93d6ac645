from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gdmsdim.core import Ball, Moebius, compose, hutchinson_dimension, validate_system
from gdmsdim.errors import NotFoundError, OverlapError
from gdmsdim.systems import (ABC_COEFFS, CATALOG, E4, E5, F_MATRIX, LAM, abc_system,
                             apollonian_angles, apollonian_left_factor, apollonian_map,
                             apollonian_system, build_system, cf_system,
                             gaussian_prime_generators, get_entry, is_gaussian_prime,
                             schottky2d_generator, schottky2d_system, schottky3d_system,
                             similitude_system)


def _isprime(m):
    m = abs(m)
    if m < 2:
        return False
    return all(m % d for d in range(2, int(math.isqrt(m)) + 1))


def gaussian_prime_oracle(a, b):
    if b == 0:
        return _isprime(a) and abs(a) % 4 == 3
    if a == 0:
        return _isprime(b) and abs(b) % 4 == 3
    return _isprime(a * a + b * b)


def test_finite_cf_alphabets():
    assert len(cf_system(2, "finite", E4).maps()) == 4
    assert len(cf_system(3, "finite", E5).maps()) == 5


def test_gaussian_prime_examples():
    assert is_gaussian_prime(1, 1)
    assert is_gaussian_prime(3, 0)
    assert not is_gaussian_prime(2, 0)


def test_gaussian_primes_against_norm_oracle():
    got = set(gaussian_prime_generators(50))
    want = {(a, b) for a in range(1, 53) for b in range(-52, 53)
            if a * a + b * b < 52 ** 2 and gaussian_prime_oracle(a, b)}
    assert got == want


def test_abc_examples():
    spec = abc_system()
    phi1 = spec.maps()[0]
    assert np.allclose(phi1.apply([0.0, 0.0]), [0.1, 0.0])
    pts = Ball((0.0, 0.0), 0.2).samples(2000)
    assert phi1.derivative_norm(pts).max() <= 0.25 + 2 * 0.2 * 0.1 + 1e-15
    a1, _, c1 = ABC_COEFFS[0]
    assert (1 - abs(a1)) / (2 * abs(c1)) == pytest.approx(3.75)


def test_schottky2d_incidence_and_generator():
    spec = schottky2d_system()
    edges = {(m.source, m.target) for m in spec.maps()}
    assert len(edges) == 6
    assert all(i != j for i, j in edges)
    g1 = Moebius(schottky2d_generator(0))
    X = [v.X for v in spec.vertices]
    for src in (1, 2):
        y = g1.apply(X[src].samples(1000, seed=src))
        assert np.all(X[0].contains(y))


def test_schottky3d_separation():
    spec = schottky3d_system()
    c = [v.X.c for v in spec.vertices]
    gap = min(np.linalg.norm(c[i] - c[j]) for i in range(4) for j in range(i + 1, 4)) - 1.0
    assert gap == pytest.approx(3 * math.sqrt(2) / 2 - 1, abs=1e-12)
    assert gap == pytest.approx(1.121320, abs=1e-6)


@pytest.mark.parametrize("k", range(1, 7))
@pytest.mark.parametrize("n", [1, 2, 5, 17])
def test_apollonian_left_factor_determinant(k, n):
    assert abs(np.linalg.det(apollonian_left_factor(k, n))) == pytest.approx(LAM ** (2 * n), rel=1e-10)


def test_apollonian_f_image_of_unit_disk():
    c, r = Moebius(F_MATRIX).image_disk((0.0, 0.0), 1.0)
    assert np.allclose(c, [2 / (2 + LAM), 0.0], atol=1e-14)
    assert r == pytest.approx(LAM / (2 + LAM), rel=1e-14)


def _rotation(theta):
    return Moebius(np.array([[np.exp(1j * theta), 0], [0, 1]]))


@given(st.integers(1, 6), st.integers(1, 8))
def test_apollonian_matrix_matches_functional_composition(k, n):
    th, tp = apollonian_angles(k)
    f = Moebius(F_MATRIX)
    g = compose([_rotation(tp)] + [f] * n + [_rotation(th), f])
    pts = Ball((0.0, 0.0), 1.0).samples(200, seed=k + n)
    y1, l1 = apollonian_map(k, n)._eval(pts)
    y2, l2 = g._eval(pts)
    assert np.allclose(y1, y2, atol=1e-12)
    assert np.allclose(l1, l2, atol=1e-9)


def test_apollonian_subsystem_sizes():
    assert len(build_system("apollonian-12").maps()) == 12
    assert len(apollonian_system((1, 3, 5), "all", 20).maps()) == 60


def test_similitude_dimensions():
    two = similitude_system([0.5, 0.5], [[0.5, 0.0], [-0.5, 0.0]])
    assert hutchinson_dimension(two.info["ratios"]) == pytest.approx(1.0)
    cs = [[2 / 3 * math.cos(a), 2 / 3 * math.sin(a)] for a in (0, 2 * math.pi / 3, 4 * math.pi / 3)]
    three = similitude_system([1 / 3] * 3, cs)
    assert hutchinson_dimension(three.info["ratios"]) == pytest.approx(1.0)
    quarter = similitude_system([0.25] * 3, cs)
    assert hutchinson_dimension(quarter.info["ratios"]) == pytest.approx(math.log(3) / math.log(4))


def test_similitude_overlap_rejected():
    with pytest.raises(OverlapError):
        similitude_system([0.5, 0.5], [[0.2, 0.0], [-0.2, 0.0]])
    with pytest.raises(OverlapError):
        similitude_system([0.5], [[0.7, 0.0]])


def test_unknown_catalog_name_lists_catalog():
    with pytest.raises(NotFoundError) as ei:
        get_entry("nope")
    assert "cf2-4gen" in str(ei.value)


@pytest.mark.parametrize("name", list(CATALOG))
def test_catalog_entries_validate(name):
    rep = validate_system(build_system(name), 1000)
    assert rep.passed, rep.summary()
