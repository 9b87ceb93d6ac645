from __future__ import annotations

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from gdmsdim.errors import NonConvergence, PositivityError
from gdmsdim.spectral import (certify_bounds, power_iterate, power_iterate_operator,
                              rounding_slack, spectral_radius_interval)


def dense_radius(M):
    M = M.toarray() if sp.issparse(M) else np.asarray(M)
    return float(np.max(np.abs(np.linalg.eigvals(M))))


def test_symmetric_two_by_two():
    M = sp.csr_matrix([[2.0, 1.0], [1.0, 2.0]])
    w = power_iterate(M, w0=np.ones(2))
    assert np.allclose(w, 1.0)
    c = certify_bounds(M, np.ones(2))
    assert c.lo == pytest.approx(3.0) and c.hi == pytest.approx(3.0)
    assert c.lo <= 3.0 <= c.hi


def test_all_ones():
    M = np.ones((3, 3))
    w = power_iterate(M)
    assert np.allclose(w, 1.0)
    c = certify_bounds(M, w)
    assert c.lo <= 3.0 <= c.hi
    assert c.width <= 1e-11


def test_nonsymmetric_bracket():
    c = certify_bounds(np.array([[1.0, 2.0], [3.0, 4.0]]), np.ones(2))
    assert c.lo == pytest.approx(3.0) and c.hi == pytest.approx(7.0)
    assert c.lo <= (5 + np.sqrt(33)) / 2 <= c.hi


def test_diagonal():
    c = certify_bounds(sp.diags([5.0]), np.array([0.7]))
    assert c.lo <= 5.0 <= c.hi
    assert c.width < 1e-10


def test_stochastic_matrix():
    rng = np.random.default_rng(0)
    M = rng.random((30, 30))
    M /= M.sum(axis=1, keepdims=True)
    c = spectral_radius_interval(sp.csr_matrix(M), tol=1e-10)
    assert c.lo <= 1.0 <= c.hi
    assert c.width <= 1e-9
    assert c.converged


def test_positivity_error():
    with pytest.raises(PositivityError):
        certify_bounds(np.eye(2), np.array([1.0, -1.0]))
    with pytest.raises(PositivityError):
        certify_bounds(np.eye(2), np.array([1.0, 0.0]))


def test_nonconvergence_carries_witness():
    # a permutation has no dominant eigenvalue: power iteration cycles
    M = sp.csr_matrix(np.array([[0.0, 1.0], [1.0, 0.0]]))
    with pytest.raises(NonConvergence) as ei:
        power_iterate(M, tol=1e-12, max_iter=20, w0=np.array([1.0, 0.5]))
    assert ei.value.witness is not None
    assert np.all(ei.value.witness > 0)


@st.composite
def sparse_nonneg(draw):
    n = draw(st.integers(1, 60))
    density = draw(st.floats(0.02, 0.6))
    seed = draw(st.integers(0, 2 ** 31))
    rng = np.random.default_rng(seed)
    M = sp.random(n, n, density=density, random_state=rng, format="csr")
    M = M + sp.diags(rng.random(n) * draw(st.floats(0, 1)))
    return sp.csr_matrix(M)


@pytest.mark.filterwarnings("ignore:matrix has empty rows")
@given(sparse_nonneg())
def test_soundness_random(M):
    c = spectral_radius_interval(M, tol=1e-9, max_iter=2000)
    r = dense_radius(M)
    assert c.lo <= r * (1 + 1e-12) + 1e-300
    assert r <= c.hi * (1 + 1e-12) or r == 0


@given(sparse_nonneg(), st.floats(1e-3, 1e3))
def test_scale_invariance(M, k):
    w = np.random.default_rng(1).random(M.shape[0]) + 0.1
    a = certify_bounds(M, w)
    b = certify_bounds(M * k, w)
    assert b.lo == pytest.approx(k * a.lo, rel=1e-12, abs=1e-300)
    assert b.hi == pytest.approx(k * a.hi, rel=1e-12, abs=1e-300)
    c = certify_bounds(M, w * k)
    assert c.lo == pytest.approx(a.lo, rel=1e-12, abs=1e-300)


def test_operator_form_matches_matrix_form():
    rng = np.random.default_rng(4)
    M = sp.random(50, 50, density=0.2, random_state=rng, format="csr") + sp.eye(50)
    w, it, spread = power_iterate_operator(lambda v: M @ v, 50, 1e-10, 5000)
    assert spread <= 1e-10
    c = certify_bounds(M, w)
    r = dense_radius(M)
    assert c.lo <= r <= c.hi


def test_rounding_slack_grows_with_terms():
    assert rounding_slack(0) == pytest.approx(1e-12)
    assert rounding_slack(10 ** 6) > rounding_slack(10)
