from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gdmsdim.constants import bramble_hilbert_constant
from gdmsdim.core import Ball
from gdmsdim.errors import GeometryError
from gdmsdim.mesh import (Mesh, build_mesh, dump_mesh, interpolate, interpolate_many, load_mesh,
                          locate, locate_many, mesh_stats, simplex_volumes)
from gdmsdim.systems import schottky2d_system

DISK = Ball((0.0, 0.0), 1.0)


@pytest.fixture(scope="module")
def disk_mesh():
    return build_mesh([DISK], 0.1)


def test_unit_disk_coarse():
    m = build_mesh([DISK], 0.5)
    h, nodes, _, q = mesh_stats(m)
    assert h <= 0.5 + 1e-12
    assert nodes >= 13
    assert q > 0
    pts = DISK.boundary_samples(10_000)
    s, lam = locate_many(m, pts, 0)
    assert np.all(lam >= -1e-12)


def test_schottky_submeshes_are_disjoint():
    spec = schottky2d_system()
    m = build_mesh(list(spec.vertices), 0.05)
    assert set(np.unique(m.node_vertex)) == {0, 1, 2}
    for v in range(3):
        simp = m.simplices[m.simplex_vertex == v]
        assert np.all(m.node_vertex[simp] == v)


def test_3d_ball_tetrahedra_are_nondegenerate():
    m = build_mesh([Ball((0.5, 0.0, 0.0), 0.5)], 0.25)
    assert m.dim == 3
    assert np.all(simplex_volumes(m) > 0)
    assert mesh_stats(m)[0] <= 0.25 + 1e-12


def test_locate_node_gives_unit_weight(disk_mesh):
    j = disk_mesh.node_count // 2
    loc = locate(disk_mesh, disk_mesh.nodes[j])
    nodes = disk_mesh.simplices[loc.simplex_index]
    assert j in nodes
    assert loc.lambdas[list(nodes).index(j)] == pytest.approx(1.0, abs=1e-12)


def test_locate_centroid(disk_mesh):
    i = disk_mesh.simplex_count // 3
    c = disk_mesh.nodes[disk_mesh.simplices[i]].mean(axis=0)
    loc = locate(disk_mesh, c)
    assert loc.simplex_index == i
    assert np.allclose(loc.lambdas, 1 / 3, atol=1e-12)


@given(st.floats(0, 2 * np.pi), st.floats(0, 1))
def test_barycentric_reconstruction(theta, rho):
    m = build_mesh([DISK], 0.2)
    x = np.sqrt(rho) * np.array([np.cos(theta), np.sin(theta)])
    loc = locate(m, x)
    assert np.all(loc.lambdas >= -1e-12)
    assert loc.lambdas.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(loc.lambdas @ m.nodes[m.simplices[loc.simplex_index]], x, atol=1e-12)


def test_partition_of_unity_and_affine_exactness(disk_mesh):
    pts = DISK.interior_samples(500, seed=3)
    one = interpolate_many(disk_mesh, np.ones(disk_mesh.node_count), pts)
    assert np.allclose(one, 1.0, atol=1e-13)
    f = lambda p: 0.3 + 2.0 * p[..., 0] - 1.5 * p[..., 1]
    vals = interpolate_many(disk_mesh, f(disk_mesh.nodes), pts)
    assert np.allclose(vals, f(pts), atol=1e-12)
    assert interpolate(disk_mesh, f(disk_mesh.nodes), locate(disk_mesh, pts[0])) == \
        pytest.approx(f(pts[0]), abs=1e-12)


def test_quadratic_interpolation_bound(disk_mesh):
    h = disk_mesh.h_max
    pts = DISK.interior_samples(20_000, seed=1)
    f = lambda p: np.sum(p * p, axis=-1)
    err = np.abs(interpolate_many(disk_mesh, f(disk_mesh.nodes), pts) - f(pts)).max()
    assert err <= 2 * bramble_hilbert_constant(2) * h * h * 2


def test_single_simplex_stats():
    m = Mesh(2, np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), np.array([[0, 1, 2]]),
             np.array([0]), np.array([np.sqrt(2)]), np.array([0, 0, 0]))
    h, nodes, simp, q = mesh_stats(m)
    assert (nodes, simp) == (3, 1)
    assert h == pytest.approx(np.sqrt(2))


def test_refinement_growth():
    a = build_mesh([DISK], 0.1).node_count
    b = build_mesh([DISK], 0.05).node_count
    assert 3.5 <= b / a <= 4.5


def test_inflation_covers_neighbourhood():
    m = build_mesh([DISK], 0.05, inflate=0.1)
    pts = Ball((0.0, 0.0), 1.1).boundary_samples(2000)
    locate_many(m, pts * (1 - 1e-9), 0)
    assert np.linalg.norm(m.nodes, axis=1).max() <= 1.1 + 0.05 + 1e-12
    assert m.reach == pytest.approx(0.15)


def test_reach_beyond_delta_is_rejected():
    with pytest.raises(GeometryError):
        build_mesh([DISK], 0.1, delta=0.05)


def test_deterministic_fingerprint_and_roundtrip(tmp_path):
    a = build_mesh([DISK], 0.2)
    b = build_mesh([DISK], 0.2)
    assert a.fingerprint() == b.fingerprint()
    path = tmp_path / "mesh.txt"
    dump_mesh(a, path)
    c = load_mesh(path)
    assert np.array_equal(c.nodes, a.nodes)
    assert np.array_equal(c.simplices, a.simplices)
    assert c.fingerprint() == a.fingerprint()
