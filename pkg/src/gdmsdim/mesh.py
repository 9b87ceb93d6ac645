"""Structured simplicial meshes of the vertex regions.

Every region is covered by the cells of a cubic lattice with spacing ``a``
anchored at the origin.  Cells are split into triangles (alternating diagonals,
"union jack") in 2D and into six Kuhn tetrahedra in 3D, which makes the mesh
conformal.  Simplex diameters equal the cell diagonal ``a*sqrt(n)``.

Point location is lattice arithmetic: the cell comes from ``floor(x/a)`` and
the simplex inside the cell from an ordering of the local coordinates.
"""
from __future__ import annotations

import hashlib
import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .core import Ball
from .errors import CoverageError, GeometryError, NotFoundError

CLAMP = 1e-12
LOCATE_TOL = 1e-10


def _local_simplices(n):
    """Reference simplices of the unit cell as corner offset lists."""
    if n == 2:
        # ids 0,1: parity-even cells (diagonal (0,0)-(1,1)); ids 2,3: parity-odd
        return [
            [(0, 0), (1, 0), (1, 1)],
            [(0, 0), (1, 1), (0, 1)],
            [(0, 0), (1, 0), (0, 1)],
            [(1, 0), (1, 1), (0, 1)],
        ]
    out = []
    for perm in itertools.permutations(range(3)):
        v = [0, 0, 0]
        verts = [tuple(v)]
        for axis in perm:
            v[axis] = 1
            verts.append(tuple(v))
        out.append(verts)
    return out


def _barycentric_operators(n):
    """For each local simplex, the matrix L with lambda = L @ (u, 1)."""
    ops = []
    for verts in _local_simplices(n):
        V = np.array(verts, dtype=float)
        T = np.vstack([V.T, np.ones(n + 1)])
        ops.append(np.linalg.inv(T))
    return np.array(ops)


_PERM_ID = {p: i for i, p in enumerate(itertools.permutations(range(3)))}
_PERM_TABLE = np.full(27, -1, dtype=np.int64)
for _p, _i in _PERM_ID.items():
    _PERM_TABLE[9 * _p[0] + 3 * _p[1] + _p[2]] = _i


def _local_id(n, cells, u):
    """Which reference simplex of its cell contains the local coordinate u."""
    if n == 2:
        par = (cells[:, 0] + cells[:, 1]) & 1
        even = np.where(u[:, 0] >= u[:, 1], 0, 1)
        odd = np.where(u[:, 0] + u[:, 1] <= 1.0, 2, 3)
        return np.where(par == 0, even, odd)
    order = np.argsort(-u, axis=1, kind="stable")
    return _PERM_TABLE[9 * order[:, 0] + 3 * order[:, 1] + order[:, 2]]


def _cell_local_ids(n, cells):
    """The reference simplices used by each cell, in storage order."""
    if n == 2:
        par = (cells[:, 0] + cells[:, 1]) & 1
        return np.where(par[:, None] == 0, [[0, 1]], [[2, 3]])
    return np.tile(np.arange(6), (len(cells), 1))


@dataclass
class Lattice:
    vertex: int
    spacing: float
    lo: np.ndarray            # lowest cell index per axis
    shape: np.ndarray         # number of cells per axis
    cell_first: np.ndarray    # flat cell -> index of its first simplex, -1 if absent
    node_index: np.ndarray    # flat lattice point -> global node index, -1 if absent

    def cell_flat(self, cells):
        rel = cells - self.lo
        inside = np.all((rel >= 0) & (rel < self.shape), axis=1)
        flat = np.zeros(len(cells), dtype=np.int64)
        st = np.cumprod(np.r_[1, self.shape[::-1][:-1]])[::-1]
        flat[inside] = rel[inside] @ st
        return flat, inside

    def node_flat(self, pts_idx):
        shp = self.shape + 1
        rel = pts_idx - self.lo
        st = np.cumprod(np.r_[1, shp[::-1][:-1]])[::-1]
        return rel @ st


@dataclass
class Mesh:
    dim: int
    nodes: np.ndarray
    simplices: np.ndarray
    simplex_vertex: np.ndarray
    h_per_simplex: np.ndarray
    node_vertex: np.ndarray
    lattices: tuple = ()
    reach: float = 0.0
    _tree: object = field(default=None, repr=False)

    @property
    def h_max(self):
        return float(self.h_per_simplex.max())

    @property
    def node_count(self):
        return len(self.nodes)

    @property
    def simplex_count(self):
        return len(self.simplices)

    def vertex_nodes(self, v):
        return np.flatnonzero(self.node_vertex == v)

    def fingerprint(self):
        h = hashlib.sha256()
        for arr in (self.nodes, self.simplices, self.simplex_vertex):
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()[:32]


@dataclass(frozen=True)
class BarycentricLocation:
    simplex_index: int
    lambdas: np.ndarray


def build_mesh(regions, target_h: float, delta: float | None = None,
               inflate: float = 0.0, coverage_samples: int = 2000) -> Mesh:
    """Mesh the X-balls of ``regions`` (a list of Ball or Vertex).

    Cells meeting the open ball of radius R + ``inflate`` are kept, so the mesh
    covers X(inflate) and stays inside X(inflate + target_h).
    """
    balls = [getattr(r, "X", r) for r in regions]
    n = balls[0].dim
    if target_h <= 0:
        raise GeometryError("target_h must be positive")
    reach = inflate + target_h
    if delta is not None and reach > delta * (1 + 1e-12):
        raise GeometryError(f"mesh would leave X(delta): reach {reach:.4g} > delta {delta:.4g}")
    for r in regions:
        W = getattr(r, "W", None)
        if W is not None and r.eta <= reach:
            raise GeometryError("mesh reach exceeds dist(X, boundary of W)")
    a = target_h / np.sqrt(n)
    loc_ops = _local_simplices(n)

    all_nodes, all_simp, simp_vertex, node_vertex, lattices = [], [], [], [], []
    offset = 0
    for v, ball in enumerate(balls):
        c = ball.c
        R = ball.radius + inflate
        lo = np.floor((c - R) / a).astype(np.int64) - 1
        hi = np.ceil((c + R) / a).astype(np.int64) + 1
        shape = hi - lo
        axes = [np.arange(lo[i], hi[i]) for i in range(n)]
        cells = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
        box_lo = cells * a
        nearest = np.clip(c, box_lo, box_lo + a)
        keep = np.linalg.norm(nearest - c, axis=1) < R
        cells = cells[keep]
        kept_flat = np.flatnonzero(keep)

        # lattice points used by kept cells
        corners = np.array(list(itertools.product((0, 1), repeat=n)))
        pts_idx = (cells[:, None, :] + corners[None]).reshape(-1, n)
        nshape = shape + 1
        st = np.cumprod(np.r_[1, nshape[::-1][:-1]])[::-1]
        flat_pts = (pts_idx - lo) @ st
        used = np.unique(flat_pts)
        node_index = np.full(int(np.prod(nshape)), -1, dtype=np.int64)
        node_index[used] = offset + np.arange(len(used))
        coords_idx = np.stack(np.unravel_index(used, tuple(nshape)), axis=-1) + lo
        all_nodes.append(coords_idx * a)
        node_vertex.append(np.full(len(used), v))

        # simplices per cell, in storage order
        lids = _cell_local_ids(n, cells)
        per_cell = lids.shape[1]
        verts = np.array(loc_ops)  # (L, n+1, n)
        sc = cells[:, None, None, :] + verts[lids]  # (C, per_cell, n+1, n)
        sflat = (sc - lo) @ st
        simp = node_index[sflat].reshape(-1, n + 1)
        all_simp.append(simp)
        simp_vertex.append(np.full(len(simp), v))

        cell_first = np.full(int(np.prod(shape)), -1, dtype=np.int64)
        first = sum(len(s) for s in all_simp[:-1])
        cell_first[kept_flat] = first + per_cell * np.arange(len(cells))
        lattices.append(Lattice(v, a, lo, shape, cell_first, node_index))
        offset += len(used)

    nodes = np.concatenate(all_nodes)
    simplices = np.concatenate(all_simp)
    if np.any(simplices < 0):
        raise GeometryError("internal error: simplex references a missing node")
    h = np.full(len(simplices), a * np.sqrt(n))
    mesh = Mesh(n, nodes, simplices, np.concatenate(simp_vertex), h,
                np.concatenate(node_vertex), tuple(lattices), reach)

    vol = simplex_volumes(mesh)
    if np.any(vol <= 1e-12 * h ** n):
        raise GeometryError("degenerate simplex")
    for v, ball in enumerate(balls):
        bs = ball.boundary_samples(coverage_samples)
        try:
            locate_many(mesh, bs, v)
        except NotFoundError as exc:
            raise CoverageError(f"region {v} boundary not covered") from exc
    return mesh


def simplex_volumes(mesh: Mesh):
    P = mesh.nodes[mesh.simplices]
    E = P[:, 1:] - P[:, :1]
    return np.abs(np.linalg.det(E)) / (2 if mesh.dim == 2 else 6)


def _barycentric_generic(P, x):
    """Barycentric coordinates of x (k, n) w.r.t. simplices P (k, n+1, n)."""
    n = P.shape[-1]
    T = np.concatenate([np.swapaxes(P, 1, 2), np.ones((len(P), 1, n + 1))], axis=1)
    rhs = np.concatenate([x, np.ones((len(x), 1))], axis=1)
    return np.linalg.solve(T, rhs[..., None])[..., 0]


def locate_many(mesh: Mesh, pts, vertex: int):
    """Vectorized location: (simplex indices, lambdas (k, n+1))."""
    pts = np.asarray(pts, dtype=float).reshape(-1, mesh.dim)
    if not mesh.lattices:
        return _locate_tree(mesh, pts, vertex)
    lat = mesh.lattices[vertex]
    n = mesh.dim
    ops = _barycentric_operators(n)
    s = pts / lat.spacing
    cells = np.floor(s).astype(np.int64)
    flat, inside = lat.cell_flat(cells)
    first = np.where(inside, lat.cell_first[flat], -1)
    bad = first < 0
    if np.any(bad):
        first, cells = _retry_neighbours(lat, s, cells, first, bad)
    u = s - cells
    lid = _local_id(n, cells, u)
    if n == 2:
        offset = np.where(lid >= 2, lid - 2, lid)
    else:
        offset = lid
    simplex = first + offset
    lam = np.einsum("kij,kj->ki", ops[lid], np.concatenate([u, np.ones((len(u), 1))], axis=1))
    return simplex, _clamp(lam)


def _retry_neighbours(lat, s, cells, first, bad):
    """Points on a face of the covered region: try the adjacent cells."""
    n = s.shape[1]
    idx = np.flatnonzero(bad)
    for k in idx:
        frac = s[k] - cells[k]
        options = []
        for d in range(n):
            opts = [0]
            if frac[d] < 1e-9 * max(1.0, abs(s[k, d])) + 1e-12:
                opts.append(-1)
            if frac[d] > 1 - 1e-9:
                opts.append(1)
            options.append(opts)
        found = False
        for off in itertools.product(*options):
            if not any(off):
                continue
            cand = cells[k] + np.array(off)
            f, ins = lat.cell_flat(cand[None])
            if ins[0] and lat.cell_first[f[0]] >= 0:
                cells[k] = cand
                first[k] = lat.cell_first[f[0]]
                found = True
                break
        if not found:
            raise NotFoundError(f"point {s[k] * lat.spacing} outside the mesh of vertex {lat.vertex}")
    return first, cells


def _clamp(lam):
    low = lam.min(axis=1)
    if np.any(low < -LOCATE_TOL * 1e2):
        raise NotFoundError("point outside its predicted simplex")
    lam = np.where(lam < 0, 0.0, lam)
    return lam / lam.sum(axis=1, keepdims=True)


def _locate_tree(mesh: Mesh, pts, vertex: int):
    """Location for meshes without lattice metadata (e.g. loaded from a dump)."""
    if mesh._tree is None:
        cent = mesh.nodes[mesh.simplices].mean(axis=1)
        mesh._tree = cKDTree(cent)
    k = min(32, mesh.simplex_count)
    _, cand = mesh._tree.query(pts, k=k)
    cand = np.atleast_2d(cand)
    out_s = np.full(len(pts), -1)
    out_l = np.zeros((len(pts), mesh.dim + 1))
    for col in range(k):
        todo = np.flatnonzero(out_s < 0)
        if len(todo) == 0:
            break
        sidx = cand[todo, col]
        lam = _barycentric_generic(mesh.nodes[mesh.simplices[sidx]], pts[todo])
        ok = (lam.min(axis=1) >= -LOCATE_TOL) & (mesh.simplex_vertex[sidx] == vertex)
        out_s[todo[ok]] = sidx[ok]
        out_l[todo[ok]] = lam[ok]
    # among simplices that also contain the point, prefer the lowest index
    for col in range(k):
        sidx = cand[:, col]
        lam = _barycentric_generic(mesh.nodes[mesh.simplices[sidx]], pts)
        ok = (lam.min(axis=1) >= -LOCATE_TOL) & (sidx < out_s) & (mesh.simplex_vertex[sidx] == vertex)
        out_s[ok] = sidx[ok]
        out_l[ok] = lam[ok]
    if np.any(out_s < 0):
        raise NotFoundError("point outside the mesh")
    return out_s, _clamp(out_l)


def locate(mesh: Mesh, x, hint_vertex: int = 0) -> BarycentricLocation:
    s, lam = locate_many(mesh, np.asarray(x, dtype=float)[None], hint_vertex)
    return BarycentricLocation(int(s[0]), lam[0])


def interpolate(mesh: Mesh, v, loc: BarycentricLocation) -> float:
    v = np.asarray(v, dtype=float)
    return float(loc.lambdas @ v[mesh.simplices[loc.simplex_index]])


def interpolate_many(mesh: Mesh, v, pts, vertex: int = 0):
    s, lam = locate_many(mesh, pts, vertex)
    v = np.asarray(v, dtype=float)
    return np.einsum("ki,ki->k", lam, v[mesh.simplices[s]])


def mesh_stats(mesh: Mesh):
    """(h_max, node_count, simplex_count, min_quality) with quality = inradius/diameter."""
    P = mesh.nodes[mesh.simplices]
    vol = simplex_volumes(mesh)
    n = mesh.dim
    if n == 2:
        e = np.linalg.norm(P[:, [1, 2, 0]] - P[:, [0, 1, 2]], axis=2)
        inr = 2 * vol / e.sum(axis=1)
    else:
        area = 0.0
        for f in itertools.combinations(range(4), 3):
            Q = P[:, list(f)]
            area = area + 0.5 * np.linalg.norm(np.cross(Q[:, 1] - Q[:, 0], Q[:, 2] - Q[:, 0]), axis=1)
        inr = 3 * vol / area
    diam = np.zeros(len(P))
    for i, j in itertools.combinations(range(n + 1), 2):
        diam = np.maximum(diam, np.linalg.norm(P[:, i] - P[:, j], axis=1))
    return float(diam.max()), mesh.node_count, mesh.simplex_count, float((inr / diam).min())


def dump_mesh(mesh: Mesh, path):
    with open(path, "w") as fh:
        for p in mesh.nodes:
            fh.write("v " + " ".join(repr(float(c)) for c in p) + "\n")
        for s, reg in zip(mesh.simplices, mesh.simplex_vertex):
            fh.write("s " + " ".join(str(int(i)) for i in s) + f" {int(reg)}\n")


def load_mesh(path) -> Mesh:
    nodes, simp, reg = [], [], []
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                nodes.append([float(x) for x in parts[1:]])
            elif parts[0] == "s":
                simp.append([int(x) for x in parts[1:-1]])
                reg.append(int(parts[-1]))
    nodes = np.array(nodes)
    simp = np.array(simp, dtype=np.int64)
    reg = np.array(reg, dtype=np.int64)
    n = nodes.shape[1]
    P = nodes[simp]
    diam = np.zeros(len(P))
    for i, j in itertools.combinations(range(n + 1), 2):
        diam = np.maximum(diam, np.linalg.norm(P[:, i] - P[:, j], axis=1))
    node_vertex = np.zeros(len(nodes), dtype=np.int64)
    node_vertex[simp.ravel()] = np.repeat(reg, n + 1)
    return Mesh(n, nodes, simp, reg, diam, node_vertex)
