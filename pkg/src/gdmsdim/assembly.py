"""Assembly of the bracketing matrices A_t <= B_t.

Storage orientation: column j belongs to the collocation node x_j and holds
the weights ||D phi_e(x_j)||^t * lambda_i of the nodes i of the simplex that
contains phi_e(x_j).  The transpose acts on nodal vectors like the transfer
operator: (P^T alpha)_j = sum_e ||D phi_e(x_j)||^t I_h alpha(phi_e(x_j)).

The location data is computed once per (system, mesh, truncation) and cached,
so a new value of t costs one exponentiation pass.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from .constants import ErrorBudget, tail_constant_cf, tail_sum_bounds_1d
from .core import SystemSpec
from .errors import ErrTooLarge, NotFoundError, PoleError, RangeError
from .mesh import Mesh, locate_many

EPS_FP = 1e-12
CHUNK = 1 << 21


@dataclass
class Collocation:
    """Cached per-(node, map) data: rows, barycentric weights, log ||D phi||."""

    n_nodes: int
    dim: int
    indptr: np.ndarray
    rows: np.ndarray
    lam: np.ndarray
    logd: np.ndarray
    map_count: int
    truncation: float | None = None

    @property
    def nnz(self):
        return len(self.rows)

    def data(self, t):
        w = np.exp(t * self.logd)
        d = self.lam.reshape(-1, self.dim + 1) * w[:, None]
        return d.reshape(-1)

    def matrix(self, t):
        """Unscaled P_t in column = source node orientation (CSC)."""
        N = self.n_nodes
        return sp.csc_matrix((self.data(t), self.rows, self.indptr), shape=(N, N))


def build_collocation(spec: SystemSpec, mesh: Mesh, truncation=None) -> Collocation:
    maps = spec.maps(truncation)
    n = mesh.dim
    k = n + 1
    per_vertex = []
    for v in range(len(spec.vertices)):
        nodes_v = mesh.vertex_nodes(v)
        mv = [m for m in maps if m.source == v]
        Nv = len(nodes_v)
        rows = np.empty((Nv, len(mv), k), dtype=np.int32)
        lam = np.empty((Nv, len(mv), k))
        logd = np.empty((Nv, len(mv)))
        X = mesh.nodes[nodes_v]
        for e, m in enumerate(mv):
            for lo in range(0, Nv, CHUNK):
                sl = slice(lo, lo + CHUNK)
                y, ld = m._eval(X[sl])
                if not (np.all(np.isfinite(y)) and np.all(np.isfinite(ld))):
                    raise PoleError(f"map {m.label} hits a pole on the mesh")
                try:
                    s, l = locate_many(mesh, y, m.target)
                except NotFoundError as exc:
                    raise NotFoundError(f"image under map {m.label!r} left the mesh: {exc}") from exc
                rows[sl, e] = mesh.simplices[s]
                lam[sl, e] = l
                logd[sl, e] = ld
        per_vertex.append((nodes_v, rows, lam, logd, len(mv)))

    # node numbering is vertex-major, so concatenation gives column order
    counts = np.zeros(mesh.node_count, dtype=np.int64)
    for nodes_v, _, _, _, m in per_vertex:
        counts[nodes_v] = m * k
    order = np.concatenate([p[0] for p in per_vertex])
    if not np.array_equal(order, np.arange(mesh.node_count)):
        raise ValueError("mesh nodes are not numbered vertex by vertex")
    indptr = np.concatenate([[0], np.cumsum(counts)])
    if indptr[-1] < np.iinfo(np.int32).max:
        # matching index dtypes keep scipy from copying the structure per t
        indptr = indptr.astype(np.int32)
    if len(per_vertex) == 1:
        # avoid a second copy of the largest arrays
        _, rows, lam, logd, _ = per_vertex[0]
        rows, lam, logd = rows.reshape(-1), lam.reshape(-1), logd.reshape(-1)
    else:
        rows = np.concatenate([p[1].reshape(-1) for p in per_vertex])
        lam = np.concatenate([p[2].reshape(-1) for p in per_vertex])
        logd = np.concatenate([p[3].reshape(-1) for p in per_vertex])
    per_vertex.clear()
    return Collocation(mesh.node_count, n, indptr, rows, lam, logd, len(maps), truncation)


@dataclass
class TailBound:
    """Correction for maps beyond the truncation.

    B[anchor_nodes[i], j] += C_0[j] * anchor_weights[i] for every column j, and
    the same for A with ``lower`` when a lower bound is available.  ``C_0`` may
    be a scalar (same correction in every column).
    """

    kind: str
    C_0: object
    anchor_nodes: np.ndarray
    anchor_weights: np.ndarray
    truncation_parameter: float
    lower: object = None
    info: dict = field(default_factory=dict)

    @property
    def anchor_node(self):
        return int(self.anchor_nodes[np.argmax(self.anchor_weights)])

    def column_values(self, N, which="upper"):
        c = self.C_0 if which == "upper" else self.lower
        if c is None:
            return None
        return np.broadcast_to(np.asarray(c, dtype=float), (N,))

    @property
    def row_terms(self):
        return len(self.anchor_nodes)

    def products(self, w, which):
        c = self.column_values(len(w), which)
        if c is None:
            return None
        return c * float(np.dot(self.anchor_weights, w[self.anchor_nodes]))

    def triplets(self, N, which):
        c = self.column_values(N, which)
        if c is None:
            return []
        return [(np.full(N, node), np.arange(N), c * wgt)
                for node, wgt in zip(self.anchor_nodes, self.anchor_weights) if wgt != 0]


@dataclass
class FactoredTail:
    """A block of maps summed in factored form.

    The correction to column j is Re(sum_r U[j, r] (G[r] . w)), with separate
    G for the upper and the lower matrix.  Only rows touched by G are nonzero.
    """

    kind: str
    U: np.ndarray
    G_upper: sp.csr_matrix
    G_lower: sp.csr_matrix
    truncation_parameter: float
    info: dict = field(default_factory=dict)

    @property
    def row_terms(self):
        return self.U.shape[1] * int(np.diff(self.G_upper.indptr).max(initial=0))

    def products(self, w, which):
        G = self.G_upper if which == "upper" else self.G_lower
        return np.real(self.U @ (G @ w))

    def triplets(self, N, which):
        G = (self.G_upper if which == "upper" else self.G_lower).tocsc()
        rows = np.flatnonzero(np.diff(G.indptr))
        if len(rows) * N > 5e7:
            raise MemoryError(f"{self.kind}: dense block of {len(rows)} x {N} entries; "
                              "use operator_products instead")
        block = np.real(self.U @ G[:, rows].toarray())      # (N, len(rows))
        r, c = np.meshgrid(rows, np.arange(N), indexing="xy")
        return [(r.reshape(-1), c.reshape(-1), block.reshape(-1))]


@dataclass
class TransferMatrices:
    """A_t and B_t sharing one sparsity pattern, plus tail corrections."""

    P: sp.csc_matrix
    t: float
    err: float
    scale_A: float
    scale_B: float
    tails: list = field(default_factory=list)
    system_name: str = ""
    mesh_fingerprint: str = ""

    @property
    def N(self):
        return self.P.shape[0]

    def _scaled(self, s):
        return sp.csc_matrix((self.P.data * s, self.P.indices, self.P.indptr), shape=self.P.shape)

    def _tail_matrix(self, which):
        N = self.N
        rows, cols, vals = [], [], []
        for tb in self.tails:
            for r, c, v in tb.triplets(N, which):
                rows.append(r)
                cols.append(c)
                vals.append(v)
        if not rows:
            return None
        return sp.csc_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                             shape=(N, N))

    @property
    def A(self):
        M = self._scaled(self.scale_A)
        T = self._tail_matrix("lower")
        return M if T is None else canonical(M + T)

    @property
    def B(self):
        M = self._scaled(self.scale_B)
        T = self._tail_matrix("upper")
        return M if T is None else canonical(M + T)

    def operator_products(self, w):
        """(A^T w, B^T w) without materializing A and B."""
        y = self.P.T @ w
        ya = y * self.scale_A
        yb = y * self.scale_B
        for tb in self.tails:
            yb = yb + tb.products(w, "upper")
            lo = tb.products(w, "lower")
            if lo is not None:
                ya = ya + lo
        return ya, yb

    def max_row_terms(self):
        per_col = np.diff(self.P.indptr)
        extra = sum(tb.row_terms for tb in self.tails)
        return int(per_col.max(initial=0)) + extra


def canonical(M):
    M = sp.csc_matrix(M)
    M.sum_duplicates()
    M.sort_indices()
    return M


def scale_factors(err):
    if err >= 1:
        raise ErrTooLarge(err)
    return (1 - err) * (1 - EPS_FP), (1 + err) * (1 + EPS_FP)


def assemble(spec: SystemSpec, mesh: Mesh, t: float, budget: ErrorBudget,
             truncation=None, colloc: Collocation | None = None, tails=True) -> TransferMatrices:
    if budget.err_max >= 1:
        raise ErrTooLarge(budget.err_max)
    tail_desc = spec.alphabet.tail
    if tail_desc is not None and not tail_desc.admissible(t):
        raise RangeError(f"t={t} outside the admissible range of the tail bound")
    if colloc is None:
        colloc = build_collocation(spec, mesh, truncation)
    sa, sb = scale_factors(budget.err_max)
    tm = TransferMatrices(colloc.matrix(t), t, budget.err_max, sa, sb, [],
                          spec.name, mesh.fingerprint())
    if tails and tail_desc is not None:
        trunc = colloc.truncation if colloc.truncation is not None else spec.alphabet.truncation
        for tb in tail_bounds(spec, mesh, t, budget, trunc):
            tm = apply_tail_correction(tm, tb)
    return tm


def apply_tail_correction(tm: TransferMatrices, tail) -> TransferMatrices:
    if isinstance(tail, TailBound) and (np.any(np.asarray(tail.C_0) < 0)
                                        or not np.all(np.isfinite(tail.C_0))):
        raise ValueError("tail constant must be finite and non-negative")
    return replace(tm, tails=list(tm.tails) + [tail])


def column_stats(tm: TransferMatrices):
    ones = np.ones(tm.N)
    ya, yb = tm.operator_products(ones)
    nnz = tm.P.nnz
    return {
        "A_colsum_min": float(ya.min()), "A_colsum_max": float(ya.max()),
        "B_colsum_min": float(yb.min()), "B_colsum_max": float(yb.max()),
        "nnz": int(nnz), "fill": nnz / float(tm.N) ** 2,
        "max_nnz_per_column": int(np.diff(tm.P.indptr).max(initial=0)),
    }


# ---------------------------------------------------------------------------
# tails

def origin_node(mesh: Mesh, vertex=0):
    idx = np.flatnonzero((mesh.node_vertex == vertex) & np.all(mesh.nodes == 0.0, axis=1))
    if len(idx) == 0:
        raise NotFoundError("mesh has no node at the origin")
    return int(idx[0])


def cf_tail_sum(n, t, R, reach):
    """Upper bound for sum_{|e|>=R+2} |x+e|^{-2t} over x within ``reach`` of X."""
    Reff = R - reach
    if Reff < 1:
        raise RangeError("truncation radius too small for the tail bound")
    return tail_constant_cf(n, t, Reff, 1.0)


def binomial_series(t, K):
    """Coefficients c_p of (1 + z)^(-t) = sum_p c_p z^p, p = 0..K."""
    c = np.empty(K + 1)
    c[0] = 1.0
    for p in range(K):
        c[p + 1] = c[p] * (-t - p) / (p + 1)
    return c


def series_remainder(t, K, s):
    """Upper bound for sum over (p, q) outside [0, K]^2 of |c_p c_q| s^(p+q)."""
    c = np.abs(binomial_series(t, K + 1))
    SK = np.polyval(c[:K + 1][::-1], s)
    ratio = max(1.0, (t + K + 1) / (K + 2))
    if np.any(ratio * s >= 1):
        raise RangeError("expansion radius too large for the band correction")
    TK = c[K + 1] * s ** (K + 1) / (1 - ratio * s)
    return TK * (2 * SK + TK) * (1 + 1e-10)


_BAND_CACHE = {}


def _band_geometry(spec, mesh, R0, R1):
    """Per-map data of the band, independent of t (cached per mesh)."""
    from .systems import band_generators
    key = (mesh.fingerprint(), spec.info["generator_family"], R0, R1)
    if key in _BAND_CACHE:
        return _BAND_CACHE[key]
    E = band_generators(2, spec.info["generator_family"], R0, R1)
    a = E[:, 0] + 0.5 + 1j * E[:, 1]
    wn = mesh.nodes[:, 0] - 0.5 + 1j * mesh.nodes[:, 1]
    rho0 = 0.5 + mesh.reach
    if np.abs(wn).max() > rho0:
        raise RangeError("mesh extends beyond the band expansion disk")
    # phi_e(z) = conj(1/(z + e)) sends B(1/2, rho0) onto the disk B(q_e, r_e)
    den = np.abs(a) ** 2 - rho0 ** 2
    q = a / den
    r = rho0 / den + 1e-12
    s_idx, l = locate_many(mesh, np.c_[q.real, q.imag], 0)
    geo = {"a": a, "w": wn, "rho0": rho0, "r": r, "nodes": mesh.simplices[s_idx], "lam": l}
    _BAND_CACHE.clear()
    _BAND_CACHE[key] = geo
    return geo


def cf_band_bound(spec, mesh, t, budget, R0, R1, tol=1e-7):
    """Maps R0 + 2 <= |e| < R1 + 2 of a planar continued fraction system.

    With a = e + 1/2 and w = x - 1/2, |x + e|^(-2t) = |a|^(-2t) |1 + w/a|^(-2t)
    is expanded in powers of w/a and w-bar/a-bar up to order K, with a
    remainder bound.  The density at phi_e(x) is compared with its value at
    the centre q_e of the image disk (factor exp(+-kappa r_e)) and that value
    with the interpolant at q_e (factor 1 +- err).
    """
    if spec.dim != 2:
        raise ValueError("the factored band is implemented for planar systems")
    g = _band_geometry(spec, mesh, R0, R1)
    a, wn, rho0 = g["a"], g["w"], g["rho0"]
    s = rho0 / np.abs(a)
    K = 2
    while series_remainder(t, K, s.max()) > tol:
        K += 1
    rem = series_remainder(t, K, s)
    c = binomial_series(t, K)
    base = np.abs(a) ** (-2 * t)
    kr = budget.kappa * g["r"]
    ea, eb = scale_factors(budget.err_max)
    u_up, u_lo = eb * np.exp(kr) * base, ea * np.exp(-kr) * base
    N = mesh.node_count
    pairs = [(p, q) for p in range(K + 1) for q in range(p, K + 1)]
    U = np.empty((N, len(pairs) + 1), dtype=complex)
    ainv = 1.0 / a
    rows_up, rows_lo = [], []
    for r, (p, q) in enumerate(pairs):
        # (q, p) is the conjugate of (p, q): count it once, twice the real part
        mult = 1.0 if p == q else 2.0
        U[:, r] = mult * c[p] * c[q] * wn ** p * np.conj(wn) ** q
        f = ainv ** p * np.conj(ainv) ** q
        rows_up.append(f * u_up)
        rows_lo.append(f * u_lo)
    U[:, -1] = 1.0
    rows_up.append(rem * u_up)
    rows_lo.append(-rem * u_lo)

    def gather(rows):
        vals = np.stack(rows)[:, :, None] * g["lam"][None, :, :]        # (r, E, k)
        cols = np.broadcast_to(g["nodes"][None], vals.shape)
        rr = np.broadcast_to(np.arange(len(rows))[:, None, None], vals.shape)
        G = sp.csr_matrix((vals.reshape(-1), (rr.reshape(-1), cols.reshape(-1))),
                          shape=(len(rows), N))
        G.sum_duplicates()
        return G

    return FactoredTail("cf_band", U, gather(rows_up), gather(rows_lo), R1,
                        info={"maps": len(a), "inner_radius": R0, "order": K,
                              "remainder": float(rem.max())})


def tail_bounds(spec: SystemSpec, mesh: Mesh, t: float, budget: ErrorBudget, truncation):
    desc = spec.alphabet.tail
    kappa = budget.kappa
    if desc.kind == "cf_integral":
        n = desc.n
        R = float(truncation)
        node = np.array([origin_node(mesh)])
        out = []
        Rb = spec.info.get("band_radius")
        if Rb is not None and Rb > R:
            out.append(cf_band_bound(spec, mesh, t, budget, R, Rb))
            R = Rb
        S = cf_tail_sum(n, t, R, mesh.reach)
        d = 1.0 / (R + 1.0 - mesh.reach)
        C0 = S * math.exp(kappa * d) * (1 + EPS_FP)
        out.append(TailBound("cf_integral", C0, node, np.array([1.0]), R,
                             info={"sum_bound": S, "image_radius": d, "kappa": kappa}))
        return out
    if desc.kind == "apollonian_geometric":
        from .systems import apollonian_tail_geometry
        N = int(truncation)
        out = []
        for k in desc.k_set:
            p, wmap, lam = apollonian_tail_geometry(k)
            s, l = locate_many(mesh, np.array([p]), 0)
            z = mesh.nodes
            wz, logdw = wmap._eval(z)
            a = lam * wz[:, 0]
            b = lam * wz[:, 1]
            up, lo = tail_sum_bounds_1d(t, a, b, N)
            scale = np.exp(t * (logdw + 2 * math.log(lam)))
            dist = lam / np.sqrt((N + 1 + a) ** 2 + b ** 2)
            if np.any(N + 1 + a <= 0):
                raise RangeError("truncation too small for the Apollonian tail")
            ea, eb = scale_factors(budget.err_max)
            upper = eb * scale * up * np.exp(kappa * dist)
            lower = ea * scale * lo * np.exp(-kappa * dist)
            out.append(TailBound("apollonian_geometric", upper, mesh.simplices[s[0]], l[0], N,
                                 lower=lower,
                                 info={"k": k, "anchor": p, "max_image_radius": float(dist.max())}))
        return out
    raise ValueError(f"unknown tail kind {desc.kind}")


# ---------------------------------------------------------------------------
# coordinate dump

def dump_matrix(M, path):
    M = canonical(M).tocoo()
    order = np.lexsort((M.row, M.col))
    with open(path, "w") as fh:
        for i in order:
            fh.write(f"{M.row[i]} {M.col[i]} {M.data[i]:.17g}\n")


def load_matrix(path, N):
    r, c, v = [], [], []
    with open(path) as fh:
        for line in fh:
            a, b, x = line.split()
            r.append(int(a))
            c.append(int(b))
            v.append(float(x))
    return canonical(sp.csc_matrix((v, (r, c)), shape=(N, N)))
