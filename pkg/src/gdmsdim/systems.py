"""Built-in systems: continued fractions, the abc example, Schottky groups,
Apollonian subsystems and similitudes, plus the named catalog."""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from functools import lru_cache, partial
from typing import Callable

import numpy as np
from sympy import isprime

from .core import (Alphabet, Ball, Inversion, Moebius, Quadratic, Similarity, SystemSpec,
                   TailDescriptor, Vertex)
from .errors import NotFoundError, OverlapError

SQ3 = math.sqrt(3.0)
LAM = SQ3  # Apollonian scaling parameter


# ---------------------------------------------------------------------------
# continued fractions

def _cf_vertex(n):
    c = np.zeros(n)
    c[0] = 0.5
    return Vertex(Ball(c, 0.5), Ball(c, 1.5))


def cf_map(e):
    """phi_e(x) = (x+e)/|x+e|^2."""
    e = np.asarray(e, dtype=float)
    label = "(" + ",".join(str(int(v)) for v in e) + ")"
    if len(e) == 2:
        # (z+e)/|z+e|^2 = 1/conj(z+e)
        ebar = complex(e[0], -e[1])
        return Moebius(np.array([[0, 1], [1, ebar]]), conj=True, label=label)
    return Inversion(np.zeros(len(e)), 1.0, pre=e, label=label)


def lattice_generators(n, R):
    """e in N x Z^{n-1} with |e| < R + 2, sorted by norm then lexicographically."""
    m = int(math.floor(R + 2))
    axes = [np.arange(1, m + 1)] + [np.arange(-m, m + 1)] * (n - 1)
    E = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
    E = E[np.linalg.norm(E, axis=1) < R + 2]
    order = np.lexsort(tuple(E[:, ::-1].T) + (np.einsum("ij,ij->i", E, E),))
    return [tuple(int(v) for v in e) for e in E[order]]


def is_gaussian_prime(a: int, b: int) -> bool:
    if a == 0 or b == 0:
        m = abs(a + b)
        return isprime(m) and m % 4 == 3
    return isprime(a * a + b * b)


def gaussian_prime_generators(R):
    """Gaussian primes a+bi with a >= 1 and |a+bi| < R + 2."""
    return [e for e in lattice_generators(2, R) if is_gaussian_prime(*e)]


@lru_cache(maxsize=8)
def band_generators(n, family, R0, R1):
    """Generators with R0 + 2 <= |e| < R1 + 2, as an (m, n) integer array."""
    enum = gaussian_prime_generators if family == "gaussian_primes" else partial(lattice_generators, n)
    e = np.array(enum(R1), dtype=float).reshape(-1, n)
    return e[np.linalg.norm(e, axis=1) >= R0 + 2]


E4 = [(1, 0), (1, 1), (1, -1), (2, 0)]
E5 = [(1, 0, 0), (1, 1, 0), (1, -1, 0), (1, 0, 1), (1, 0, -1)]


def cf_system(n: int, generators="finite", gens=None, R=None, name=None,
              band=None) -> SystemSpec:
    """Continued fraction system on X = B(v_1/2, 1/2).

    ``generators``: "finite" (with ``gens``), "full_lattice" or "gaussian_primes"
    (with truncation ``R``; maps with |e| < R + 2 are kept and the rest go to the
    tail bound).  With ``band`` > R the maps with R + 2 <= |e| < band + 2 are
    summed exactly as one two-sided correction and the lattice bound only
    covers |e| >= band + 2.
    """
    if n not in (2, 3):
        raise ValueError("continued fractions are provided for n = 2, 3")
    vert = _cf_vertex(n)
    info = {"contraction_words": 2}
    if generators == "finite":
        gens = [tuple(int(v) for v in g) for g in gens]
        for g in gens:
            if len(g) != n or g[0] < 1:
                raise ValueError(f"generator {g} not in N x Z^{n - 1}")
        alpha = Alphabet("finite", tuple(cf_map(g) for g in gens))
        return SystemSpec(name or f"cf{n}-finite", n, (vert,), alpha, "mobius", 0.0, info)
    if generators == "full_lattice":
        enum = partial(lattice_generators, n)
    elif generators == "gaussian_primes":
        if n != 2:
            raise ValueError("Gaussian primes live in the plane")
        enum = gaussian_prime_generators
    else:
        raise ValueError(f"unknown generator family {generators!r}")
    if R is None:
        raise ValueError("an infinite alphabet needs a truncation radius R")
    family = lambda r: tuple(cf_map(g) for g in enum(r))
    alpha = Alphabet(generators, family(R), TailDescriptor("cf_integral", n), float(R), family)
    info["generator_family"] = generators
    if band is not None:
        info["band_radius"] = float(band)
    return SystemSpec(name or f"cf{n}-{generators}", n, (vert,), alpha, "mobius", 0.0, info)


# ---------------------------------------------------------------------------
# quadratic perturbations

ABC_COEFFS = [(0.25j, 0.1, 0.1), (0.2j, -0.1 - 0.1j, 0.05j), (0.1, 0.1 - 0.1j, 0.04)]


def abc_system() -> SystemSpec:
    """phi_e(z) = a z + b + c z^2 on X = B(0, 0.2); W = B(0, 1.2) so eta = 1."""
    X = Ball((0.0, 0.0), 0.2)
    W = Ball((0.0, 0.0), 1.2)
    maps = tuple(Quadratic(a, b, c, label=f"phi{i + 1}") for i, (a, b, c) in enumerate(ABC_COEFFS))
    return SystemSpec("abc", 2, (Vertex(X, W),), Alphabet("finite", maps), "analytic2d", 0.0)


# ---------------------------------------------------------------------------
# Schottky groups

SCHOTTKY2D_CENTERS = [2 / SQ3, complex(-1 / SQ3, 1), complex(-1 / SQ3, -1)]
SCHOTTKY2D_UNITS = [1.0, cmath.exp(-2j * math.pi / 3), cmath.exp(2j * math.pi / 3)]


def schottky2d_generator(j):
    """g_j(z) = c_j + u_j / (3 (z - c_j)), mapping the outside of B_j into B_j."""
    c, u = SCHOTTKY2D_CENTERS[j], SCHOTTKY2D_UNITS[j]
    return np.array([[3 * c, u - 3 * c * c], [3, -3 * c]], dtype=complex)


def schottky2d_system() -> SystemSpec:
    r = 1 / SQ3
    eta = 2 - 2 * r
    pts = [(c.real, c.imag) for c in map(complex, SCHOTTKY2D_CENTERS)]
    verts = tuple(Vertex(Ball(c, r), Ball(c, r + eta)) for c in pts)
    maps = []
    for j in range(3):
        M = schottky2d_generator(j)
        for i in range(3):
            if i != j:
                maps.append(Moebius(M, source=i, target=j, label=f"g{j + 1},{i + 1}"))
    return SystemSpec("schottky2d", 2, verts, Alphabet("finite", tuple(maps)), "mobius", 0.0)


SCHOTTKY3D_ALPHA = 0.75
SCHOTTKY3D_SIGNS = [(1, 1, 1), (1, -1, -1), (-1, 1, -1), (-1, -1, 1)]


def schottky3d_system() -> SystemSpec:
    r = 0.5
    eta = 3 * math.sqrt(2) / 2 - 1
    centers = [SCHOTTKY3D_ALPHA * np.array(s, dtype=float) for s in SCHOTTKY3D_SIGNS]
    verts = tuple(Vertex(Ball(c, r), Ball(c, r + eta)) for c in centers)
    maps = []
    for j, c in enumerate(centers):
        for i in range(4):
            if i != j:
                maps.append(Inversion(c, r, source=i, target=j, label=f"g{j + 1},{i + 1}"))
    return SystemSpec("schottky3d", 3, verts, Alphabet("finite", tuple(maps)), "mobius", 0.0)


# ---------------------------------------------------------------------------
# Apollonian gasket

F_MATRIX = np.array([[LAM - 1, 1], [-1, LAM + 1]], dtype=complex)
V_MATRIX = np.array([[-1, 1], [-1, 0]], dtype=complex)
V_INV = np.array([[0, -1], [1, -1]], dtype=complex)


def _rot(theta):
    return np.array([[cmath.exp(1j * theta), 0], [0, 1]], dtype=complex)


def apollonian_angles(k):
    theta = (-1) ** k * 2 * math.pi / 3
    theta_p = (2 * math.pi * k / 3) % (2 * math.pi)
    return theta, theta_p


def apollonian_left_factor(k, n):
    """lambda^n R_{theta'} V T_n V^{-1}, the matrix of R_{theta'} o f^n."""
    _, tp = apollonian_angles(k)
    T = np.array([[1, n / LAM], [0, 1]], dtype=complex)
    return LAM ** n * (_rot(tp) @ V_MATRIX @ T @ V_INV)


def apollonian_matrix(k, n):
    """Matrix of phi_{k,n} = R_{theta'} o f^n o R_theta o f, with lambda^n dropped."""
    th, tp = apollonian_angles(k)
    T = np.array([[1, n / LAM], [0, 1]], dtype=complex)
    return _rot(tp) @ V_MATRIX @ T @ V_INV @ _rot(th) @ F_MATRIX


def apollonian_map(k, n):
    return Moebius(apollonian_matrix(k, n), label=f"({k},{n})")


def apollonian_tail_geometry(k):
    """(p_k, w, lambda): phi_{k,n} -> p_k as n grows, with
    phi_{k,n} = R_{theta'} o V(w + n/lambda) and w = V^{-1} o R_theta o f."""
    th, tp = apollonian_angles(k)
    p = np.array([math.cos(tp), math.sin(tp)])
    w = Moebius(V_INV @ _rot(th) @ F_MATRIX, label=f"w{k}")
    return p, w, LAM


def moebius_sup_derivative(M, center, radius):
    """sup of |Dg| over the closed disk B(center, radius), pole outside."""
    (a, b), (c, d) = M
    det = abs(a * d - b * c)
    z0 = complex(*center)
    if c == 0:
        return det / abs(d) ** 2
    pole = -d / c
    gap = abs(pole - z0) - radius
    if gap <= 0:
        return math.inf
    return det / (abs(c) * gap) ** 2


def _inflation_factor(L):
    # mesh must cover X(inflate) with inflate >= L (inflate + h)
    return 1.25 * L / (1 - L)


def apollonian_system(k_set=(1, 2, 3, 4, 5, 6), n_range="all", N=None, name=None) -> SystemSpec:
    """Apollonian maps phi_{k,n}, k in ``k_set``.

    ``n_range``: "all" (infinite, truncated at ``N`` with a tail bound) or
    "finite" (n = 1..N).
    """
    k_set = tuple(sorted(set(int(k) for k in k_set)))
    if not k_set or any(k < 1 or k > 6 for k in k_set):
        raise ValueError("k_set must be a nonempty subset of 1..6")
    if N is None or N < 1:
        raise ValueError("N must be a positive integer")
    X = Ball((0.0, 0.0), 1.0)
    W = Ball((0.0, 0.0), 1.0 + LAM)
    family = lambda NN: tuple(apollonian_map(k, n) for n in range(1, int(NN) + 1) for k in k_set)
    maps = family(N)
    # largest derivative on a slightly inflated disk sets the mesh inflation
    L = max(moebius_sup_derivative(m.matrix, (0, 0), 1.05) for m in maps)
    if n_range == "all":
        alpha = Alphabet("apollonian", maps, TailDescriptor("apollonian_geometric", 2, k_set),
                         int(N), family)
    elif n_range == "finite":
        alpha = Alphabet("finite", maps)
    else:
        raise ValueError(f"unknown n_range {n_range!r}")
    return SystemSpec(name or "apollonian", 2, (Vertex(X, W),), alpha, "mobius",
                      _inflation_factor(L), {"sup_derivative": L, "k_set": k_set})


# ---------------------------------------------------------------------------
# similitudes

def similitude_map(r, c, n=None):
    """x -> r x + c, so the unit ball is sent onto B(c, r)."""
    return Similarity(float(r), np.asarray(c, dtype=float), label=f"r={r:g}")


def similitude_system(ratios, centers, eta=100.0, name="similitude") -> SystemSpec:
    """Contracting similarities on the closed unit ball with image balls B(c_i, r_i)."""
    ratios = [float(r) for r in ratios]
    centers = [np.asarray(c, dtype=float) for c in centers]
    if len(ratios) != len(centers) or not ratios:
        raise ValueError("need one center per ratio")
    n = len(centers[0])
    for r, c in zip(ratios, centers):
        if not 0 < r < 1:
            raise ValueError("ratios must lie in (0, 1)")
        if np.linalg.norm(c) + r > 1 + 1e-12:
            raise OverlapError(f"image B({c}, {r}) is not inside the unit ball")
    for i in range(len(ratios)):
        for j in range(i + 1, len(ratios)):
            if np.linalg.norm(centers[i] - centers[j]) < ratios[i] + ratios[j] - 1e-12:
                raise OverlapError(f"images {i} and {j} overlap")
    o = np.zeros(n)
    vert = Vertex(Ball(o, 1.0), Ball(o, 1.0 + eta))
    maps = tuple(similitude_map(r, c, n) for r, c in zip(ratios, centers))
    return SystemSpec(name, n, (vert,), Alphabet("finite", maps), "mobius",
                      _inflation_factor(max(ratios)), {"ratios": ratios})


# ---------------------------------------------------------------------------
# catalog

@dataclass
class CatalogEntry:
    name: str
    description: str
    factory: Callable
    table1: tuple                  # (central value, reported radius)
    t_upper_hint: float            # upper bound used for the published constants
    reported_constant: float | None   # second-order constant reported with it
    default_h: float
    truncation: float | None = None
    params: dict = field(default_factory=dict)

    @property
    def t_init(self):
        c = self.table1[0]
        return (0.9 * c, 1.1 * c)

    def build(self, truncation=None):
        if self.truncation is None:
            return self.factory()
        return self.factory(truncation if truncation is not None else self.truncation)


CATALOG = {
    "cf2-4gen": CatalogEntry(
        "cf2-4gen", "2D continued fractions, generators (1,0),(1,1),(1,-1),(2,0)",
        lambda: cf_system(2, "finite", E4, name="cf2-4gen"),
        (1.149576, 5.5e-6), 1.15, 41, 6e-4),
    "cf2-lattice": CatalogEntry(
        "cf2-lattice", "2D continued fractions, alphabet N x Z",
        lambda R: cf_system(2, "full_lattice", R=R, name="cf2-lattice"),
        (1.853, 4.2e-3), 1.86, 72, 0.02, 100),
    "cf2-gauss-primes": CatalogEntry(
        "cf2-gauss-primes", "2D continued fractions over Gaussian primes with positive real part",
        lambda R: cf_system(2, "gaussian_primes", R=R, name="cf2-gauss-primes", band=1000),
        (1.510, 4.0e-3), 1.515, 56, 2.2e-3, 10),
    "cf3-5gen": CatalogEntry(
        "cf3-5gen", "3D continued fractions with five generators",
        lambda: cf_system(3, "finite", E5, name="cf3-5gen"),
        (1.452, 9.7e-3), 1.46, 54, 0.02),
    "cf3-lattice": CatalogEntry(
        "cf3-lattice", "3D continued fractions, alphabet N x Z^2",
        lambda R: cf_system(3, "full_lattice", R=R, name="cf3-lattice"),
        (2.57, 1.7e-2), 2.6, 112, 0.05, 30),
    "abc": CatalogEntry(
        "abc", "three quadratic perturbations of linear maps",
        abc_system, (0.631822790, 1.4e-8), 0.633, 1833, 3e-4),
    "schottky2d": CatalogEntry(
        "schottky2d", "classical Schottky group, three disks of radius 1/sqrt(3)",
        schottky2d_system, (0.295546, 6.3e-6), 0.3, 78, 1.4e-3),
    "schottky3d": CatalogEntry(
        "schottky3d", "Schottky group in 3D, four balls of radius 1/2",
        schottky3d_system, (0.823, 1.8e-3), 0.825, 140, 0.02),
    "apollonian": CatalogEntry(
        "apollonian", "Apollonian gasket, all maps phi_{k,n}",
        lambda N: apollonian_system(range(1, 7), "all", int(N), name="apollonian"),
        (1.30563, 2.3e-4), 1.306, 95, 4.5e-3, 20),
    "apollonian-12": CatalogEntry(
        "apollonian-12", "Apollonian subsystem phi_{k,n}, k = 1..6, n = 1, 2",
        lambda: apollonian_system(range(1, 7), "finite", 2, name="apollonian-12"),
        (1.11405706, 9.2e-6), 1.115, 80, 1.4e-3),
    "apollonian-odd": CatalogEntry(
        "apollonian-odd", "Apollonian subsystem phi_{k,n}, k = 1, 3, 5, all n",
        lambda N: apollonian_system((1, 3, 5), "all", int(N), name="apollonian-odd"),
        (1.07281, 1.2e-4), 1.08, 77, 3.8e-3, 25),
}


def catalog_names():
    return list(CATALOG)


def get_entry(name) -> CatalogEntry:
    try:
        return CATALOG[name]
    except KeyError:
        raise NotFoundError(f"unknown system {name!r}; available: {', '.join(CATALOG)}") from None


def build_system(name, truncation=None) -> SystemSpec:
    return get_entry(name).build(truncation)
