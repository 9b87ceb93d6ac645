"""Conformal graph directed Markov systems: regions, maps, alphabets.

Maps act on arrays of points with shape (..., n).  Planar maps use complex
arithmetic internally.  Every map kind carries an exact formula for the
operator norm of its derivative, which is what the certified bounds need.

Edge convention: a map with ``source`` v and ``target`` w sends X_v into X_w.
The composition a∘b is admissible iff ``b.target == a.source``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import factorial
from typing import Callable, Sequence

import numpy as np
from scipy import optimize
from scipy.stats import qmc

from .errors import DomainError, IncidenceError, PoleError

POLE_GUARD = 1e-14


def _as_points(x, n=None):
    x = np.asarray(x, dtype=float)
    if n is not None and x.shape[-1] != n:
        raise ValueError(f"expected points of dimension {n}, got shape {x.shape}")
    return x


def _to_complex(x):
    return x[..., 0] + 1j * x[..., 1]


def _to_real(z):
    return np.stack([z.real, z.imag], axis=-1)


@dataclass(frozen=True)
class Ball:
    center: tuple
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("ball radius must be positive")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))

    @property
    def dim(self):
        return len(self.center)

    @property
    def c(self):
        return np.array(self.center)

    def contains(self, pts, tol=0.0):
        d = np.linalg.norm(_as_points(pts) - self.c, axis=-1)
        return d <= self.radius + tol

    def boundary_samples(self, k):
        """k nearly uniform points on the boundary sphere."""
        if self.dim == 2:
            a = 2 * np.pi * (np.arange(k) + 0.5) / k
            u = np.stack([np.cos(a), np.sin(a)], axis=-1)
        else:
            # Fibonacci sphere
            i = np.arange(k) + 0.5
            z = 1 - 2 * i / k
            phi = np.pi * (3 - np.sqrt(5)) * i
            rr = np.sqrt(1 - z * z)
            u = np.stack([rr * np.cos(phi), rr * np.sin(phi), z], axis=-1)
        return self.c + self.radius * u

    def interior_samples(self, k, seed=0):
        """k low-discrepancy points inside the ball (Sobol in the cube, radial map)."""
        n = self.dim
        m = int(np.ceil(np.log2(max(k, 2))))
        s = qmc.Sobol(d=n, scramble=True, seed=seed).random_base2(m)[:k]
        g = 2 * s - 1
        # map the cube onto the ball by rescaling along rays (sup norm -> euclidean)
        sup = np.max(np.abs(g), axis=-1, keepdims=True)
        nrm = np.linalg.norm(g, axis=-1, keepdims=True)
        nrm[nrm == 0] = 1.0
        u = g * sup / nrm
        return self.c + self.radius * u

    def samples(self, k, seed=0):
        kb = max(k // 3, 4)
        return np.concatenate([self.boundary_samples(kb), self.interior_samples(k - kb, seed)])

    def inflated(self, delta):
        return Ball(self.center, self.radius + delta)


@dataclass(frozen=True)
class Vertex:
    X: Ball
    W: Ball

    @property
    def eta(self):
        """dist(X, boundary of W) for nested balls."""
        off = float(np.linalg.norm(self.X.c - self.W.c))
        return self.W.radius - self.X.radius - off


class ConformalMap:
    """Common interface; subclasses implement ``_eval``."""

    source: int
    target: int
    kind: str = "abstract"

    def _eval(self, pts):
        """Return (images, log of derivative norm) without domain checks."""
        raise NotImplementedError

    def _check_pole(self, denom):
        if np.any(np.abs(denom) < POLE_GUARD):
            raise PoleError(f"{self.kind} map evaluated at its pole")

    def apply(self, x, domain: Ball | None = None):
        x = _as_points(x)
        if domain is not None and not np.all(domain.contains(x, tol=1e-12)):
            raise DomainError("point outside the W-domain of the map")
        y, logd = self._eval(x)
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(logd))):
            raise PoleError(f"{self.kind} map evaluated at its pole")
        return y

    def derivative_norm(self, x, domain: Ball | None = None):
        x = _as_points(x)
        if domain is not None and not np.all(domain.contains(x, tol=1e-12)):
            raise DomainError("point outside the W-domain of the map")
        y, logd = self._eval(x)
        if not np.all(np.isfinite(logd)):
            raise PoleError(f"{self.kind} map evaluated at its pole")
        return np.exp(logd)

    def inverse(self, y):
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class Moebius(ConformalMap):
    """z -> (a w + b)/(c w + d) with w = z, or w = conj(z) when ``conj``."""

    matrix: np.ndarray
    conj: bool = False
    source: int = 0
    target: int = 0
    label: str = ""
    kind: str = "moebius2d"

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex).reshape(2, 2)
        if abs(np.linalg.det(m)) == 0:
            raise ValueError("singular Moebius matrix")
        object.__setattr__(self, "matrix", m)

    @property
    def det(self):
        return np.linalg.det(self.matrix)

    def _eval(self, pts):
        z = _to_complex(pts)
        if self.conj:
            z = np.conj(z)
        (a, b), (c, d) = self.matrix
        den = c * z + d
        self._check_pole(den)
        w = (a * z + b) / den
        logd = np.log(abs(self.det)) - 2 * np.log(np.abs(den))
        return _to_real(w), logd

    def _eval_complex(self, z):
        if self.conj:
            z = np.conj(z)
        (a, b), (c, d) = self.matrix
        den = c * z + d
        return (a * z + b) / den, np.log(abs(self.det)) - 2 * np.log(np.abs(den))

    def inverse(self, y):
        (a, b), (c, d) = self.matrix
        w = _to_complex(_as_points(y))
        z = (d * w - b) / (-c * w + a)
        if self.conj:
            z = np.conj(z)
        return _to_real(z)

    def image_disk(self, center, radius):
        """Exact image of a disk, when the pole lies outside it."""
        z0 = complex(center[0], center[1])
        pts = z0 + radius * np.exp(1j * np.array([0.0, 2 * np.pi / 3, 4 * np.pi / 3]))
        w, _ = self._eval_complex(pts)
        c, r = circle_through(*w)
        return (c.real, c.imag), r


def circle_through(p, q, r):
    """Center and radius of the circle through three complex points."""
    ax, ay, bx, by, cx, cy = p.real, p.imag, q.real, q.imag, r.real, r.imag
    d = 2 * (ax * (by - cy) + bx * (cy - ay) + cx * (ay - by))
    ux = ((ax * ax + ay * ay) * (by - cy) + (bx * bx + by * by) * (cy - ay)
          + (cx * cx + cy * cy) * (ay - by)) / d
    uy = ((ax * ax + ay * ay) * (cx - bx) + (bx * bx + by * by) * (ax - cx)
          + (cx * cx + cy * cy) * (bx - ax)) / d
    c = complex(ux, uy)
    return c, abs(p - c)


@dataclass(frozen=True, eq=False)
class Inversion(ConformalMap):
    """x -> O (c + r^2 (y-c)/|y-c|^2) + post, with y = x + pre."""

    center: np.ndarray
    radius: float
    pre: np.ndarray | None = None
    post: np.ndarray | None = None
    orth: np.ndarray | None = None
    source: int = 0
    target: int = 0
    label: str = ""
    kind: str = "inversion_nd"

    def __post_init__(self):
        c = np.asarray(self.center, dtype=float)
        n = c.shape[0]
        object.__setattr__(self, "center", c)
        for name in ("pre", "post"):
            v = getattr(self, name)
            object.__setattr__(self, name, np.zeros(n) if v is None else np.asarray(v, dtype=float))
        if self.orth is not None:
            o = np.asarray(self.orth, dtype=float)
            if not np.allclose(o @ o.T, np.eye(n), atol=1e-12):
                raise ValueError("orthogonal part is not orthogonal")
            object.__setattr__(self, "orth", o)

    def _eval(self, pts):
        d = pts + self.pre - self.center
        q = np.einsum("...i,...i->...", d, d)
        self._check_pole(q)
        z = self.center + (self.radius ** 2) * d / q[..., None]
        if self.orth is not None:
            z = z @ self.orth.T
        z = z + self.post
        logd = 2 * np.log(self.radius) - np.log(q)
        return z, logd

    def inverse(self, y):
        z = _as_points(y) - self.post
        if self.orth is not None:
            z = z @ self.orth
        d = z - self.center
        q = np.einsum("...i,...i->...", d, d)
        return self.center + (self.radius ** 2) * d / q[..., None] - self.pre


@dataclass(frozen=True, eq=False)
class Quadratic(ConformalMap):
    """z -> a z + b + c z^2 in the plane."""

    a: complex
    b: complex
    c: complex
    source: int = 0
    target: int = 0
    label: str = ""
    kind: str = "polynomial2d"

    def _eval(self, pts):
        z = _to_complex(pts)
        w = self.a * z + self.b + self.c * z * z
        dz = np.abs(self.a + 2 * self.c * z)
        with np.errstate(divide="ignore"):
            logd = np.log(dz)
        return _to_real(w), logd

    def inverse(self, y):
        # the root closest to the critical-point-free side: pick the smaller |z|
        w = _to_complex(_as_points(y))
        if self.c == 0:
            return _to_real((w - self.b) / self.a)
        disc = np.sqrt(self.a * self.a - 4 * self.c * (self.b - w))
        r1 = (-self.a + disc) / (2 * self.c)
        r2 = (-self.a - disc) / (2 * self.c)
        z = np.where(np.abs(r1) <= np.abs(r2), r1, r2)
        return _to_real(z)


@dataclass(frozen=True, eq=False)
class Similarity(ConformalMap):
    """x -> ratio * x + offset."""

    ratio: float
    offset: np.ndarray
    source: int = 0
    target: int = 0
    label: str = ""
    kind: str = "similarity"

    def __post_init__(self):
        if not self.ratio > 0:
            raise ValueError("ratio must be positive")
        object.__setattr__(self, "offset", np.asarray(self.offset, dtype=float))

    def _eval(self, pts):
        pts = np.asarray(pts, dtype=float)
        return self.ratio * pts + self.offset, np.full(pts.shape[:-1], np.log(self.ratio))

    def inverse(self, y):
        return (_as_points(y) - self.offset) / self.ratio


@dataclass(frozen=True, eq=False)
class Composed(ConformalMap):
    """maps[0] ∘ maps[1] ∘ ... evaluated as a closure."""

    maps: tuple
    source: int = 0
    target: int = 0
    label: str = ""
    kind: str = "composed"

    def _eval(self, pts):
        logd = 0.0
        y = pts
        for m in reversed(self.maps):
            y, ld = m._eval(y)
            logd = logd + ld
        return y, logd

    def inverse(self, y):
        for m in self.maps:
            y = m.inverse(y)
        return y


def compose(maps: Sequence[ConformalMap]) -> ConformalMap:
    """The map maps[0] ∘ maps[1] ∘ ... ∘ maps[-1]."""
    maps = list(maps)
    if not maps:
        raise ValueError("nothing to compose")
    for outer, inner in zip(maps[:-1], maps[1:]):
        if inner.target != outer.source:
            raise IncidenceError(
                f"cannot compose: inner map lands in vertex {inner.target}, "
                f"outer map starts at vertex {outer.source}")
    if len(maps) == 1:
        return maps[0]
    label = ".".join(m.label for m in maps)
    if all(isinstance(m, Moebius) for m in maps):
        mat = np.eye(2, dtype=complex)
        flip = False
        for m in maps:
            # conjugation commutes past later factors by conjugating them
            mat = mat @ (np.conj(m.matrix) if flip else m.matrix)
            flip ^= m.conj
        return Moebius(mat, conj=flip, source=maps[-1].source, target=maps[0].target, label=label)
    return Composed(tuple(maps), source=maps[-1].source, target=maps[0].target, label=label)


@dataclass(frozen=True)
class TailDescriptor:
    """Analytic bound for the maps dropped by truncating an infinite alphabet.

    kind "cf_integral": continued fraction maps with |e| >= R + 2.
    kind "apollonian_geometric": Apollonian maps with n > N.
    """

    kind: str
    n: int = 2
    k_set: tuple = ()

    def admissible(self, t):
        if self.kind == "cf_integral":
            return t > self.n / 2
        return t > 0.5


@dataclass(frozen=True)
class Alphabet:
    kind: str
    maps: tuple
    tail: TailDescriptor | None = None
    truncation: float | None = None
    family: Callable | None = field(default=None, compare=False)

    def truncated(self, truncation=None):
        if truncation is None or truncation == self.truncation or self.family is None:
            return self.maps
        return tuple(self.family(truncation))

    @property
    def infinite(self):
        return self.tail is not None


@dataclass(frozen=True)
class SystemSpec:
    name: str
    dim: int
    vertices: tuple
    alphabet: Alphabet
    derivative_kind: str = "mobius"
    mesh_inflation: float = 0.0
    info: dict = field(default_factory=dict, compare=False)

    @property
    def eta(self):
        return min(v.eta for v in self.vertices)

    def maps(self, truncation=None):
        return self.alphabet.truncated(truncation)


# ---------------------------------------------------------------------------
# validation

@dataclass
class CheckResult:
    name: str
    passed: bool
    worst_margin: float
    detail: str = ""


@dataclass
class ValidationReport:
    system: str
    checks: list

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def summary(self):
        lines = [f"validation of {self.system}:"]
        for c in self.checks:
            mark = "ok  " if c.passed else "FAIL"
            lines.append(f"  {mark} {c.name:<28} margin {c.worst_margin:.4g} {c.detail}")
        return "\n".join(lines)


def _region_margin(ball: Ball, pts):
    return ball.radius - np.linalg.norm(pts - ball.c, axis=-1)


def validate_system(spec: SystemSpec, samples_per_region: int = 1000,
                    truncation=None, max_pairs=60, seed=0) -> ValidationReport:
    """Sampled spot checks of the defining conditions; never raises on failure."""
    if samples_per_region < 10:
        raise ValueError("samples_per_region must be at least 10")
    maps = spec.maps(truncation)
    verts = spec.vertices
    samp = [v.X.samples(samples_per_region, seed=seed) for v in verts]
    checks = []

    # phi_e(X_source) inside X_target
    worst = np.inf
    bad = 0
    for m in maps:
        y, _ = m._eval(samp[m.source])
        marg = float(np.min(_region_margin(verts[m.target].X, y)))
        worst = min(worst, marg)
        bad += marg < -1e-12
    checks.append(CheckResult("maps into X", bad == 0, worst, f"{bad} maps fail"))

    # open set condition: no interior sample of one image inside another image
    worst = np.inf
    bad = 0
    by_target = {}
    for m in maps:
        by_target.setdefault(m.target, []).append(m)
    for group in by_target.values():
        group = group[:max_pairs]
        imgs = [m._eval(samp[m.source])[0] for m in group]
        for i, mi in enumerate(group):
            for j, mj in enumerate(group):
                if i == j:
                    continue
                try:
                    back = mj.inverse(imgs[i])
                except NotImplementedError:
                    continue
                # depth of the pulled-back points inside X_source(mj)
                fwd, _ = mj._eval(back)
                ok = np.linalg.norm(fwd - imgs[i], axis=-1) < 1e-9
                if not np.any(ok):
                    continue
                depth = _region_margin(verts[mj.source].X, back[ok])
                marg = float(-np.max(depth))
                worst = min(worst, marg)
                bad += marg < -1e-9
    checks.append(CheckResult("open set condition", bad == 0, worst, f"{bad} overlapping pairs"))

    # contraction on a neighbourhood of X inside W
    worst = np.inf
    test_maps = maps
    if spec.info.get("contraction_words", 1) == 2:
        test_maps = [compose([a, b]) for a in maps[:max_pairs] for b in maps[:max_pairs]
                     if b.target == a.source]
    for m in test_maps:
        v = verts[m.source]
        nb = Ball(v.X.center, v.X.radius + 0.5 * v.eta)
        pts = nb.samples(samples_per_region, seed=seed + 1)
        _, logd = m._eval(pts)
        worst = min(worst, 1.0 - float(np.exp(np.max(logd))))
    checks.append(CheckResult("contraction", worst > 0, worst))

    # W regions contain the X regions with the documented separation
    worst = min(v.eta for v in verts)
    checks.append(CheckResult("X inside W", worst > 0, worst))
    return ValidationReport(spec.name, checks)


def hutchinson_dimension(ratios) -> float:
    """Unique t >= 0 with sum r_i^t = 1."""
    r = np.asarray(ratios, dtype=float)
    if r.size == 0 or np.any(r <= 0) or np.any(r >= 1):
        raise ValueError("ratios must lie in (0, 1)")
    f = lambda t: float(np.sum(r ** t)) - 1.0
    if f(0.0) <= 0:
        return 0.0
    hi = 1.0
    while f(hi) > 0:
        hi *= 2
    return optimize.brentq(f, 0.0, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)


def multi_index_factorial(order):
    """Largest alpha! over multi-indices of the given length (pure partials)."""
    return factorial(order)
