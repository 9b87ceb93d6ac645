"""Bracketing the dimension: find t_lo with r(A_t) > 1 and t_hi with r(B_t) < 1.

Both certified radii are decreasing in t.  One evaluation at t gives the pair
(lower bound of r(A_t), upper bound of r(B_t)); the solver runs a safeguarded
regula falsi (Illinois variant) on the logarithm of each of them.
"""
from __future__ import annotations

import logging
import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .assembly import Collocation, assemble, build_collocation
from .constants import ErrorBudget, error_budget
from .core import SystemSpec
from .errors import BracketFailure, ErrTooLarge, RangeError
from .mesh import Mesh, build_mesh
from .spectral import CertifiedRadius, power_iterate_operator, ratio_bracket

log = logging.getLogger(__name__)

MAX_EVALS = 60


@dataclass
class Evaluation:
    t: float
    A: CertifiedRadius
    B: CertifiedRadius
    err: float
    iterations: int

    @property
    def lower_ok(self):
        return self.A.lo > 1

    @property
    def upper_ok(self):
        return self.B.hi < 1

    @property
    def midpoint(self):
        return 0.5 * (self.A.lo + self.B.hi)

    def decision(self):
        if self.lower_ok:
            return "lower"
        if self.upper_ok:
            return "upper"
        return "undecided"


@dataclass
class Setup:
    """Everything that does not depend on t: system, mesh, cached locations."""

    spec: SystemSpec
    mesh: Mesh
    truncation: float | None = None
    tol_spectral: float | None = None
    max_iter: int = 20000
    colloc: Collocation | None = None
    _budgets: dict = field(default_factory=dict)
    _witness: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.colloc is None:
            self.colloc = build_collocation(self.spec, self.mesh, self.truncation)

    @property
    def eta_eff(self):
        # constants are evaluated for the slightly larger region the mesh covers
        return self.spec.eta - self.mesh.reach

    def budget(self, t) -> ErrorBudget:
        if t not in self._budgets:
            self._budgets[t] = error_budget(self.spec.derivative_kind, self.spec.dim, t,
                                            self.eta_eff, self.mesh.h_max)
        return self._budgets[t]

    def matrices(self, t):
        return assemble(self.spec, self.mesh, t, self.budget(t), colloc=self.colloc)

    def _start(self, t):
        if not self._witness:
            return None
        near = min(self._witness, key=lambda s: abs(s - t))
        return self._witness[near]

    def evaluate(self, t) -> Evaluation:
        tm = self.matrices(t)
        PT = tm.P.T
        tol = self.tol_spectral or max(1e-4 * tm.err, 1e-13)
        w, it, _ = power_iterate_operator(lambda v: PT @ v, tm.N, tol, self.max_iter, self._start(t))
        self._witness[t] = w
        while len(self._witness) > 2:
            self._witness.pop(next(iter(self._witness)))
        return self.certify_with(tm, w, it)

    @staticmethod
    def certify_with(tm, w, iterations=0) -> Evaluation:
        ya, yb = tm.operator_products(w)
        k = tm.max_row_terms()
        a_lo, a_hi = ratio_bracket(ya, w, k)
        b_lo, b_hi = ratio_bracket(yb, w, k)
        return Evaluation(tm.t, CertifiedRadius(a_lo, a_hi, w, iterations),
                          CertifiedRadius(b_lo, b_hi, w, iterations), tm.err, iterations)


def make_setup(spec: SystemSpec, mesh_h: float, truncation=None, delta=None,
               tol_spectral=None) -> Setup:
    inflate = spec.mesh_inflation * mesh_h
    mesh = build_mesh(list(spec.vertices), mesh_h, delta=delta, inflate=inflate)
    if truncation is None:
        truncation = spec.alphabet.truncation
    return Setup(spec, mesh, truncation, tol_spectral)


def certify_lower(setup: Setup, t: float):
    ev = setup.evaluate(t)
    return ev.lower_ok, ev.A


def certify_upper(setup: Setup, t: float):
    ev = setup.evaluate(t)
    return ev.upper_ok, ev.B


@dataclass
class CertifiedInterval:
    t_lo: float
    t_hi: float
    evidence_lo: CertifiedRadius
    evidence_hi: CertifiedRadius
    h_max: float
    err: float
    tail: dict
    wall_time: float
    trace: list
    status: str = "ok"
    monotone: bool = True
    budgets: dict = field(default_factory=dict)

    @property
    def width(self):
        return self.t_hi - self.t_lo

    @property
    def mesh_limited(self):
        return self.status == "mesh-limited"

    def contains(self, x):
        return self.t_lo <= x <= self.t_hi


class _Root:
    """Bracket [a, b] of a decreasing function: g(a) > 0 >= g(b) (Illinois)."""

    def __init__(self):
        self.a = self.ga = self.b = self.gb = None
        self.side = 0

    def update(self, t, g):
        if g > 0:
            if self.a is None or t > self.a:
                self.a, self.ga = t, g
                self.side = self.side + 1 if self.side > 0 else 1
                if self.side >= 2 and self.gb is not None:
                    self.gb *= 0.5
        else:
            if self.b is None or t < self.b:
                self.b, self.gb = t, g
                self.side = self.side - 1 if self.side < 0 else -1
                if self.side <= -2 and self.ga is not None:
                    self.ga *= 0.5

    @property
    def ready(self):
        return self.a is not None and self.b is not None

    @property
    def width(self):
        return self.b - self.a

    def candidate(self):
        a, b, ga, gb = self.a, self.b, self.ga, self.gb
        t = a + ga * (b - a) / (ga - gb) if ga != gb else 0.5 * (a + b)
        if not (a < t < b):
            return 0.5 * (a + b)
        # a root next to an endpoint: step just inside instead of bisecting
        margin = 1e-3 * (b - a)
        return min(max(t, a + margin), b - margin)


def bracket_dimension(setup: Setup, width_goal: float | None, t_init, min_t=None,
                      max_evals: int = MAX_EVALS) -> CertifiedInterval:
    """Tightest certified (t_lo, t_hi) found within ``max_evals`` evaluations."""
    start = time.perf_counter()
    desc = setup.spec.alphabet.tail
    if min_t is None:
        min_t = 0.0
        if desc is not None:
            min_t = desc.n / 2 if desc.kind == "cf_integral" else 0.5
    lo_root, hi_root = _Root(), _Root()
    trace = []
    evals = {}

    def run(t):
        if t <= min_t:
            raise RangeError(f"t={t} outside the admissible range (> {min_t})")
        ev = setup.evaluate(t)
        evals[t] = ev
        trace.append({"t": t, "A_lo": ev.A.lo, "B_hi": ev.B.hi, "err": ev.err,
                      "iterations": ev.iterations, "decision": ev.decision()})
        log.info("t=%.10f  r(A)>=%.12f  r(B)<=%.12f  %s", t, ev.A.lo, ev.B.hi, ev.decision())
        lo_root.update(t, math.log(ev.A.lo) if ev.A.lo > 0 else -np.inf)
        hi_root.update(t, math.log(ev.B.hi))
        # only the witnesses of the current best endpoints are kept
        for s, e in evals.items():
            if s not in (lo_root.a, hi_root.b):
                e.A.witness = e.B.witness = None
        return ev

    cap = [math.inf]     # smallest t known to give err >= 1

    def run_upward(t):
        """Evaluate t, backing off towards the evaluated range while err >= 1."""
        for _ in range(30):
            t = min(t, 0.5 * (max(evals, default=t) + cap[0]))
            try:
                return run(t)
            except ErrTooLarge:
                if not evals:
                    raise
                cap[0] = t
        raise BracketFailure("err >= 1 just above the evaluated range; refine the mesh")

    a, b = sorted(float(x) for x in t_init)
    run(a)
    run_upward(b)
    # widen the initial range until both roots are straddled
    step = b - a
    while len(evals) < max_evals and not (lo_root.ready and hi_root.ready):
        if lo_root.a is None:
            a = max(min(evals) - step, 0.5 * (min(evals) + min_t))
            run(a)
        else:
            if max(evals) >= cap[0] * (1 - 1e-9):
                break
            run_upward(max(evals) + step)
        step *= 2

    floor = None
    status = "ok"
    while len(evals) < max_evals and lo_root.ready and hi_root.ready:
        width = hi_root.b - lo_root.a
        if width_goal is not None and width <= width_goal:
            break
        ts = sorted(evals)
        if floor is None and len(ts) >= 2:
            e0, e1 = evals[ts[0]], evals[ts[-1]]
            slope = (math.log(e1.midpoint) - math.log(e0.midpoint)) / (ts[-1] - ts[0])
            err = max(e.err for e in evals.values())
            if slope < 0:
                floor = (math.log1p(err) - math.log1p(-err)) / abs(slope)
        resolve = 1e-3 * floor if floor else 1e-9
        resolve = max(resolve, 1e-13 * max(1.0, abs(lo_root.a)))
        if lo_root.width <= resolve and hi_root.width <= resolve:
            status = "mesh-limited"
            break
        root = lo_root if lo_root.width / max(lo_root.width + hi_root.width, 1e-300) >= 0.5 else hi_root
        if root.width <= resolve:
            root = hi_root if root is lo_root else lo_root
        run(root.candidate())

    if not (lo_root.a is not None and hi_root.b is not None):
        raise BracketFailure(f"no certified pair after {len(evals)} evaluations; "
                             f"check the t hints or refine the mesh")
    width = hi_root.b - lo_root.a
    if status == "ok" and width_goal is not None and width > width_goal:
        status = "mesh-limited" if floor is not None and width_goal < floor else "eval-limit"

    ts = sorted(evals)
    mids = [evals[t].midpoint for t in ts]
    monotone = all(m1 <= m0 * (1 + 1e-9) for m0, m1 in zip(mids, mids[1:]))
    if not monotone:
        warnings.warn("certified radius midpoints are not monotone along the trace")

    ev_lo, ev_hi = evals[lo_root.a], evals[hi_root.b]
    tail = {}
    tms = setup.matrices(lo_root.a)
    for tb in tms.tails:
        tail[tb.kind] = {"truncation": tb.truncation_parameter}
    budgets = {k: setup.budget(t) for k, t in (("lo", lo_root.a), ("hi", hi_root.b))}
    return CertifiedInterval(lo_root.a, hi_root.b, ev_lo.A, ev_hi.B, setup.mesh.h_max,
                             max(ev_lo.err, ev_hi.err), tail, time.perf_counter() - start,
                             trace, status, monotone, budgets)
