"""Certified spectral radius brackets for non-negative matrices.

For M >= 0 and any strictly positive w,
    min_j (Mw)_j / w_j  <=  r(M)  <=  max_j (Mw)_j / w_j.
Power iteration only improves the witness; it never affects soundness.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import NonConvergence, PositivityError

EPS_FP = 1e-12
FLOOR = 1e-300
U = np.finfo(float).eps / 2


@dataclass
class CertifiedRadius:
    lo: float
    hi: float
    witness: np.ndarray
    iterations: int = 0
    converged: bool = True

    @property
    def width(self):
        return self.hi - self.lo


def _max_row_terms(M):
    if sp.issparse(M):
        M = sp.csr_matrix(M)
        return int(np.diff(M.indptr).max(initial=0))
    return int(np.asarray(M).shape[1])


def rounding_slack(k):
    """Relative slack covering a k-term non-negative sum plus one division."""
    return max(EPS_FP, 1.01 * (k + 2) * U)


def ratio_bracket(y, w, k):
    """Outward rounded min/max of y/w for a k-term matvec y."""
    r = y / w
    s = rounding_slack(k)
    return float(r.min()) * (1 - s), float(r.max()) * (1 + s)


def _check_witness(w, N):
    w = np.asarray(w, dtype=float)
    if w.shape != (N,):
        raise ValueError(f"witness has shape {w.shape}, expected ({N},)")
    if not np.all(w > 0):
        raise PositivityError("witness must be strictly positive")
    return w


def certify_bounds(M, w) -> CertifiedRadius:
    """Collatz-Wielandt bracket of r(M) for the witness w."""
    N = M.shape[0]
    w = _check_witness(w, N)
    y = M @ w
    lo, hi = ratio_bracket(np.asarray(y).reshape(-1), w, _max_row_terms(M))
    return CertifiedRadius(max(lo, 0.0), hi, w, 0)


def power_iterate(M, tol: float = 1e-8, max_iter: int | None = None, w0=None,
                  raise_on_failure=True, return_info=False):
    """Positive approximate Perron vector of M, normalized to max entry 1."""
    N = M.shape[0]
    if max_iter is None:
        max_iter = 10 * N
    w = np.ones(N) if w0 is None else _check_witness(w0, N).copy()
    w /= w.max()
    if sp.issparse(M):
        rows = np.diff(sp.csr_matrix(M).indptr)
        if np.any(rows == 0):
            warnings.warn("matrix has empty rows; affected witness entries are floored")
    spread = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        y = np.asarray(M @ w).reshape(-1)
        r = y / w
        lo, hi = r.min(), r.max()
        spread = (hi - lo) / lo if lo > 0 else np.inf
        if spread <= tol:
            break
        top = y.max()
        if top <= 0:
            break
        w = np.maximum(y / top, FLOOR)
    converged = spread <= tol
    if not converged and raise_on_failure:
        raise NonConvergence(f"spread {spread:.3g} > tol after {it} iterations", witness=w)
    if return_info:
        return w, it, converged
    return w


def spectral_radius_interval(M, tol: float = 1e-8, max_iter: int | None = None) -> CertifiedRadius:
    """Power iteration followed by the certificate; ``converged`` flags tightness."""
    w, it, conv = power_iterate(M, tol, max_iter, raise_on_failure=False, return_info=True)
    c = certify_bounds(M, w)
    c.iterations = it
    # the certificate adds outward rounding on top of the iteration spread
    slack = 2 * rounding_slack(_max_row_terms(M)) * c.hi
    c.converged = conv and (c.hi - c.lo) <= tol * c.lo + slack
    return c


def power_iterate_operator(apply, N, tol, max_iter, w0=None):
    """Power iteration for an operator given as a function w -> y."""
    w = np.ones(N) if w0 is None else np.maximum(np.asarray(w0, float), FLOOR)
    w = w / w.max()
    spread = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        y = apply(w)
        r = y / w
        lo, hi = r.min(), r.max()
        spread = (hi - lo) / lo if lo > 0 else np.inf
        if spread <= tol:
            break
        w = np.maximum(y / y.max(), FLOOR)
    return w, it, spread
