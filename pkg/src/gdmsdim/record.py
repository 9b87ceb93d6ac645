"""Result records: JSON documents that carry enough to re-check a certificate."""
from __future__ import annotations

import base64
import json
import platform
import zlib
from dataclasses import asdict

import numpy as np

from . import __version__
from .errors import PositivityError, VerificationFailure
from .solver import CertifiedInterval, Setup

FORMAT = "gdmsdim-record/1"


def encode_vector(v):
    raw = np.ascontiguousarray(np.asarray(v, dtype="<f8")).tobytes()
    return base64.b64encode(zlib.compress(raw, 6)).decode("ascii")


def decode_vector(s):
    return np.frombuffer(zlib.decompress(base64.b64decode(s)), dtype="<f8").copy()


def _radius(c):
    return {"lo": c.lo, "hi": c.hi, "iterations": int(c.iterations),
            "witness": encode_vector(c.witness)}


def _budget(b):
    d = asdict(b)
    d["audit"] = {k: (list(v) if isinstance(v, tuple) else v) for k, v in b.audit.items()}
    return d


def build_record(config: dict, setup: Setup, result: CertifiedInterval, validation=None) -> dict:
    mesh = setup.mesh
    return {
        "format": FORMAT,
        "software": {"package": "gdmsdim", "version": __version__,
                     "python": platform.python_version(), "numpy": np.__version__},
        "config": config,
        "system": {"name": setup.spec.name, "dim": setup.spec.dim, "eta": setup.spec.eta,
                   "maps": len(setup.spec.maps(setup.truncation)),
                   "truncation": setup.truncation},
        "mesh": {"fingerprint": mesh.fingerprint(), "nodes": mesh.node_count,
                 "simplices": mesh.simplex_count, "h_max": mesh.h_max, "reach": mesh.reach},
        "interval": {"t_lo": result.t_lo, "t_hi": result.t_hi, "width": result.width,
                     "status": result.status, "monotone": result.monotone},
        "evidence_lo": _radius(result.evidence_lo),
        "evidence_hi": _radius(result.evidence_hi),
        "err": result.err,
        "budgets": {k: _budget(b) for k, b in result.budgets.items()},
        "tail": result.tail,
        "trace": result.trace,
        "validation": validation,
        "wall_time": result.wall_time,
    }


def write_record(record: dict, path):
    # json writes floats with repr, which round-trips exactly
    with open(path, "w") as fh:
        json.dump(record, fh, indent=1, sort_keys=False, allow_nan=False)
        fh.write("\n")


def read_record(path) -> dict:
    with open(path) as fh:
        rec = json.load(fh)
    if rec.get("format") != FORMAT:
        raise VerificationFailure(f"unknown record format {rec.get('format')!r}")
    return rec


def verify_record(path_or_record, raise_on_failure=True, setup: Setup | None = None) -> bool:
    """Rebuild the mesh and both endpoint matrices, and re-apply the
    Collatz-Wielandt checks with the stored witnesses."""
    from .cli import setup_from_config

    rec = read_record(path_or_record) if not isinstance(path_or_record, dict) else path_or_record
    try:
        if setup is None:
            setup = setup_from_config(rec["config"])
        if setup.mesh.fingerprint() != rec["mesh"]["fingerprint"]:
            raise VerificationFailure("mesh fingerprint differs from the record")
        t_lo, t_hi = rec["interval"]["t_lo"], rec["interval"]["t_hi"]
        if not t_lo < t_hi:
            raise VerificationFailure(f"t_lo = {t_lo!r} is not below t_hi = {t_hi!r}")
        checks = (("lo", t_lo, "evidence_lo"), ("hi", t_hi, "evidence_hi"))
        for side, t, key in checks:
            w = decode_vector(rec[key]["witness"])
            if w.shape != (setup.mesh.node_count,):
                raise VerificationFailure(f"{key}: witness length {w.size} does not match the mesh")
            if not np.all(w > 0):
                raise PositivityError(f"{key}: witness has non-positive entries")
            ev = Setup.certify_with(setup.matrices(t), w)
            if side == "lo" and not ev.A.lo > 1:
                raise VerificationFailure(
                    f"lower bound of r(A) at t_lo={t_lo!r} is {ev.A.lo!r}, not > 1")
            if side == "hi" and not ev.B.hi < 1:
                raise VerificationFailure(
                    f"upper bound of r(B) at t_hi={t_hi!r} is {ev.B.hi!r}, not < 1")
    except VerificationFailure:
        if raise_on_failure:
            raise
        return False
    return True
