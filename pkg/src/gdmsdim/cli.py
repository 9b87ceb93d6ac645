"""Command line front end: ``dim run``, ``dim verify``, ``dim catalog``."""
from __future__ import annotations

import argparse
import configparser
import json
import logging
import sys

from .constants import error_budget
from .core import validate_system
from .errors import (BracketFailure, ConfigError, DimError, ErrTooLarge, NotFoundError,
                     PositivityError, VerificationFailure)
from .record import build_record, verify_record, write_record
from .solver import bracket_dimension, make_setup
from .systems import CATALOG, get_entry, similitude_system

log = logging.getLogger("gdmsdim")

EXIT_OK, EXIT_CERT, EXIT_CONFIG = 0, 2, 3

DEFAULTS = {
    "system": None, "system_params": {}, "mesh_h": None, "delta": None, "truncation": None,
    "width_goal": None, "tol_spectral": None, "t_init": None, "seed": 0, "max_evals": 60,
    "jobs": 1, "record": None, "summary": None, "figure": None, "figure_depth": 0,
}


def normalize_config(cfg: dict) -> dict:
    out = dict(DEFAULTS)
    unknown = set(cfg) - set(DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown configuration keys: {', '.join(sorted(unknown))}")
    out.update({k: v for k, v in cfg.items() if v is not None})
    if not out["system"]:
        raise ConfigError("no system given")
    if out["system"] != "similitude" and out["system"] not in CATALOG:
        raise ConfigError(f"unknown system {out['system']!r}; available: {', '.join(CATALOG)}")
    if out["mesh_h"] is None:
        if out["system"] == "similitude":
            raise ConfigError("mesh_h is required")
        out["mesh_h"] = get_entry(out["system"]).default_h
    if not out["mesh_h"] > 0:
        raise ConfigError("mesh_h must be positive")
    if out["width_goal"] is not None and not out["width_goal"] > 0:
        raise ConfigError("width_goal must be positive")
    return out


def build_spec(cfg):
    if cfg["system"] == "similitude":
        p = cfg["system_params"]
        try:
            return similitude_system(p["ratios"], p["centers"], p.get("eta", 100.0))
        except KeyError as exc:
            raise ConfigError(f"similitude system needs {exc.args[0]!r}") from None
    entry = get_entry(cfg["system"])
    return entry.build(cfg["truncation"])


def t_init_for(cfg, spec):
    if cfg["t_init"] is not None:
        return tuple(float(x) for x in cfg["t_init"])
    if cfg["system"] == "similitude":
        from .core import hutchinson_dimension
        c = hutchinson_dimension(cfg["system_params"]["ratios"])
        return (0.9 * c, 1.1 * c)
    return get_entry(cfg["system"]).t_init


def setup_from_config(cfg: dict):
    cfg = normalize_config(cfg)
    spec = build_spec(cfg)
    return make_setup(spec, cfg["mesh_h"], truncation=cfg["truncation"], delta=cfg["delta"],
                      tol_spectral=cfg["tol_spectral"])


def check_budget(spec, cfg, t):
    """Fail fast, before meshing, when the mesh cannot give err < 1."""
    h = cfg["mesh_h"]
    reach = spec.mesh_inflation * h + h
    error_budget(spec.derivative_kind, spec.dim, t, spec.eta - reach, h)


def run(config: dict) -> dict:
    """validate -> mesh -> constants -> bracket; returns the result record."""
    cfg = normalize_config(config)
    spec = build_spec(cfg)
    report = validate_system(spec, 1000, seed=cfg["seed"])
    if not report.passed:
        raise ConfigError("system failed validation\n" + report.summary())
    t_init = t_init_for(cfg, spec)
    check_budget(spec, cfg, min(t_init))
    setup = setup_from_config(cfg)
    result = bracket_dimension(setup, cfg["width_goal"], t_init, max_evals=cfg["max_evals"])
    validation = [{"name": c.name, "passed": bool(c.passed), "margin": c.worst_margin}
                  for c in report.checks]
    rec = build_record(cfg, setup, result, validation)
    if cfg["record"]:
        write_record(rec, cfg["record"])
    text = summary_text(rec)
    if cfg["summary"]:
        with open(cfg["summary"], "w") as fh:
            fh.write(text + "\n")
    if cfg["figure"]:
        from .figure import emit_figure
        emit_figure(spec, int(cfg["figure_depth"]), cfg["figure"])
    return rec


def summary_text(rec):
    iv = rec["interval"]
    lines = [
        f"system      {rec['system']['name']} ({rec['system']['maps']} maps, dim {rec['system']['dim']})",
        f"mesh        {rec['mesh']['nodes']} nodes, h_max {rec['mesh']['h_max']:.4g}",
        f"err         {rec['err']:.6g}",
        f"dimension   [{iv['t_lo']:.10f}, {iv['t_hi']:.10f}]  width {iv['width']:.3g}",
        f"evidence    r(A_lo) >= {rec['evidence_lo']['lo']:.12f}   r(B_hi) <= {rec['evidence_hi']['hi']:.12f}",
        f"status      {iv['status']}{'' if iv['monotone'] else ' (non-monotone trace)'}",
        f"evaluations {len(rec['trace'])} in {rec['wall_time']:.1f} s",
    ]
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# configuration files

def read_config_file(path) -> dict:
    cp = configparser.ConfigParser()
    if not cp.read(path):
        raise ConfigError(f"cannot read configuration file {path}")
    cfg = {}
    conv = {
        ("system", "name"): ("system", str), ("system", "truncation"): ("truncation", float),
        ("system", "ratios"): ("ratios", json.loads), ("system", "centers"): ("centers", json.loads),
        ("mesh", "h"): ("mesh_h", float), ("mesh", "delta"): ("delta", float),
        ("solver", "width_goal"): ("width_goal", float),
        ("solver", "tol_spectral"): ("tol_spectral", float),
        ("solver", "t_init"): ("t_init", json.loads), ("solver", "max_evals"): ("max_evals", int),
        ("run", "seed"): ("seed", int), ("run", "jobs"): ("jobs", int),
        ("output", "record"): ("record", str), ("output", "summary"): ("summary", str),
        ("output", "figure"): ("figure", str), ("output", "figure_depth"): ("figure_depth", int),
    }
    params = {}
    for sec in cp.sections():
        for key, raw in cp.items(sec):
            if (sec, key) not in conv:
                raise ConfigError(f"unknown configuration entry [{sec}] {key}")
            name, fn = conv[(sec, key)]
            try:
                val = fn(raw)
            except ValueError as exc:
                raise ConfigError(f"[{sec}] {key}: {exc}") from None
            if name in ("ratios", "centers"):
                params[name] = val
            else:
                cfg[name] = val
    if params:
        cfg["system_params"] = params
    return cfg


# ---------------------------------------------------------------------------
# entry point

def _parser():
    p = argparse.ArgumentParser(prog="dim", description="Certified Hausdorff dimension bounds")
    sub = p.add_subparsers(dest="cmd", required=True)
    r = sub.add_parser("run", help="bracket the dimension of a system")
    r.add_argument("--config", help="INI configuration file")
    r.add_argument("--system", help="catalog name (see `dim catalog`)")
    r.add_argument("--h", type=float, dest="mesh_h", help="target mesh size")
    r.add_argument("--delta", type=float)
    r.add_argument("--truncation", type=float)
    r.add_argument("--width-goal", type=float, dest="width_goal")
    r.add_argument("--tol", type=float, dest="tol_spectral")
    r.add_argument("--t-init", type=float, nargs=2, dest="t_init")
    r.add_argument("--max-evals", type=int, dest="max_evals")
    r.add_argument("--seed", type=int)
    r.add_argument("--out", dest="record", help="result record (JSON)")
    r.add_argument("--summary")
    r.add_argument("--figure", type=int, dest="figure_depth", metavar="DEPTH")
    r.add_argument("--figure-path", dest="figure")
    r.add_argument("--jobs", type=int, help="worker cap (computation is single threaded)")
    r.add_argument("-v", "--verbose", action="store_true")
    v = sub.add_parser("verify", help="re-check a result record")
    v.add_argument("record")
    sub.add_parser("catalog", help="list built-in systems")
    return p


def main(argv=None):
    try:
        args = _parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    if args.cmd == "catalog":
        for name, e in CATALOG.items():
            c, r = e.table1
            print(f"{name:18s} {c:<12} +-{r:<8g} h={e.default_h:<8g} {e.description}")
        return EXIT_OK
    if args.cmd == "verify":
        try:
            verify_record(args.record)
        except (VerificationFailure, PositivityError) as exc:
            print(f"verification failed: {exc}", file=sys.stderr)
            return EXIT_CERT
        except (OSError, ValueError, KeyError, DimError) as exc:
            print(f"cannot verify {args.record}: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        print("ok")
        return EXIT_OK

    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s")
    try:
        cfg = read_config_file(args.config) if args.config else {}
        for key in DEFAULTS:
            val = getattr(args, key, None)
            if val is not None:
                cfg[key] = val
        if cfg.get("figure_depth") and not cfg.get("figure"):
            cfg["figure"] = f"{cfg.get('system', 'system')}.svg"
        rec = run(cfg)
    except (ConfigError, NotFoundError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        print(f"available systems: {', '.join(CATALOG)}", file=sys.stderr)
        return EXIT_CONFIG
    except ErrTooLarge as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (BracketFailure, PositivityError) as exc:
        print(f"certification failed: {exc}", file=sys.stderr)
        return EXIT_CERT
    print(summary_text(rec))
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
