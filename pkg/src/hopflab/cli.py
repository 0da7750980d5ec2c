"""Command-line front end: ``hopflab <command> --config cfg.json --out dir [--jobs N]``.

Every command reads a single JSON config, validates all descriptors before
computing anything, and writes a CSV report plus ``summary.json`` into the
output directory.  CSV files start with a ``# config_sha256=...`` line and
contain no timestamps, so identical configs give byte-identical CSVs for
any ``--jobs`` value; the timestamp lives only in the summary's
``metadata`` block.

Exit status: 0 success, 1 usage error or unreadable/malformed config,
2 validation failure (the violated invariant is named on stderr),
3 numerical failure (reports written so far are kept).

Config keys (all optional unless the command needs them)::

    modulus      {"family": "power", "alpha": 0.5}
    drift        {"family": "near_boundary", "C": 1.0, "sigma": {...}}
    domain       {"kind": "elliptic", "n": 2, "R": 1.0}
    family       {"label": "dini", "kind": "perturbed", "eps": 0.4,
                  "sigma": {...}, "drift": {...}, "nu": 0.5}
    r            radii for modulus / conditions
    rho          radii for solve / scans / t1-norm
    mesh         [N_r, N_theta] (elliptic) or [N_r, N_theta, N_t] (parabolic)
    n            spatial dimension for solve / scans
    gamma        Gaussian rate for parabolic conditions (default 1.0)
    scheme       "cn" | "be" for parabolic runs
    neumann_mesh mesh for the dense (I + T1) inverse check in t1-norm
"""
from __future__ import annotations

import argparse
import datetime
import hashlib
import json
import math
import os
import sys

import numpy as np

from . import __version__
from .drift import check_sufficiency, drift_from_dict, omega
from .errors import (ConvergenceError, DivergenceError, DomainError, HopfLabError,
                     InvariantViolation, UnsupportedFamilyError)
from .experiments import (CoefficientFamily, estimate_T1_norm, family_from_dict,
                          hopf_constant_scan, neumann_check, parabolic_hopf_scan)
from .geometry import DomainModel, domain_from_dict
from .modulus import dini_integral, eval_modulus, modulus_from_dict, smooth_hat
from .pde import (AnnulusProblem, CylinderProblem, normal_derivative_origin, node_points,
                  solve_annulus, solve_cylinder)

COMMANDS = ("modulus", "conditions", "solve", "hopf-scan", "parabolic-scan", "t1-norm")
EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser():
    p = _Parser(prog="hopflab", description="Boundary point lemma numerical laboratory")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="JSON experiment config")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for independent rows")
    return p


def _fmt(v):
    if isinstance(v, str):
        return v
    return repr(float(v))


class _Writer:
    def __init__(self, out, cfg_hash):
        self.out = out
        self.hash = cfg_hash
        os.makedirs(out, exist_ok=True)
        self.files = []

    def csv(self, name, header, rows):
        path = os.path.join(self.out, name)
        with open(path, "w", newline="\n") as fh:
            fh.write(f"# config_sha256={self.hash}\n")
            fh.write(",".join(header) + "\n")
            for row in rows:
                fh.write(",".join(_fmt(v) for v in row) + "\n")
        self.files.append(name)

    def summary(self, command, results, status):
        doc = {"config_sha256": self.hash, "command": command, "status": status,
               "files": self.files, "results": results,
               "metadata": {"timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
                            "version": __version__}}
        with open(os.path.join(self.out, "summary.json"), "w") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True, default=_json_default)
            fh.write("\n")


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o).__name__)


def _clean(v):
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    return v


# --------------------------------------------------------------------------
# validation


def _req(cfg, key):
    if key not in cfg:
        raise DomainError(f"config is missing required key {key!r}")
    return cfg[key]


def _radii(cfg, key):
    vals = _req(cfg, key)
    if not isinstance(vals, list) or not vals:
        raise DomainError(f"{key!r} must be a non-empty list of numbers")
    out = [float(v) for v in vals]
    if any(not v > 0 for v in out):
        raise DomainError(f"{key!r} entries must be positive")
    return out


def _family(cfg):
    fam = family_from_dict(cfg["family"]) if "family" in cfg else CoefficientFamily()
    if "drift" in cfg and "family" not in cfg:
        fam = CoefficientFamily("identity", "identity", drift=drift_from_dict(cfg["drift"]))
    return fam


def _validate_family(fam, rhos, n, parabolic):
    for rho in rhos:
        fld = fam.field(rho)
        if parabolic:
            prob = CylinderProblem(rho, fld, n, (8, 16, 1))
            from .pde import assemble_cylinder
            _, _, r, th, kind = assemble_cylinder(prob)
        else:
            from .pde import _annulus_grid
            r, th = _annulus_grid(rho, n, (16, 24 if n == 2 else 16))
            kind = f"annulus{n}"
        fld.validate(node_points(kind, rho, r, th).reshape(-1, n))


# --------------------------------------------------------------------------
# commands


def cmd_modulus(cfg, w, jobs):
    sigma = modulus_from_dict(_req(cfg, "modulus"))
    rs = _radii(cfg, "r")
    for r in rs:
        if r > 1:
            raise DomainError("modulus radii must lie in (0, 1]")
    rows = []
    for r in rs:
        J = dini_integral(sigma, r) if sigma.is_dini else float("inf")
        rows.append((r, eval_modulus(sigma, r), smooth_hat(sigma, r), J))
    w.csv("modulus.csv", ["r", "sigma", "sigma_hat", "J"], rows)
    return {"modulus": sigma.to_dict(), "is_dini": sigma.is_dini}, EXIT_OK


def cmd_conditions(cfg, w, jobs):
    b = drift_from_dict(_req(cfg, "drift"))
    if "modulus" in cfg:
        sigma = modulus_from_dict(cfg["modulus"])
    elif hasattr(b, "sigma"):
        sigma = b.sigma
    else:
        raise DomainError("conditions needs a 'modulus' for the bound unless the drift carries one")
    domain = domain_from_dict(cfg.get("domain", {"kind": "elliptic", "n": 2, "R": 1.0}))
    rs = _radii(cfg, "r")
    gamma = float(cfg.get("gamma", 1.0))
    if not gamma > 0:
        raise DomainError("gamma must be positive")
    for r in rs:
        if r > 2 * domain.R:
            raise DomainError(f"radius {r} exceeds 2R")
    if not sigma.is_dini:
        raise DivergenceError(f"modulus {sigma.to_dict()} is not Dini: J_sigma diverges")
    rep = check_sufficiency(b, sigma, domain, rs, gamma, jobs=jobs)
    w.csv("conditions.csv", ["r", "omega", "bound_rhs", "ratio"], rep.csv_rows())
    return {"fitted_constant": rep.fitted_constant, "verdict": rep.verdict, "bound": rep.rhs_label,
            "drift": b.to_dict(), "modulus": sigma.to_dict(), "domain": domain.to_dict()}, EXIT_OK


def cmd_solve(cfg, w, jobs):
    fam = _family(cfg)
    domain = cfg.get("domain", {"kind": "elliptic"})
    kind = domain.get("kind", "elliptic")
    n = int(cfg.get("n", domain.get("n", 2)))
    rho = _radii(cfg, "rho")[0]
    parabolic = kind == "parabolic"
    _validate_family(fam, [rho], n, parabolic)
    if parabolic:
        mesh = tuple(int(v) for v in cfg.get("mesh", (32, 64, 64)))
        f = solve_cylinder(CylinderProblem(rho, fam.field(rho), n, mesh, cfg.get("scheme", "cn")))
        rows = [(r, th, 0.0, f.values[i, j]) for i, r in enumerate(f.r) for j, th in enumerate(f.theta)]
        w.csv("solution.csv", ["r", "theta", "t", "value"], rows)
        res = {"dnv0": normal_derivative_origin(f), "min": float(f.extrema.min()),
               "max": float(f.extrema.max())}
    else:
        mesh = tuple(int(v) for v in cfg.get("mesh", (64, 96)))
        f = solve_annulus(AnnulusProblem(rho, fam.field(rho), n, mesh))
        rows = [(r, th, f.values[i, j]) for i, r in enumerate(f.r) for j, th in enumerate(f.theta)]
        w.csv("solution.csv", ["r", "theta", "value"], rows)
        res = {"dnv0": normal_derivative_origin(f), "min": float(f.values.min()), "max": float(f.values.max())}
    res.update(rho=rho, mesh=list(mesh), residual=f.residual, family=fam.to_dict())
    return res, EXIT_OK


def _scan(cfg, w, jobs, parabolic):
    fam = _family(cfg)
    n = int(cfg.get("n", 2))
    rhos = _radii(cfg, "rho")
    _validate_family(fam, rhos, n, parabolic)
    if parabolic:
        mesh = tuple(int(v) for v in cfg.get("mesh", (32, 64, 128)))
        rep = parabolic_hopf_scan(fam, rhos, mesh, n, jobs, cfg.get("scheme", "cn"))
        name = "parabolic_scan.csv"
    else:
        mesh = tuple(int(v) for v in cfg.get("mesh", (64, 96)))
        rep = hopf_constant_scan(fam, rhos, mesh, n, jobs)
        name = "hopf_scan.csv"
    lines = rep.csv_lines()
    w.csv(name, lines[0].split(","), [l.split(",") for l in lines[1:]])
    summ = {k: _clean(v) for k, v in rep.summary().items()}
    status = EXIT_OK if not rep.failed else EXIT_NUMERIC
    return summ, status


def cmd_hopf_scan(cfg, w, jobs):
    return _scan(cfg, w, jobs, parabolic=False)


def cmd_parabolic_scan(cfg, w, jobs):
    return _scan(cfg, w, jobs, parabolic=True)


def cmd_t1_norm(cfg, w, jobs):
    b = drift_from_dict(_req(cfg, "drift"))
    rhos = sorted(_radii(cfg, "rho"), reverse=True)
    mesh = tuple(int(v) for v in cfg.get("mesh", (32, 48)))
    domain = DomainModel("elliptic", 2, 1.0)
    rows, res = [], {"drift": b.to_dict(), "mesh": list(mesh), "neumann": []}
    for rho in rhos:
        if 2 * rho > 2 * domain.R:
            raise DomainError(f"radius {rho} too large")
    for rho in rhos:
        t = estimate_T1_norm(rho, b, mesh)
        om = omega(b, domain, 2 * rho) if not b.is_zero else 0.0
        rows.append((rho, t, om, t / om if om > 0 else 0.0))
    w.csv("t1_norm.csv", ["rho", "t1_norm", "omega_2rho", "ratio"], rows)
    if "neumann_mesh" in cfg:
        from .pde import CoefficientField
        nm = tuple(int(v) for v in cfg["neumann_mesh"])
        for rho in rhos:
            res["neumann"].append({"rho": rho, **{k: _clean(v) for k, v in
                                                  neumann_check(rho, CoefficientField(b=b), nm).items()}})
    return res, EXIT_OK


HANDLERS = {"modulus": cmd_modulus, "conditions": cmd_conditions, "solve": cmd_solve,
            "hopf-scan": cmd_hopf_scan, "parabolic-scan": cmd_parabolic_scan, "t1-norm": cmd_t1_norm}


def run(command, config_path, out, jobs=1) -> int:
    """Execute one command; returns the process exit status."""
    try:
        with open(config_path, "rb") as fh:
            raw = fh.read()
        cfg = json.loads(raw)
        if not isinstance(cfg, dict):
            raise ValueError("config must be a JSON object")
    except (OSError, ValueError) as exc:
        print(f"hopflab: cannot read config {config_path}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if "command" in cfg and cfg["command"] != command:
        print(f"hopflab: config is for command {cfg['command']!r}, not {command!r}", file=sys.stderr)
        return EXIT_USAGE
    if jobs < 1:
        print("hopflab: --jobs must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    cfg_hash = hashlib.sha256(raw).hexdigest()
    w = _Writer(out, cfg_hash)
    try:
        results, status = HANDLERS[command](cfg, w, jobs)
    except InvariantViolation as exc:
        print(f"hopflab: invariant violated: {exc.invariant}: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except DivergenceError as exc:
        print(f"hopflab: validation failed: non-Dini or divergent input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (DomainError, UnsupportedFamilyError, KeyError, TypeError) as exc:
        print(f"hopflab: validation failed: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ConvergenceError, HopfLabError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"hopflab: numerical failure: {exc}", file=sys.stderr)
        w.summary(command, {"error": str(exc)}, "numerical-failure")
        return EXIT_NUMERIC
    w.summary(command, results, "ok" if status == EXIT_OK else "partial")
    if status == EXIT_NUMERIC:
        print("hopflab: some rows failed; see summary.json", file=sys.stderr)
    return status


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return run(args.command, args.config, args.out, args.jobs)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
