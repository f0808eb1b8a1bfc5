"""Command-line experiment runner.

Every subcommand reads a JSON config, writes ``<command>.csv`` (header row,
RFC 4180 quoting) into ``--out`` together with ``<command>.manifest.json``
(config hash, versions, seeds, status).  Identical configs give identical
files.

Exit codes: 0 success, 2 invalid config, 3 budget exceeded (partial rows are
written and the manifest has ``"partial": true``).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import platform
import sys
from fractions import Fraction
from pathlib import Path
from typing import Any, Callable

import jsonschema
import numpy as np
import scipy

from . import __version__
from .entropy import DEFAULT_DELTAS, cond_shannon, log_count, stirling_curve
from .group_ring import l1_condition, ring_from_json, spectral_row, spectral_trend
from .groups import approx_from_descriptor, fix_defect, hom_defect
from .lde import AtomicMeasure, lde_report
from .microstates import (
    APQuery,
    ap_count_exact,
    ap_sample_estimate,
    rel_ap_sup,
    sample_ap_member,
)
from .permlab import conjugate_microstates_Z
from .systems import (
    BudgetExceeded,
    Refinement,
    join,
    law,
    letter_from_json,
    observable_from_json,
    system_from_json,
    to_fraction,
)

log = logging.getLogger("soficlab")

COMMANDS = (
    "sofic-defects", "ap-count", "ap-estimate", "rel-entropy",
    "stirling", "conjugate", "lde-check", "ring-spectra",
)

_number = {"type": ["number", "string"]}
_nonempty = lambda item: {"type": "array", "items": item, "minItems": 1}  # noqa: E731
_sigma = {"type": "object", "required": ["group"], "properties": {"group": {"type": "string"}}}
_system = {"type": "object", "required": ["alphabet", "law"],
           "properties": {"alphabet": {"type": "array", "minItems": 1}, "law": {"type": "object"}}}

SCHEMAS: dict[str, dict] = {
    "sofic-defects": {"type": "object", "required": ["sigmas", "elements"],
                      "properties": {"sigmas": _nonempty(_sigma), "elements": _nonempty({})}},
    "ap-count": {"type": "object", "required": ["system", "observable", "F", "deltas", "sigmas"],
                 "properties": {"system": _system, "F": _nonempty({}), "deltas": _nonempty(_number),
                                "sigmas": _nonempty(_sigma), "budget": {"type": "integer", "minimum": 1}}},
    "ap-estimate": {"type": "object",
                    "required": ["system", "observable", "F", "deltas", "sigmas", "n_samples"],
                    "properties": {"system": _system, "F": _nonempty({}), "deltas": _nonempty(_number),
                                   "sigmas": _nonempty(_sigma),
                                   "n_samples": {"type": "integer", "minimum": 1},
                                   "seed": {"type": "integer"}}},
    "rel-entropy": {"type": "object", "required": ["system", "alpha", "beta", "F", "deltas", "sigmas"],
                    "properties": {"system": _system, "F": _nonempty({}), "deltas": _nonempty(_number),
                                   "sigmas": _nonempty(_sigma)}},
    "stirling": {"type": "object", "required": ["J", "ns"],
                 "properties": {"J": _nonempty(_nonempty(_number)),
                                "ns": _nonempty({"type": "integer", "minimum": 1}),
                                "deltas": _nonempty(_number)}},
    "conjugate": {"type": "object", "required": ["E", "eps", "T"],
                  "properties": {"E": _nonempty({"type": "integer"}), "eps": {"type": "number"},
                                 "T": {"type": "integer", "minimum": 1}, "phi": {"type": "array"},
                                 "psi": {"type": "array"}, "d": {"type": "integer", "minimum": 1},
                                 "seed": {"type": "integer"}}},
    "lde-check": {"type": "object", "required": ["system", "sigmas"],
                  "properties": {"system": _system, "sigmas": _nonempty(_sigma)}},
    "ring-spectra": {"type": "object", "required": ["element", "quotients"],
                     "properties": {"element": {"type": "object", "required": ["entries"]},
                                    "quotients": _nonempty({}),
                                    "budget": {"type": "integer", "minimum": 1},
                                    "column": {"enum": ["smin", "smin_nontrivial"]}}},
}


class ConfigError(ValueError):
    """The experiment config is invalid."""


class Partial(Exception):
    """A budget was exceeded after some rows were produced."""

    def __init__(self, rows, message):
        super().__init__(message)
        self.rows = rows


def _fmt(x: Any, rational: bool) -> Any:
    if isinstance(x, Fraction):
        if x.denominator == 1:
            return str(x.numerator)
        return f"{x.numerator}/{x.denominator}" if rational else repr(float(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isinf(x):
            return "-inf" if x < 0 else "inf"
        return repr(x)
    if isinstance(x, (tuple, list)):
        return json.dumps(x, separators=(",", ":"))
    return x


def _sigmas(cfg):
    return [approx_from_descriptor(s) for s in cfg["sigmas"]]


def _deltas(cfg):
    return [to_fraction(x) for x in cfg["deltas"]]


def _query_parts(cfg):
    system = system_from_json(cfg["system"])
    obs = observable_from_json(system, cfg["observable"])
    F = [system.group.element_from_json(h) for h in cfg["F"]]
    return system, obs, F


def run_sofic_defects(cfg, ctx):
    header = ["d", "kind", "g", "h", "value"]
    rows = []
    for sigma in _sigmas(cfg):
        G = sigma.group
        elems = [G.element_from_json(g) for g in cfg["elements"]]
        for g in elems:
            if not G.is_identity(g):
                rows.append([sigma.d, "fix", G.element_to_json(g), "", fix_defect(sigma, g)])
        for g in elems:
            for h in elems:
                rows.append([sigma.d, "hom", G.element_to_json(g), G.element_to_json(h),
                             hom_defect(sigma, g, h)])
    return header, rows


def run_ap_count(cfg, ctx):
    system, obs, F = _query_parts(cfg)
    budget = int(cfg.get("budget", 10**8))
    header = ["d", "F", "delta", "count", "log_rate"]
    rows = []
    for sigma in _sigmas(cfg):
        q0 = APQuery.build(system, obs, F, 1, sigma)
        for delta in _deltas(cfg):
            q = q0.with_delta(delta)
            try:
                c = ap_count_exact(q, budget)
            except BudgetExceeded as exc:
                raise Partial(rows, str(exc)) from exc
            rows.append([sigma.d, [system.group.element_to_json(h) for h in q.F], delta, c,
                         log_count(c) / sigma.d])
    return header, rows


def run_ap_estimate(cfg, ctx):
    system, obs, F = _query_parts(cfg)
    n = int(cfg["n_samples"])
    header = ["d", "F", "delta", "estimate", "ci_low", "ci_high", "log_rate", "hits", "n_samples", "flag"]
    rows = []
    for sigma in _sigmas(cfg):
        q0 = APQuery.build(system, obs, F, 1, sigma)
        for delta in _deltas(cfg):
            r = ap_sample_estimate(q0.with_delta(delta), n, seed=ctx["seed"])
            rows.append([sigma.d, [system.group.element_to_json(h) for h in q0.F], delta, r.estimate,
                         r.lower, r.upper, r.log_estimate() / sigma.d, r.hits, r.n_samples, r.flag])
    return header, rows


def _map_from_json(obj):
    return {letter_from_json(k): letter_from_json(v) for k, v in obj}


def run_rel_entropy(cfg, ctx):
    system = system_from_json(cfg["system"])
    alpha = observable_from_json(system, cfg["alpha"])
    beta = observable_from_json(system, cfg["beta"])
    F = [system.group.element_from_json(h) for h in cfg["F"]]
    if "gamma" in cfg:
        gamma = observable_from_json(system, cfg["gamma"])
        rho_a = Refinement(gamma, alpha, _map_from_json(cfg["rho_alpha"]))
        rho_b = Refinement(gamma, beta, _map_from_json(cfg["rho_beta"]))
    else:
        gamma, rho_a, rho_b = join(alpha, beta)
    budget = int(cfg.get("budget", 10**8))
    joint, _, _ = join(alpha, beta, keep_unreachable=True)
    jl = law(system, joint, [system.group.identity()], exact=True)
    J = [[jl[((a, b),)] for b in beta.codomain] for a in alpha.codomain]
    oracle = cond_shannon(J)
    header = ["d", "delta", "sup", "rate", "oracle", "gap"]
    rows = []
    for sigma in _sigmas(cfg):
        q0 = APQuery.build(system, gamma, F, 1, sigma)
        for delta in _deltas(cfg):
            try:
                res = rel_ap_sup(q0.with_delta(delta), rho_a, rho_b, budget)
            except BudgetExceeded as exc:
                raise Partial(rows, str(exc)) from exc
            rate = res.log_value() / sigma.d
            rows.append([sigma.d, delta, "EMPTY" if res.empty else res.value, rate, oracle, rate - oracle])
    return header, rows


def run_stirling(cfg, ctx):
    deltas = _deltas(cfg) if "deltas" in cfg else list(DEFAULT_DELTAS)
    table = stirling_curve(cfg["J"], [int(n) for n in cfg["ns"]], deltas)
    header = ["n", "delta", "rate", "oracle", "gap", "psi_type"]
    rows = [[r.n, r.delta, r.rate, table.oracle, r.rate - table.oracle, list(r.psi_type or [])]
            for r in table.rows]
    return header, rows


def run_conjugate(cfg, ctx):
    eps = float(cfg["eps"])
    T = int(cfg["T"])
    E = [int(g) for g in cfg["E"]]
    query = None
    if "phi" in cfg and "psi" in cfg:
        phi, psi = np.asarray(cfg["phi"], dtype=np.int64), np.asarray(cfg["psi"], dtype=np.int64)
    else:
        if "system" not in cfg or "d" not in cfg:
            raise ConfigError("conjugate needs phi and psi, or system, d, F and delta to sample them")
        system = system_from_json(cfg["system"])
        obs = observable_from_json(system, cfg.get("observable", {"coordinate": 0}))
        F = [int(h) for h in cfg.get("F", [0, 1])]
        sigma = approx_from_descriptor({"group": "Z", "d": int(cfg["d"])})
        query = APQuery.build(system, obs, F, cfg.get("delta", 0.05), sigma)
        rng = np.random.default_rng(ctx["seed"])
        phi, psi = sample_ap_member(query, rng), sample_ap_member(query, rng)
    report = conjugate_microstates_Z(phi, psi, E, eps, T, query=query)
    ctx["extra"]["conjugate.json"] = report.to_json()
    header = ["d", "T", "n_tiles", "n_matched", "mismatch", "g", "defect", "achieved_bound"]
    rows = [[len(phi), T, report.n_tiles, report.n_matched, report.mismatch_fraction, g, v,
             report.patch.bound] for g, v in report.commutation_defects.items()]
    return header, rows


def _recipe(obj):
    if obj in (None, "product"):
        return "product"
    if isinstance(obj, dict) and "empirical" in obj:
        e = obj["empirical"]
        return ("empirical", int(e["n"]), int(e.get("seed", 0)))
    if isinstance(obj, dict) and "point_constant" in obj:
        a = int(obj["point_constant"])
        return lambda d: AtomicMeasure.point(np.full(d, a, dtype=np.int64))
    raise ConfigError(f"unknown recipe {obj!r}")


def run_lde_check(cfg, ctx):
    system = system_from_json(cfg["system"])
    rep = lde_report(system, _sigmas(cfg), _recipe(cfg.get("recipe")))
    ctx["manifest"]["flags"] = rep.flags
    ctx["manifest"]["note"] = rep.note
    header = ["d", "functional_1", "functional_2", "functional_3"]
    rows = [[r.d, r.f1, r.f2, r.f3] for r in rep.rows]
    return header, rows


def run_ring_spectra(cfg, ctx):
    f = ring_from_json(cfg["element"])
    column = cfg.get("column", "smin_nontrivial")
    budget = int(cfg.get("budget", 2048))
    ctx["manifest"]["l1_condition"] = l1_condition(f)
    header = ["quotient", "dim", "smin", "smin_nontrivial"]
    rows, spectra = [], []
    for q in cfg["quotients"]:
        try:
            r = spectral_row(f, q if isinstance(q, int) else tuple(q), budget)
        except BudgetExceeded as exc:
            raise Partial(rows, str(exc)) from exc
        spectra.append(r)
        rows.append([list(r.moduli), r.dim, r.smin, r.smin_nontrivial])
    ctx["manifest"]["trend"] = spectral_trend(spectra, column)
    return header, rows


RUNNERS: dict[str, Callable] = {
    "sofic-defects": run_sofic_defects,
    "ap-count": run_ap_count,
    "ap-estimate": run_ap_estimate,
    "rel-entropy": run_rel_entropy,
    "stirling": run_stirling,
    "conjugate": run_conjugate,
    "lde-check": run_lde_check,
    "ring-spectra": run_ring_spectra,
}


def canonical_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def _write_csv(path: Path, header, rows, rational: bool):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x, rational) for x in row])


def run(command: str, cfg: dict, out: Path, rational: bool = False, threads: int = 1,
        seed: int | None = None) -> int:
    """Validate, execute and write artifacts; returns the exit code."""
    if seed is not None:
        cfg = dict(cfg, seed=seed)
    try:
        jsonschema.validate(cfg, SCHEMAS[command])
    except jsonschema.ValidationError as exc:
        log.error("invalid config: %s", exc.message)
        return 2
    out.mkdir(parents=True, exist_ok=True)
    ctx = {"seed": int(cfg.get("seed", 0)), "manifest": {}, "extra": {}}
    status, code, rows, header = "ok", 0, [], None
    try:
        header, rows = RUNNERS[command](cfg, ctx)
    except Partial as exc:
        log.error("budget exceeded: %s", exc)
        status, code, rows = "budget_exceeded", 3, exc.rows
    except BudgetExceeded as exc:
        log.error("budget exceeded: %s", exc)
        status, code = "budget_exceeded", 3
    except (ConfigError, ValueError, KeyError, TypeError) as exc:
        log.error("invalid config: %s", exc)
        return 2
    if header is None:
        header = ["partial"]
    _write_csv(out / f"{command}.csv", header, rows, rational)
    for name, obj in ctx["extra"].items():
        (out / name).write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")
    manifest = {
        "command": command,
        "config_sha256": canonical_hash(cfg),
        "config": cfg,
        "seed": ctx["seed"],
        "threads": threads,
        "rational": rational,
        "status": status,
        "partial": code == 3,
        "rows": len(rows),
        "versions": {"soficlab": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__},
        **ctx["manifest"],
    }
    (out / f"{command}.manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return code


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="soficlab", description="Sofic microstate counting experiments")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, type=Path, help="JSON experiment config")
        p.add_argument("--out", required=True, type=Path, help="output directory")
        p.add_argument("--threads", type=int, default=1,
                       help="worker threads (results never depend on it)")
        p.add_argument("--rational", action="store_true", help="write rational values as p/q")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
    return ap


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        cfg = json.loads(args.config.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        log.error("cannot read config: %s", exc)
        return 2
    if not isinstance(cfg, dict):
        log.error("config must be a JSON object")
        return 2
    return run(args.command, cfg, args.out, rational=args.rational, threads=args.threads, seed=args.seed)


if __name__ == "__main__":
    sys.exit(main())
