"""Command-line front end: solves, sweeps, audits, Monte Carlo, CSV/JSON output.

Configuration comes from an optional JSON file plus flag overrides (flags
win).  All outputs are deterministic for a fixed config and seed and carry
a comment header echoing the full configuration and the tool version.

Exit codes: 0 success, 1 configuration error, 2 numerical failure,
3 audit failure (verify).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .density import kac_normalizer, profile_csv, rho_profile
from .errors import DomainError, PreconditionError
from .orbit import as_alpha
from .response import parse_observable, response_density, response_kac, sweep
from .solver import solve_pair
from .space import to_csv
from .verify import (audit_assumptions, checks_to_json, distortion_audit,
                     mc_full_map, mc_induced_map)

log = logging.getLogger("pmresp")


@dataclass
class RunConfig:
    alpha: float | None = None
    alpha_grid: str | None = None     # "A:B:STEP"
    obs: str = "x"
    nodes: int = 128
    tol: float = 1e-11
    series_tol: float = 1e-12
    trunc_tol: float = 1e-12
    seed: int = 20160315
    jobs: int | None = None
    out: str = "."
    mc_steps: int = 10**6
    mc_burn_in: int = 10**4
    mc_returns: int = 10**5

    def validate(self):
        if self.alpha is None and self.alpha_grid is None:
            raise PreconditionError("either --alpha or --alpha-grid is required")
        if self.alpha is not None:
            as_alpha(self.alpha)
        for a in self.grid_values() or []:
            as_alpha(a)
        if not 32 <= self.nodes <= 512:
            raise PreconditionError("nodes must lie in [32, 512]")
        if min(self.tol, self.series_tol, self.trunc_tol) <= 0.0:
            raise PreconditionError("tolerances must be positive")

    def grid_values(self):
        if self.alpha_grid is None:
            return None
        try:
            a, b, step = (float(v) for v in self.alpha_grid.split(":"))
        except ValueError as exc:
            raise PreconditionError(f"bad alpha grid spec {self.alpha_grid!r}") from exc
        n = int(round((b - a) / step)) + 1
        vals = [a + k * step for k in range(n)]
        return [v for v in vals if v <= b + 1e-12]

    def header_lines(self, command: str) -> list[str]:
        cfg = {k: v for k, v in dataclasses.asdict(self).items() if v is not None}
        return [f"pmresp {__version__} {command}", f"config {json.dumps(cfg, sort_keys=True)}"]


def _load_config(args) -> RunConfig:
    cfg = RunConfig()
    if args.config:
        with open(args.config) as fh:
            data = json.load(fh)
        unknown = set(data) - {f.name for f in dataclasses.fields(RunConfig)}
        if unknown:
            raise PreconditionError(f"unknown config keys: {sorted(unknown)}")
        cfg = dataclasses.replace(cfg, **data)
    overrides = {
        "alpha": args.alpha, "alpha_grid": args.alpha_grid, "obs": args.obs,
        "nodes": args.nodes, "tol": args.tol, "series_tol": args.series_tol,
        "seed": args.seed, "jobs": args.jobs, "out": args.out,
        "mc_steps": getattr(args, "mc_steps", None),
        "mc_returns": getattr(args, "mc_returns", None),
    }
    cfg = dataclasses.replace(cfg, **{k: v for k, v in overrides.items() if v is not None})
    cfg.validate()
    return cfg


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    log.info("wrote %s", path)


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=str) + "\n"


def cmd_density(cfg: RunConfig) -> int:
    a = cfg.alpha if cfg.alpha is not None else (cfg.grid_values() or [0.5])[0]
    pair = solve_pair(a, tol=cfg.tol, series_tol=cfg.series_tol, n=cfg.nodes)
    norm = kac_normalizer(a, pair)
    out = Path(cfg.out)
    hdr = cfg.header_lines("density") + [f"alpha {a:.17g}"]
    induced = ["# " + line for line in hdr]
    induced.append("node,h,dh")
    for x, hv, dv in zip(pair.h.nodes, pair.h.values, pair.dh.values):
        induced.append(f"{x:.17g},{hv:.17g},{dv:.17g}")
    _write(out / "induced_density.csv", "\n".join(induced) + "\n")
    zs = np.geomspace(1e-8, 1.0, 600)
    rho, da_rho = rho_profile(a, pair, norm, zs)
    _write(out / "unit_density.csv", profile_csv(zs, rho, da_rho, hdr))
    total = float(np.trapezoid(rho, zs) + norm.table.model.integral_g(zs[0]) / norm.value)
    summary = {
        "alpha": a, "residual": pair.residual, "iterations": pair.iterations,
        "series_terms": pair.series_terms, "kac_value": norm.value,
        "kac_da_value": norm.da_value, "rho_integral": total,
        "version": __version__,
    }
    _write(out / "density_summary.json", _json_text(summary))
    return 0


def cmd_response(cfg: RunConfig) -> int:
    a = cfg.alpha if cfg.alpha is not None else (cfg.grid_values() or [0.5])[0]
    phi = parse_observable(cfg.obs)
    pair = solve_pair(a, tol=cfg.tol, series_tol=cfg.series_tol, n=cfg.nodes)
    norm = kac_normalizer(a, pair)
    rd = response_density(a, phi, pair, norm)
    rows = [dataclasses.asdict(rd)]
    if phi.kind == "C1":
        rk = response_kac(a, phi, pair, n=cfg.nodes)
        rows.append(dataclasses.asdict(rk))
    out = Path(cfg.out)
    lines = ["# " + line for line in cfg.header_lines("response")]
    lines.append("alpha,expectation,derivative,residual,tail")
    best = rows[-1]
    lines.append(
        f"{a:.17g},{best['expectation']:.17g},{best['derivative']:.17g},"
        f"{pair.residual:.17g},{best['diagnostics'].get('series_tail', 0.0):.17g}"
    )
    _write(out / "response.csv", "\n".join(lines) + "\n")
    _write(out / "response_summary.json", _json_text(rows))
    return 0


def cmd_sweep(cfg: RunConfig) -> int:
    grid = cfg.grid_values()
    if not grid:
        raise PreconditionError("sweep requires --alpha-grid")
    phi = parse_observable(cfg.obs)
    rows = sweep(grid, phi, n=cfg.nodes, tol=cfg.tol,
                 series_tol=cfg.series_tol, jobs=cfg.jobs)
    out = Path(cfg.out)
    lines = ["# " + line for line in cfg.header_lines("sweep")]
    lines.append("alpha,expectation,derivative,residual,tail")
    failures = 0
    for row in rows:
        if "error" in row:
            failures += 1
            lines.append(f"{row['alpha']:.17g},nan,nan,nan,nan")
        else:
            lines.append(
                f"{row['alpha']:.17g},{row['expectation']:.17g},"
                f"{row['derivative']:.17g},{row['residual']:.17g},{row['tail']:.17g}"
            )
    _write(out / "sweep.csv", "\n".join(lines) + "\n")
    good = [r for r in rows if "error" not in r]
    secant_gap = float("nan")
    if len(good) >= 3:
        al = np.array([r["alpha"] for r in good])
        ex = np.array([r["expectation"] for r in good])
        dv = np.array([r["derivative"] for r in good])
        secant = (ex[2:] - ex[:-2]) / (al[2:] - al[:-2])
        secant_gap = float(np.max(np.abs(secant - dv[1:-1])))
    _write(out / "sweep_summary.json", _json_text(
        {"rows": rows, "failures": failures, "max_secant_gap": secant_gap,
         "version": __version__}))
    return 0 if failures == 0 else 2


def cmd_verify(cfg: RunConfig) -> int:
    alphas = cfg.grid_values() or [0.2, 0.5, 0.8]
    if cfg.alpha is not None:
        alphas = [cfg.alpha]
    phi = parse_observable(cfg.obs)
    const, checks = audit_assumptions(alpha_range=alphas, phi=phi)
    for a in alphas:
        checks.extend(distortion_audit(a, const, n=cfg.nodes))
    out = Path(cfg.out)
    _write(out / "audit_constants.json", checks_to_json(const))
    _write(out / "audit_report.json", checks_to_json(checks))
    n_fail = sum(1 for c in checks if not c["pass"])
    for c in checks:
        log.info("%-28s %s margin=%.3g", c["check"], "PASS" if c["pass"] else "FAIL", c["margin"])
    if n_fail:
        log.error("%d audit checks failed", n_fail)
        return 3
    return 0


def cmd_mc(cfg: RunConfig) -> int:
    a = cfg.alpha if cfg.alpha is not None else 0.25
    phi = parse_observable(cfg.obs)
    full = mc_full_map(a, phi, n=cfg.mc_steps, burn_in=cfg.mc_burn_in, seed=cfg.seed)
    induced = mc_induced_map(a, n_returns=cfg.mc_returns, seed=cfg.seed + 1)
    out = Path(cfg.out)
    report = {
        "alpha": a, "observable": cfg.obs, "version": __version__,
        "full_map": {
            "estimate": full.estimate, "batch_std_error": full.batch_std_error,
            "n_steps": full.n_steps, "burn_in": full.burn_in, "seed": full.seed,
            "se_reliable": full.se_reliable,
        },
        "induced_map": {
            "mean_return_time": induced.estimate,
            "batch_std_error": induced.batch_std_error,
            "n_returns": induced.extra["n_returns"], "seed": induced.seed,
            "histogram": induced.bins.tolist(),
            "bin_edges": induced.bin_edges.tolist(),
        },
    }
    _write(out / "mc_report.json", _json_text(report))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="pmresp",
        description="Invariant densities and linear response for intermittent interval maps",
    )
    ap.add_argument("--version", action="version", version=f"pmresp {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, fn in (("density", cmd_density), ("response", cmd_response),
                     ("sweep", cmd_sweep), ("verify", cmd_verify), ("mc", cmd_mc)):
        p = sub.add_parser(name)
        p.set_defaults(func=fn)
        p.add_argument("--config", default=None, help="JSON config file")
        p.add_argument("--alpha", type=float, default=None)
        p.add_argument("--alpha-grid", default=None, help="A:B:STEP")
        p.add_argument("--obs", default=None, help="one|x|x2|cos2pi[:k]|poly:c0,..|xpow:-s[:q]")
        p.add_argument("--nodes", type=int, default=None)
        p.add_argument("--tol", type=float, default=None)
        p.add_argument("--series-tol", type=float, default=None, dest="series_tol")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--jobs", type=int, default=None)
        p.add_argument("--out", default=None)
        if name == "mc":
            p.add_argument("--mc-steps", type=int, default=None, dest="mc_steps")
            p.add_argument("--mc-returns", type=int, default=None, dest="mc_returns")
    return ap


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("PMRESP_LOG", "INFO").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    args = build_parser().parse_args(argv)
    try:
        cfg = _load_config(args)
    except (PreconditionError, DomainError, OSError, json.JSONDecodeError) as exc:
        log.error("configuration error: %s", exc)
        return 1
    try:
        return args.func(cfg)
    except (PreconditionError, DomainError) as exc:
        log.error("invalid request: %s", exc)
        return 1
    except Exception as exc:  # numerical failure
        log.error("numerical failure: %s: %s", type(exc).__name__, exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
