"""Command-line front end: configuration, run orchestration, artifact emission.

Commands
--------
price-european / price-american   price a put, write (S, price) rows
greeks                            Delta/Gamma of the European solution
convergence-study                 refinement errors and least-squares order
dispersion-report                 modified-wavenumber table
stability-sweep                   error table over parabolic mesh ratios
reproduce-tables                  compare against the published reference values

Every run writes a ``manifest.json`` capturing the fully resolved
parameters, timings and solver statistics; re-running a manifest's command
reproduces the CSV artifacts byte for byte.  Prices are printed with six
decimals in CSV; JSON artifacts keep full binary precision.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    compute_greeks,
    convergence_order,
    modified_wavenumber,
    relative_l2_error,
    stability_sweep,
)
from .market import GridSpec, MarketParams
from .stepper import SolverConfig, solve_european
from .american import solve_american

log = logging.getLogger("mertoncfd")

COMMANDS = (
    "price-european",
    "price-american",
    "greeks",
    "convergence-study",
    "dispersion-report",
    "stability-sweep",
    "reproduce-tables",
)

DEFAULT_MARKET = {
    "r": 0.05,
    "sigma": 0.15,
    "lambda": 0.10,
    "mu_j": -0.90,
    "sigma_j": 0.45,
    "K": 100.0,
    "S0": 100.0,
    "T": 0.25,
    "vol_mode": "constant",
}
DEFAULT_GRID = {"L": 2.0, "N": 1536, "M": None}
DEFAULT_SOLVER = {
    "mesh_ratio": 0.4,
    "smoothing": True,
    "epsilon_inner": 1e-12,
    "max_inner_iterations": 100,
    "store_every": 0,
}

# Published reference values for the standard Merton put test set
# (lambda=0.1, T=0.25, r=0.05, K=100, sigma=0.15, mu_j=-0.9, sigma_j=0.45,
# S0=100), quoted at S in {90, 100, 110} and tau = T.
REFERENCE_TABLES = {
    "european-constant": {90.0: 9.285416, 100.0: 3.149018, 110.0: 1.401182},
    "european-constant-delta": {90.0: -0.846716, 100.0: -0.355661, 110.0: -0.058103},
    "european-constant-gamma": {90.0: 0.034862, 100.0: 0.048828, 110.0: 0.012131},
    "european-local": {90.0: 9.317322, 100.0: 3.183682, 110.0: 1.407743},
    "american-constant": {90.0: 10.003862, 100.0: 3.241208, 110.0: 1.419791},
    "american-local": {90.0: 10.008880, 100.0: 3.275955, 110.0: 1.426403},
}
PRICE_TOLERANCE = 5e-3        # relative, +/- 0.5%
GREEK_TOLERANCE = 1e-3        # absolute


class ConfigError(ValueError):
    """Configuration file or flag problem, with field diagnostics."""


# ---------------------------------------------------------------------------
# Configuration loading and resolution
# ---------------------------------------------------------------------------

def load_config(path: str) -> dict:
    """Read the JSON config file; errors carry line/field diagnostics."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"config {path} is not valid JSON: {exc.msg} at line {exc.lineno}, "
            f"column {exc.colno}"
        ) from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must be a JSON object with sections")
    for section in data:
        if section not in ("market", "grid", "solver"):
            raise ConfigError(f"config {path}: unknown section {section!r}")
        if not isinstance(data[section], dict):
            raise ConfigError(f"config {path}: section {section!r} must be an object")
    return data


def _merge(defaults: dict, overrides: dict, section: str) -> dict:
    merged = dict(defaults)
    for key, value in overrides.items():
        if key not in defaults:
            raise ConfigError(f"unknown field {key!r} in section {section!r}")
        merged[key] = value
    return merged


def resolve_settings(args) -> tuple:
    """Defaults < config file < flags, returning (market, grid, solver) dicts."""
    file_cfg = load_config(args.config) if args.config else {}
    market = _merge(DEFAULT_MARKET, file_cfg.get("market", {}), "market")
    grid = _merge(DEFAULT_GRID, file_cfg.get("grid", {}), "grid")
    solver = _merge(DEFAULT_SOLVER, file_cfg.get("solver", {}), "solver")

    if getattr(args, "N", None) is not None:
        grid["N"] = args.N
    if getattr(args, "M", None) is not None:
        grid["M"] = args.M
    if getattr(args, "L", None) is not None:
        grid["L"] = args.L
    if getattr(args, "ratio", None) is not None:
        solver["mesh_ratio"] = args.ratio
    if getattr(args, "smooth", None) is not None:
        solver["smoothing"] = args.smooth == "on"
    if getattr(args, "vol", None) is not None:
        market["vol_mode"] = args.vol
    return market, grid, solver


def build_objects(market: dict, grid: dict, solver: dict):
    """Instantiate the validated parameter objects from plain dicts."""
    m = dict(market)
    lam = m.pop("lambda")
    try:
        params = MarketParams(lam=lam, **m)
        config = SolverConfig(**solver)
        if grid["M"] is not None:
            gs = GridSpec(L=grid["L"], N=int(grid["N"]), M=int(grid["M"]), T=params.T)
        else:
            gs = GridSpec.from_mesh_ratio(
                L=grid["L"], N=int(grid["N"]), T=params.T, ratio=config.mesh_ratio
            )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid parameter combination: {exc}") from exc
    return params, gs, config


# ---------------------------------------------------------------------------
# Artifact helpers
# ---------------------------------------------------------------------------

def _write_csv(path: Path, header: list, rows: list) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _manifest(command: str, params, grid, config, outputs, timings, stats) -> dict:
    return {
        "tool": "mertoncfd",
        "version": __version__,
        "command": command,
        "market": dataclasses.asdict(params),
        "grid": {
            "L": grid.L,
            "N": grid.N,
            "M": grid.M,
            "dx": grid.dx,
            "dtau": grid.dtau,
            "mesh_ratio": grid.mesh_ratio,
        },
        "solver": dataclasses.asdict(config),
        "outputs": outputs,
        "timings_seconds": timings,
        "solver_stats": stats,
    }


def _solver_stats(surface) -> dict:
    iters = surface.inner_iterations
    if iters.size == 0:
        return {}
    hist = np.bincount(iters)
    return {
        "max_inner_iterations": int(iters.max()),
        "mean_inner_iterations": float(iters.mean()),
        "iteration_histogram": {str(k): int(v) for k, v in enumerate(hist) if v},
    }


def _parse_float_list(text: str) -> list:
    return [float(tok) for tok in text.split(",") if tok.strip()]


def _parse_int_list(text: str) -> list:
    return [int(tok) for tok in text.split(",") if tok.strip()]


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def _price_rows(surface, params, grid, spots):
    """(S, price, source) rows over grid nodes and queried spots, sorted by S."""
    S_nodes = params.S0 * np.exp(grid.x)
    rows = [(float(s), float(v), "grid") for s, v in zip(S_nodes, surface.values)]
    rows += [(float(s), float(surface.price(s)), "query") for s in spots]
    rows.sort(key=lambda row: (row[0], row[2]))
    return rows


def cmd_price(args, style: str) -> int:
    market, grid_cfg, solver_cfg = resolve_settings(args)
    params, grid, config = build_objects(market, grid_cfg, solver_cfg)
    spots = _parse_float_list(args.spots)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    t0 = time.perf_counter()
    surface = solve_european(params, grid, config) if style == "european" else \
        solve_american(params, grid, config)
    t_march = time.perf_counter() - t0

    rows = [(f"{s:.6f}", f"{v:.6f}", src) for s, v, src in _price_rows(surface, params, grid, spots)]
    _write_csv(out / "prices.csv", ["S", "price", "source"], rows)

    result = {
        "style": style,
        "spot_prices": {str(s): float(surface.price(s)) for s in spots},
        "exercise_boundary": surface.exercise_boundary(),
    }
    _write_json(out / "result.json", result)
    t_total = time.perf_counter() - t0
    manifest = _manifest(
        f"price-{style}", params, grid, config,
        ["prices.csv", "result.json"],
        {"march": t_march, "total": t_total},
        _solver_stats(surface),
    )
    _write_json(out / "manifest.json", manifest)
    for s in spots:
        print(f"{style} put  S={s:g}  price={surface.price(s):.6f}")
    return 0


def cmd_greeks(args) -> int:
    market, grid_cfg, solver_cfg = resolve_settings(args)
    params, grid, config = build_objects(market, grid_cfg, solver_cfg)
    spots = _parse_float_list(args.spots)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    t0 = time.perf_counter()
    surface = solve_european(params, grid, config)
    greeks = compute_greeks(surface.values, grid, params)
    t_total = time.perf_counter() - t0

    S_nodes = params.S0 * np.exp(grid.x)
    rows = [
        (f"{s:.6f}", f"{p:.6f}", f"{d:.6f}", f"{g:.6f}", "grid")
        for s, p, d, g in zip(S_nodes, surface.values, greeks.delta, greeks.gamma)
    ]
    rows += [
        (f"{s:.6f}", f"{surface.price(s):.6f}", f"{greeks.delta_at(s):.6f}",
         f"{greeks.gamma_at(s):.6f}", "query")
        for s in spots
    ]
    rows.sort(key=lambda row: (float(row[0]), row[4]))
    _write_csv(out / "greeks.csv", ["S", "price", "delta", "gamma", "source"], rows)

    result = {
        str(s): {
            "price": float(surface.price(s)),
            "delta": float(greeks.delta_at(s)),
            "gamma": float(greeks.gamma_at(s)),
        }
        for s in spots
    }
    _write_json(out / "result.json", result)
    manifest = _manifest(
        "greeks", params, grid, config,
        ["greeks.csv", "result.json"],
        {"total": t_total},
        _solver_stats(surface),
    )
    _write_json(out / "manifest.json", manifest)
    for s in spots:
        print(f"S={s:g}  delta={greeks.delta_at(s):+.6f}  gamma={greeks.gamma_at(s):.6f}")
    return 0


def cmd_dispersion(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    omegas = np.linspace(0.0, np.pi, args.points)
    header = [
        "omega",
        "first_central2", "first_central4", "first_compact4",
        "second_central2", "second_central4", "second_pade4", "second_compact4",
    ]
    rows = []
    for w in omegas:
        f2, s2 = modified_wavenumber("central2", float(w))
        f4, s4 = modified_wavenumber("central4", float(w))
        fc, sc = modified_wavenumber("compact4", float(w))
        _, sp = modified_wavenumber("pade4", float(w))
        rows.append([f"{v:.10f}" for v in (w, f2, f4, fc, s2, s4, sp, sc)])
    _write_csv(out / "dispersion.csv", header, rows)
    print(f"dispersion table with {args.points} wavenumbers -> {out / 'dispersion.csv'}")
    return 0


def cmd_convergence(args) -> int:
    market, grid_cfg, solver_cfg = resolve_settings(args)
    params, _, config = build_objects(market, grid_cfg, solver_cfg)
    n_list = _parse_int_list(args.n_list)
    L = grid_cfg["L"]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    solver = solve_american if args.style == "american" else solve_european

    t0 = time.perf_counter()
    ref_grid = GridSpec.from_mesh_ratio(L=L, N=args.ref_n, T=params.T, ratio=config.mesh_ratio)
    reference = solver(params, ref_grid, config)
    errors = []
    for n in n_list:
        grid = GridSpec.from_mesh_ratio(L=L, N=n, T=params.T, ratio=config.mesh_ratio)
        surface = solver(params, grid, config)
        errors.append(relative_l2_error(surface.values, reference.values))
    order, r2 = convergence_order(n_list, errors)
    t_total = time.perf_counter() - t0

    _write_csv(
        out / "convergence.csv",
        ["N", "relative_l2_error"],
        [(str(n), f"{e:.10e}") for n, e in zip(n_list, errors)],
    )
    result = {
        "style": args.style,
        "smoothing": config.smoothing,
        "reference_N": args.ref_n,
        "N": n_list,
        "errors": errors,
        "order": order,
        "r_squared": r2,
    }
    _write_json(out / "result.json", result)
    manifest = _manifest(
        "convergence-study", params, ref_grid, config,
        ["convergence.csv", "result.json"],
        {"total": t_total},
        {},
    )
    _write_json(out / "manifest.json", manifest)
    print(f"observed order {order:.3f} (R^2 {r2:.4f}) over N={n_list}")
    return 0


def cmd_stability(args) -> int:
    market, grid_cfg, solver_cfg = resolve_settings(args)
    params, _, config = build_objects(market, grid_cfg, solver_cfg)
    n_list = _parse_int_list(args.n_list)
    ratios = _parse_float_list(args.ratios)
    L = grid_cfg["L"]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    t0 = time.perf_counter()
    ref_grid = GridSpec.from_mesh_ratio(L=L, N=args.ref_n, T=params.T, ratio=config.mesh_ratio)
    reference = solve_european(params, ref_grid, config)
    sweep = stability_sweep(params, n_list, ratios, reference.values, L, config)
    t_total = time.perf_counter() - t0

    rows = []
    for i, n in enumerate(sweep.n_values):
        for j, ratio in enumerate(sweep.ratios):
            rows.append(
                (str(int(n)), f"{ratio:.3f}", f"{sweep.realized_ratios[i, j]:.6f}",
                 f"{sweep.errors[i, j]:.10e}", str(bool(sweep.flags[i, j])))
            )
    _write_csv(
        out / "sweep.csv",
        ["N", "target_ratio", "realized_ratio", "relative_l2_error", "flagged"],
        rows,
    )
    result = {
        "row_spread": sweep.row_spread.tolist(),
        "marginal_at_1.05": sweep.marginal(1.05),
        "max_dtau": float(max(
            GridSpec.from_mesh_ratio(L=L, N=int(n), T=params.T, ratio=float(r)).dtau
            for n in n_list for r in ratios
        )),
        "von_neumann_dtau_bound": (0.5 / params.lam) if params.lam > 0 else None,
    }
    _write_json(out / "result.json", result)
    manifest = _manifest(
        "stability-sweep", params, ref_grid, config,
        ["sweep.csv", "result.json"],
        {"total": t_total},
        {},
    )
    _write_json(out / "manifest.json", manifest)
    print(f"mesh-ratio spread per row: {np.round(sweep.row_spread, 4).tolist()}")
    return 0


def cmd_reproduce(args) -> int:
    market, grid_cfg, solver_cfg = resolve_settings(args)
    selected = [t for t in args.tables.split(",") if t.strip()]
    unknown = [t for t in selected if t not in REFERENCE_TABLES or t.endswith(("delta", "gamma"))]
    if unknown:
        raise ConfigError(
            f"unknown tables {unknown}; choose from "
            "european-constant, european-local, american-constant, american-local"
        )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    rows = []
    failures = 0
    timings = {}
    params = grid = config = None
    for table in selected:
        style, mode = table.split("-")
        market_t = dict(market, vol_mode=mode)
        params, grid, config = build_objects(market_t, grid_cfg, solver_cfg)
        t0 = time.perf_counter()
        surface = solve_european(params, grid, config) if style == "european" else \
            solve_american(params, grid, config)
        timings[table] = time.perf_counter() - t0

        for S, target in sorted(REFERENCE_TABLES[table].items()):
            got = float(surface.price(S))
            dev = abs(got - target) / abs(target)
            ok = dev <= PRICE_TOLERANCE
            failures += 0 if ok else 1
            rows.append((table, "price", S, got, target, dev, ok))

        if table == "european-constant":
            greeks = compute_greeks(surface.values, grid, params)
            for kind, fn in (("delta", greeks.delta_at), ("gamma", greeks.gamma_at)):
                for S, target in sorted(REFERENCE_TABLES[f"{table}-{kind}"].items()):
                    got = float(fn(S))
                    dev = abs(got - target)
                    ok = dev <= GREEK_TOLERANCE
                    failures += 0 if ok else 1
                    rows.append((table, kind, S, got, target, dev, ok))

    _write_csv(
        out / "tables.csv",
        ["table", "quantity", "S", "computed", "target", "deviation", "pass"],
        [
            (t, q, f"{s:.2f}", f"{got:.6f}", f"{ref:.6f}", f"{dev:.3e}", str(ok))
            for t, q, s, got, ref, dev, ok in rows
        ],
    )
    _write_json(out / "tables.json", {
        "cells": [
            {"table": t, "quantity": q, "S": s, "computed": got,
             "target": ref, "deviation": dev, "pass": ok}
            for t, q, s, got, ref, dev, ok in rows
        ],
        "failures": failures,
    })
    if params is not None:
        manifest = _manifest(
            "reproduce-tables", params, grid, config,
            ["tables.csv", "tables.json"], timings, {},
        )
        _write_json(out / "manifest.json", manifest)

    for t, q, s, got, ref, dev, ok in rows:
        print(f"{'PASS' if ok else 'FAIL'}  {t:18s} {q:6s} S={s:6.1f}  "
              f"computed={got: .6f}  target={ref: .6f}  dev={dev:.2e}")
    if not rows:
        print("no tables selected; nothing to reproduce")
    return 1 if failures else 0


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON configuration file")
    p.add_argument("--N", type=int, help="spatial intervals (even)")
    p.add_argument("--M", type=int, help="time steps (default: from mesh ratio)")
    p.add_argument("--L", type=float, help="log-price half width")
    p.add_argument("--ratio", type=float, help="target parabolic mesh ratio dtau/dx^2")
    p.add_argument("--smooth", choices=("on", "off"), help="payoff smoothing")
    p.add_argument("--vol", choices=("constant", "local"), help="volatility mode")
    p.add_argument("--out", default="out", help="artifact directory")
    p.add_argument("--verbose", action="store_true", help="debug logging")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mertoncfd",
        description="Compact finite-difference pricer for Merton jump-diffusion puts",
    )
    parser.add_argument("--version", action="version", version=f"mertoncfd {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    for name in ("price-european", "price-american"):
        p = sub.add_parser(name, help=f"{name.split('-')[1]} put price")
        _add_common(p)
        p.add_argument("--spots", default="90,100,110", help="comma list of spot queries")

    p = sub.add_parser("greeks", help="Delta/Gamma of the European put")
    _add_common(p)
    p.add_argument("--spots", default="90,100,110")

    p = sub.add_parser("convergence-study", help="grid refinement order estimate")
    _add_common(p)
    p.add_argument("--n-list", default="48,96,192,384", help="comma list of N values")
    p.add_argument("--ref-n", type=int, default=3072, help="reference grid N")
    p.add_argument("--style", choices=("european", "american"), default="european")

    p = sub.add_parser("dispersion-report", help="modified wavenumber table")
    _add_common(p)
    p.add_argument("--points", type=int, default=64, help="wavenumber samples in [0, pi]")

    p = sub.add_parser("stability-sweep", help="mesh-ratio error table")
    _add_common(p)
    p.add_argument("--n-list", default="96", help="comma list of N values")
    p.add_argument("--ratios", default="0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0")
    p.add_argument("--ref-n", type=int, default=768, help="reference grid N")

    p = sub.add_parser("reproduce-tables", help="compare against reference values")
    _add_common(p)
    p.add_argument(
        "--tables",
        default="european-constant,european-local,american-constant,american-local",
        help="comma list of tables ('' for none)",
    )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command == "price-european":
            return cmd_price(args, "european")
        if args.command == "price-american":
            return cmd_price(args, "american")
        if args.command == "greeks":
            return cmd_greeks(args)
        if args.command == "convergence-study":
            return cmd_convergence(args)
        if args.command == "dispersion-report":
            return cmd_dispersion(args)
        if args.command == "stability-sweep":
            return cmd_stability(args)
        if args.command == "reproduce-tables":
            return cmd_reproduce(args)
        raise AssertionError(f"unhandled command {args.command}")
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # solver failures -> nonzero exit, not a traceback
        if args.verbose:
            raise
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
