"""Command-line front end.

Subcommands:

* ``generate``  write a synthetic benchmark dataset to CSV;
* ``analyze``   run the design-marginalized (or baseline) analysis on one
                CSV dataset and write a JSON report;
* ``simulate``  run the replicated grid study and write the JSON report
                plus CSV tables.

Every flag can be defaulted through an environment variable with the
``BPSA_`` prefix (``--ps-covariates`` -> ``BPSA_PS_COVARIATES``); explicit
flags win.  All randomness flows from ``--seed``.  Exit codes: 0 success,
1 runtime/statistical failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from pathlib import Path

from . import __version__
from ._backend import backend_name
from .data import DGPConfig, generate, load_csv, write_csv
from .design import ImplementationSpec
from .errors import BpsaError
from .montecarlo import (
    DESK_SCALE,
    IMPLEMENTATIONS,
    PS_MODELS,
    Cell,
    RunConfig,
    full_grid,
    run_bpsa,
    run_psa,
    run_simulation,
)
from .ps_model import ACCEPTANCE_RANGE, BURN_IN, PRIOR_SD, THIN, PSModelSpec
from .report import dump_json, write_figure_csv, write_json, write_table_csv

ENV_PREFIX = "BPSA_"


def _env(flag: str, cast, fallback):
    raw = os.environ.get(ENV_PREFIX + flag.lstrip("-").replace("-", "_").upper())
    if raw is None:
        return fallback
    return cast(raw)


def _add_run_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--K", type=int, default=_env("K", int, 1000), help="posterior draws")
    sub.add_argument("--S", type=int, default=_env("S", int, 200), help="effect draws per design")
    sub.add_argument("--R", type=int, default=_env("R", int, 1), help="repeats per draw (probabilistic kinds)")
    sub.add_argument("--Q", type=int, default=_env("Q", int, 5), help="strata count")
    sub.add_argument("--ratio", type=int, default=_env("ratio", int, 1), help="controls per treated unit")
    sub.add_argument(
        "--caliper",
        type=float,
        default=_env("caliper", float, 0.5),
        help="caliper width in sd-of-logit-propensity units",
    )
    sub.add_argument("--level", type=float, default=_env("level", float, 0.95), help="interval level")
    sub.add_argument("--seed", type=int, default=_env("seed", int, 0), help="root seed")
    sub.add_argument("--workers", type=int, default=_env("workers", int, 1), help="parallel workers")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bpsa", description=__doc__)
    parser.add_argument("--version", action="version", version=f"bpsa {__version__}")
    subs = parser.add_subparsers(dest="command", required=True)

    gen = subs.add_parser("generate", help="write a synthetic benchmark dataset")
    gen.add_argument("--n", type=int, default=_env("n", int, DESK_SCALE["n"]))
    gen.add_argument("--delta", type=float, default=_env("delta", float, 1.5), help="true effect")
    gen.add_argument("--confounders", type=int, default=5)
    gen.add_argument("--instruments", type=int, default=5)
    gen.add_argument("--prognostic", type=int, default=5)
    gen.add_argument("--noise", type=int, default=5)
    gen.add_argument("--seed", type=int, default=_env("seed", int, 0))
    gen.add_argument("--out", required=True, help="output CSV path")
    gen.set_defaults(func=_cmd_generate)

    ana = subs.add_parser("analyze", help="analyze one CSV dataset")
    ana.add_argument("--data", required=True, help="input CSV (y, t, covariates)")
    ana.add_argument("--impl", required=True, choices=sorted({s.kind for s in IMPLEMENTATIONS.values()}))
    ana.add_argument("--method", choices=("bpsa", "psa"), default=_env("method", str, "bpsa"))
    ana.add_argument(
        "--ps-covariates",
        default=_env("ps-covariates", str, ""),
        help="comma-separated covariate names (default: all)",
    )
    _add_run_flags(ana)
    ana.add_argument("--out", default=None, help="report JSON path (default: stdout)")
    ana.set_defaults(func=_cmd_analyze)

    sim = subs.add_parser("simulate", help="run the replicated grid study")
    sim.add_argument(
        "--cells",
        nargs="*",
        default=None,
        help="grid cells as impl:ps_model or method:impl:ps_model "
        f"(impl in {sorted(IMPLEMENTATIONS)}, ps_model in {sorted(PS_MODELS)})",
    )
    sim.add_argument("--full-bpsa", action="store_true", help="all 24 design-marginalized cells")
    sim.add_argument("--full-psa", action="store_true", help="all 24 baseline cells")
    sim.add_argument("--method", choices=("bpsa", "psa"), default="bpsa", help="method for 2-part --cells tokens")
    sim.add_argument("--reps", type=int, default=_env("reps", int, DESK_SCALE["reps"]))
    sim.add_argument("--n", type=int, default=_env("n", int, DESK_SCALE["n"]))
    sim.add_argument("--delta", type=float, default=_env("delta", float, 1.5))
    sim.add_argument("--K", type=int, default=_env("K", int, DESK_SCALE["k"]))
    sim.add_argument("--S", type=int, default=_env("S", int, DESK_SCALE["s"]))
    sim.add_argument("--level", type=float, default=_env("level", float, 0.95))
    sim.add_argument("--seed", type=int, default=_env("seed", int, 0))
    sim.add_argument("--workers", type=int, default=_env("workers", int, 1))
    sim.add_argument("--out", default=".", help="output directory")
    sim.set_defaults(func=_cmd_simulate)

    return parser


def _cmd_generate(args) -> int:
    config = DGPConfig(
        n=args.n,
        delta_true=args.delta,
        seed=args.seed,
        confounders=args.confounders,
        instruments=args.instruments,
        prognostic=args.prognostic,
        noise=args.noise,
    )
    data = generate(config)
    write_csv(data, args.out)
    print(f"wrote {data.n} rows x {data.p} covariates to {args.out}")
    return 0


def _sampler_echo() -> dict:
    return {
        "prior": f"normal(0, {PRIOR_SD}) per standardized coefficient",
        "proposal": "random walk, covariance (2.38^2/d) * inverse observed information at the MLE",
        "burn_in": BURN_IN,
        "thin": THIN,
        "acceptance_range": list(ACCEPTANCE_RANGE),
    }


def _cmd_analyze(args) -> int:
    data = load_csv(args.data)
    if args.ps_covariates:
        columns = tuple(c.strip() for c in args.ps_covariates.split(",") if c.strip())
    else:
        columns = data.columns
    ps_spec = PSModelSpec(columns=columns)
    impl_spec = ImplementationSpec(
        kind=args.impl, q=args.Q, ratio=args.ratio, caliper=args.caliper, r=args.R
    )
    config = RunConfig(
        ps_spec=ps_spec,
        impl_spec=impl_spec,
        method=args.method,
        k=args.K,
        s=args.S,
        seed=args.seed,
        level=args.level,
    )

    start = time.perf_counter()
    if args.method == "bpsa":
        result = run_bpsa(data, config)
        c = result.combined
        estimate = {
            "point": c.mean,
            "interval": list(c.interval),
            "level": c.level,
            "between_var": c.between_var,
            "within_var": c.within_var,
            "total_var": c.total_var,
            "prop_du": c.prop_du,
            "k_effective": c.k_effective,
        }
        diagnostics = result.diagnostics
    else:
        result = run_psa(data, config)
        estimate = {
            "point": result.point,
            "interval": list(result.interval),
            "level": result.level,
            "variance": result.variance,
        }
        diagnostics = result.diagnostics
    elapsed = time.perf_counter() - start

    report = {
        "config": {
            "data": {"path": str(args.data), "n": data.n, "p": data.p, "columns": list(data.columns)},
            "method": args.method,
            "implementation": {
                "kind": impl_spec.kind,
                "q": impl_spec.q,
                "ratio": impl_spec.ratio,
                "caliper": impl_spec.caliper,
                "caliper_scale": "sd_of_logit_propensity",
                "r": impl_spec.r,
            },
            "ps_covariates": list(columns),
            "k": args.K,
            "s": args.S,
            "level": args.level,
            "seed": args.seed,
            "sampler": _sampler_echo(),
            "backend": backend_name(),
            "version": __version__,
        },
        "estimate": estimate,
        "diagnostics": diagnostics,
        "timing": {"seconds": elapsed},
    }
    if args.out:
        write_json(report, args.out)
        print(f"wrote report to {args.out}")
    else:
        print(dump_json(report))
    return 0


def _parse_cells(args) -> list[Cell]:
    cells: list[Cell] = []
    if args.full_bpsa:
        cells.extend(full_grid("bpsa"))
    if args.full_psa:
        cells.extend(full_grid("psa"))
    for token in args.cells or ():
        parts = token.split(":")
        if len(parts) == 2:
            impl, model = parts
            cells.append(Cell(ps_model=model, implementation=impl, method=args.method))
        elif len(parts) == 3:
            method, impl, model = parts
            cells.append(Cell(ps_model=model, implementation=impl, method=method))
        else:
            raise ValueError(f"bad cell token {token!r}: want impl:ps_model or method:impl:ps_model")
    return cells


def _cmd_simulate(args) -> int:
    cells = _parse_cells(args)
    if not cells:
        raise ValueError("no cells selected: pass --cells, --full-bpsa or --full-psa")
    dgp = DGPConfig(n=args.n, delta_true=args.delta, seed=args.seed)
    report = run_simulation(
        cells,
        reps=args.reps,
        dgp=dgp,
        seed=args.seed,
        k=args.K,
        s=args.S,
        level=args.level,
        workers=args.workers,
    )

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    payload = {
        "config": {
            "cells": [c.key for c in cells],
            "reps": args.reps,
            "dgp": {
                "n": dgp.n,
                "delta_true": dgp.delta_true,
                "confounders": dgp.confounders,
                "instruments": dgp.instruments,
                "prognostic": dgp.prognostic,
                "noise": dgp.noise,
            },
            "k": args.K,
            "s": args.S,
            "level": args.level,
            "seed": args.seed,
            "sampler": _sampler_echo(),
            "backend": backend_name(),
            "version": __version__,
        },
        "rows": list(report.rows),
        "failures": list(report.failures),
        "timing": {"seconds": report.runtime_seconds},
    }
    write_json(payload, out / "simulation_report.json")
    write_table_csv(report.rows, out / "simulation_table.csv")
    write_figure_csv(report.figure_rows, out / "figure_data.csv")
    print(
        f"wrote {len(report.rows)} cell rows ({len(report.failures)} replicate failures) to {out}"
    )
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except BpsaError as exc:
        payload = {
            "error": {
                "type": type(exc).__name__,
                "stage": getattr(exc, "stage", None),
                "message": str(exc),
            }
        }
        print(dump_json(payload), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
