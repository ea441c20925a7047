"""Command-line harness.

Subcommands:
  simulate        run a scenario file or a named preset, emit CSV/JSON
  design-codebook design and save a hierarchical RIS codebook
  bounds          per-SNR position error bound CSV for a scenario

Exit codes: 0 success, 2 configuration error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from .bounds import peb_for_scenario
from .codebook import DesignOptions, design_codebook
from .experiment import (
    PRESET_NAMES,
    emit_results,
    run_experiment,
    run_preset,
)
from .scenario import ScenarioError, load_scenario


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="risradar",
                                     description="RIS-aided bistatic THz radar simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a scenario or preset experiment")
    sim.add_argument("scenario", nargs="?", help="scenario JSON file")
    sim.add_argument("--preset", choices=PRESET_NAMES, help="named preset instead of a file")
    sim.add_argument("--out", default="results", help="output directory")
    sim.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    sim.add_argument("--trials", type=int, default=None, help="override the trial count")
    sim.add_argument("--full-scale", action="store_true",
                     help="use the full-scale array sizes (presets only)")
    sim.add_argument("--trace", action="store_true", help="emit per-scan JSON traces")

    dcb = sub.add_parser("design-codebook", help="design and save a hierarchical codebook")
    dcb.add_argument("scenario", help="scenario JSON file (geometry and RIS array)")
    dcb.add_argument("--L", type=int, required=True, help="codewords per branching level")
    dcb.add_argument("--S", type=int, required=True, help="number of stages")
    dcb.add_argument("--R", type=int, default=None, help="design grid size (default 2*L^S)")
    dcb.add_argument("--out", required=True, help="output codebook JSON path")
    dcb.add_argument("--seed", type=int, default=7, help="design restart seed")

    bnd = sub.add_parser("bounds", help="per-SNR position error bound CSV")
    bnd.add_argument("scenario", help="scenario JSON file")
    bnd.add_argument("--out", required=True, help="output CSV path")
    return parser


def _cmd_simulate(args) -> int:
    out_dir = Path(args.out)
    if args.preset is not None:
        if args.scenario is not None:
            raise ScenarioError("<cli>", "pass either a scenario file or --preset, not both")
        written = run_preset(args.preset, out_dir, full_scale=args.full_scale,
                             seed=args.seed, trials=args.trials, trace=args.trace)
    else:
        if args.scenario is None:
            raise ScenarioError("<cli>", "a scenario file or --preset is required")
        scn = load_scenario(args.scenario)
        if args.seed is not None:
            scn = replace(scn, seed=args.seed)
        if args.trials is not None:
            scn = replace(scn, trials=args.trials)
        result = run_experiment(scn, trace=args.trace)
        written = emit_results(result, out_dir / Path(args.scenario).stem)
    for path in written:
        print(path)
    return 0


def _cmd_design_codebook(args) -> int:
    scn = load_scenario(args.scenario)
    r_grid = args.R if args.R is not None else 2 * args.L**args.S
    if r_grid % args.L**args.S != 0:
        raise ScenarioError("--R", f"L^S = {args.L**args.S} must divide R = {r_grid}")
    cb = design_codebook(args.L, args.S, r_grid, scn.ris_array, scn.phi_tx, scn.grid.fc,
                         opts=DesignOptions(seed=args.seed), lazy=False)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    cb.save(out)
    print(out)
    return 0


def _cmd_bounds(args) -> int:
    scn = load_scenario(args.scenario)
    lines = ["snr_db,peb_m,fim_condition"]
    for snr_db in scn.snr_db_grid:
        scn_pt = replace(scn, tx_power=scn.power_for_snr(snr_db))
        report = peb_for_scenario(scn_pt)
        lines.append(f"{float(snr_db)!r},{report.peb!r},{report.condition_number!r}")
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text("\n".join(lines) + "\n")
    print(out)
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "simulate":
            return _cmd_simulate(args)
        if args.command == "design-codebook":
            return _cmd_design_codebook(args)
        if args.command == "bounds":
            return _cmd_bounds(args)
        parser.error(f"unknown command {args.command!r}")
    except ScenarioError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - surfaced as exit code 3
        print(f"runtime error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
