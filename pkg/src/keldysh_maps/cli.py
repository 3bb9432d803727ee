"""Command-line scenario runner.

Subcommands: run, validate, list, phi-table. Exit codes: 0 success,
1 config/validation error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .filters import QuadratureError, spectral_overlap
from .maps import NegativeRateError
from .scenarios import (ConfigError, build_spectrum, list_scenarios,
                        load_scenario, run_scenario, validate_config)

EXIT_VALIDATION = 1
EXIT_NUMERICAL = 2


def _load_config(args) -> dict:
    if args.config:
        with open(args.config) as fh:
            return json.load(fh)
    if args.scenario:
        return load_scenario(args.scenario)
    raise ConfigError("provide --config PATH or a bundled scenario name")


def _add_config_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("scenario", nargs="?", help="bundled scenario name")
    parser.add_argument("--config", help="path to a scenario JSON file")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="keldysh-maps",
        description="Decoherence maps for driven systems under correlated noise")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario end to end")
    _add_config_args(p_run)
    p_run.add_argument("--out", default="out", help="output directory")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--threads", type=int,
                       default=int(os.environ.get("KELDYSH_MAPS_THREADS", "0")))
    p_run.add_argument("--mode", choices=["secular", "fullwave"], default=None)
    p_run.add_argument("--kcut", type=int, default=None)

    p_val = sub.add_parser("validate", help="validate a config without running")
    _add_config_args(p_val)

    sub.add_parser("list", help="list bundled scenarios")

    p_phi = sub.add_parser("phi-table",
                           help="precompute diagonal overlaps phi_{k,k}")
    _add_config_args(p_phi)
    p_phi.add_argument("--kmax", type=int, required=True)
    p_phi.add_argument("--out", default="phi_table.json")

    args = parser.parse_args(argv)

    if args.command == "list":
        for name in list_scenarios():
            print(name)
        return 0

    try:
        config = _load_config(args)
    except (ConfigError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION

    if args.command == "validate":
        try:
            validate_config(config)
        except ConfigError as exc:
            print(f"invalid: {exc}", file=sys.stderr)
            return EXIT_VALIDATION
        print(f"ok: {config.get('name', '<unnamed>')}")
        return 0

    if args.command == "phi-table":
        try:
            validate_config(config)
            spectrum = build_spectrum(config["spectrum"])
            tau = float(config["tau"])
            table = {}
            for k in range(-args.kmax, args.kmax + 1):
                phi = spectral_overlap(spectrum, k, k, tau)
                table[f"{k},{k}"] = [phi.real, phi.imag]
        except ConfigError as exc:
            print(f"invalid: {exc}", file=sys.stderr)
            return EXIT_VALIDATION
        except (QuadratureError, NegativeRateError, FloatingPointError) as exc:
            print(f"numerical failure: {exc}", file=sys.stderr)
            return EXIT_NUMERICAL
        with open(args.out, "w") as fh:
            json.dump({"tau": tau, "phis": table}, fh, indent=1)
        print(f"wrote {args.out}")
        return 0

    # run
    if args.threads:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS"):
            os.environ[var] = str(args.threads)
    try:
        manifest = run_scenario(config, Path(args.out),
                                mode_override=args.mode,
                                k_cut_override=args.kcut,
                                seed_override=args.seed)
    except ConfigError as exc:
        print(f"invalid: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (QuadratureError, NegativeRateError, OverflowError,
            FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    print(json.dumps({"name": manifest["name"],
                      "elapsed_seconds": manifest["elapsed_seconds"],
                      "out": str(args.out)}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
