"""Command-line entry point: run a scenario and write plot-ready result files."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .lal import LasPolicy
from .scenario import ConfigError, export, ffr_assign, load, rem_grid, run_experiment, write_rem_csv
from .scenario.network import node_positions

log = logging.getLogger("clwip")


def parse_seeds(text: str) -> list[int]:
    """``3``, ``1,2,5`` or ``1-5``."""
    seeds: list[int] = []
    try:
        for part in text.split(","):
            part = part.strip()
            if "-" in part[1:]:
                lo, hi = part.split("-", 1)
                seeds.extend(range(int(lo), int(hi) + 1))
            else:
                seeds.append(int(part))
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid seed list {text!r}") from None
    if not seeds:
        raise argparse.ArgumentTypeError("empty seed list")
    return seeds


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="clwip", description="LTE/Wi-Fi link aggregation simulator")
    p.add_argument("--scenario", required=True, help="YAML file or preset name (expt1..expt5)")
    p.add_argument("--policy", help="override steering policy: " + ", ".join(x.value for x in LasPolicy))
    p.add_argument("--seed", type=parse_seeds, help="seed or list of seeds, e.g. 7 or 1,2,3 or 1-5")
    p.add_argument("--duration", type=float, help="simulated seconds per run")
    p.add_argument("--out", default="results", help="output directory")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--reorder", choices=("on", "off"), help="toggle the LAL reorder buffer")
    p.add_argument("--rem", action="store_true", help="also write the SINR raster as a CSV grid")
    p.add_argument("--rem-resolution", type=float, default=5.0, help="REM cell size in metres")
    p.add_argument("--ffr-threshold", type=float, default=None, help="label REM cells R1/R2 at this SINR (dB)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = load(args.scenario)
        if args.policy:
            cfg.policy = args.policy
        if args.duration is not None:
            cfg.duration_s = args.duration
        if args.seed:
            cfg.seeds = args.seed
        if args.reorder:
            cfg.reorder.enabled = args.reorder == "on"
        cfg.validate()
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2

    out = Path(args.out)
    stem = f"{cfg.name}_{cfg.las_policy.value}"
    try:
        if args.rem:
            rem = rem_grid(node_positions(cfg), cfg.radio.channel(), args.rem_resolution)
            regions = ffr_assign(rem, args.ffr_threshold) if args.ffr_threshold is not None else None
            path = write_rem_csv(rem, out / f"{cfg.name}_rem.csv", regions)
            print(path)
        results = run_experiment(cfg)
        for path in export(results, out, args.format, stem):
            print(path)
    except (OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    for res in results:
        agg = res.aggregate
        label = "" if res.point is None else f"{cfg.sweep.param}={res.point} "
        print(f"{label}throughput={agg['throughput_mbps']:.3f} Mbps over {len(res.records)} seed(s)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
