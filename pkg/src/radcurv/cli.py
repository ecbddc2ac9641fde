"""Command line: ``radcurv {solve,benchmark-sphere,convergence-study,check-properties}``."""

from __future__ import annotations

import argparse
import logging
import re
import sys

from . import harness
from .config import ConfigError, load_config

DEFAULT_STUDY = "17x32,33x64,65x128"


def _grid(text: str) -> tuple[int, int]:
    m = re.fullmatch(r"\s*(\d+)\s*[xX]\s*(\d+)\s*", text)
    if not m:
        raise argparse.ArgumentTypeError(f"expected NsxNt, got {text!r}")
    return int(m.group(1)), int(m.group(2))


def _grid_list(text: str) -> list[tuple[int, int]]:
    return [_grid(part) for part in text.split(",") if part.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="radcurv", description=__doc__)
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=True):
        sp.add_argument("--config", required=config_required, help="run configuration (INI)")
        sp.add_argument("--out", help="output directory (default: [output] dir)")
        sp.add_argument("--no-plots", action="store_true", help="skip the PNG figures")

    s = sub.add_parser("solve", help="two-stage continuation solve")
    common(s)
    s.add_argument("--grid", type=_grid, help="override the grid, e.g. 65x128")
    s.add_argument("--resume", help="checkpoint.csv written by an aborted run")

    b = sub.add_parser("benchmark-sphere", help="error against the exact off-center sphere")
    common(b)
    b.add_argument("--grid", type=_grid, help="coarse grid; the second grid doubles it")

    c = sub.add_parser("convergence-study", help="errors and observed orders over a grid list")
    common(c)
    c.add_argument("--grids", type=_grid_list, default=_grid_list(DEFAULT_STUDY),
                   help=f"comma-separated NsxNt list (default {DEFAULT_STUDY})")
    c.add_argument("--grid", type=_grid, help="single extra grid appended to --grids")

    k = sub.add_parser("check-properties", help="randomized identity and inequality suite")
    k.add_argument("--seed", type=int, default=0)
    k.add_argument("--scale", type=float, default=1.0,
                   help="sample-count multiplier (1.0 = full counts)")
    k.add_argument("--mutate", choices=["h-sign"], help="inject a known fault (discrimination check)")
    k.add_argument("--out", help="also write properties.csv here")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=[logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)],
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "check-properties":
        return harness.cmd_check_properties(args.seed, args.scale, args.mutate, args.out)

    try:
        cfg = load_config(args.config)
    except (ConfigError, OSError) as exc:
        print(f"radcurv: {args.config}: {exc}", file=sys.stderr)
        return 2
    out = args.out or cfg.output_dir
    plots = not args.no_plots

    try:
        if args.command == "solve":
            if args.grid:
                cfg = cfg.with_grid(*args.grid)
            outcome = harness.cmd_solve(cfg, out, resume=args.resume, plots=plots)
            with open(f"{out}/report.txt", encoding="ascii") as fh:
                sys.stdout.write(fh.read())
            return outcome.exit_code
        if args.command == "benchmark-sphere":
            grids = None
            if args.grid:
                ns, nt = args.grid
                grids = [(ns, nt), (2 * ns - 1, 2 * nt)]
            return harness.cmd_benchmark_sphere(cfg, out, grids, plots=plots)
        grids = args.grids + ([args.grid] if args.grid else [])
        return harness.cmd_convergence_study(cfg, out, grids, plots=plots)
    except ValueError as exc:
        print(f"radcurv {args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
