"""Command-line entry point: ``sptrade --mode sweep-pmax --seeds 200 --out results``."""

from __future__ import annotations

import argparse
import logging
import sys

from .config import ALL_SCHEMES, MODES, ConfigError, load_config, parse_override, render_defaults
from .experiment import run_experiment


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="sptrade",
        description="Energy-efficient spectrum-power trading: solves, sweeps and convergence traces.",
    )
    p.add_argument("--mode", choices=MODES, help="experiment mode (default: sweep-pmax)")
    p.add_argument("--config", metavar="PATH", help="key = value configuration file")
    p.add_argument("--out", metavar="DIR", help="output directory for CSV files")
    p.add_argument("--seeds", metavar="N", help="number of Monte Carlo scenarios")
    p.add_argument("--seed", metavar="U64", help="base seed (scenario seed in solve/convergence modes)")
    p.add_argument("--schemes", metavar="LIST", help=f"comma list from {','.join(ALL_SCHEMES)}")
    p.add_argument("--grid", metavar="LIST",
                   help="comma list: P_max in dBm (sweep-pmax), P_c in W (sweep-pc), MU floors in kbit/s (convergence)")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override any configuration key; repeatable")
    p.add_argument("--print-config", action="store_true", help="print the default configuration and exit")
    p.add_argument("-q", "--quiet", action="store_true", help="do not print the report")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.print_config:
        sys.stdout.write(render_defaults())
        return 0
    try:
        overrides = dict(parse_override(o) for o in args.overrides)
        for key in ("mode", "out", "seeds", "seed", "schemes", "grid"):
            value = getattr(args, key)
            if value is not None:
                overrides.update([parse_override(f"{key}={value}")])
        cfg = load_config(args.config, overrides)
        status, files = run_experiment(cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if not args.quiet:
        sys.stdout.write(files["report"])
        for name, path in files.items():
            if name != "report":
                print(f"wrote {path}")
    return status


if __name__ == "__main__":
    sys.exit(main())
