"""Command line entry point: ``quantsel run | verify | constants``.

Exit codes: 0 success, 1 configuration or usage error, 2 verification failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from importlib import resources
from pathlib import Path

from .harness import ConfigError, config_to_dict, emit_csv, emit_plot, load_config, run_experiment
from .quantization import high_resolution_beta, load_beta_table, write_beta_table
from .verify import verify_theorems

EXIT_OK, EXIT_CONFIG, EXIT_VERIFY = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="quantsel", description="Antenna selection under low-resolution ADCs.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="run a Monte-Carlo sweep and write CSV")
    run.add_argument("--config", required=True, help="TOML experiment file")
    run.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                     help="replace a config key (TOML value syntax, dotted keys for tables)")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--workers", type=int, default=1, help="worker processes (default 1)")
    run.add_argument("--plot", action="store_true", help="also write a plot of the sweep")

    ver = sub.add_parser("verify", help="run the theorem check battery")
    ver.add_argument("--seed", type=int, default=0)
    ver.add_argument("--budget", type=int, default=100,
                     help="max subsets a brute-force oracle may enumerate per instance")
    ver.add_argument("--instances", type=int, default=20, help="random instances per check")
    ver.add_argument("--alpha", type=float, default=0.9655, help="quantization gain for rate-loss checks")

    con = sub.add_parser("constants", help="show or rebuild the Lloyd-Max table")
    con.add_argument("--regenerate", action="store_true", help="recompute and rewrite the table")
    con.add_argument("--output", help="write the table here instead of the package data file")
    con.add_argument("--max-bits", type=int, default=12)
    return p


def _cmd_run(args) -> int:
    try:
        cfg = load_config(args.config, args.override)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.workers < 1:
        print("config error: --workers must be positive", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"cannot create {out}: {exc.strerror}", file=sys.stderr)
        return EXIT_CONFIG

    table = run_experiment(cfg, workers=args.workers)
    csv_path = emit_csv(table, out / f"{cfg.scenario}.csv")
    with open(out / f"{cfg.scenario}.config.json", "w", encoding="utf-8") as fh:
        json.dump(config_to_dict(cfg), fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote {csv_path}")
    if args.plot:
        for path in emit_plot(table, out / f"{cfg.scenario}.png"):
            print(f"wrote {path}")
    return EXIT_OK


def _cmd_verify(args) -> int:
    if args.budget < 1 or args.instances < 1 or not 0.0 < args.alpha <= 1.0:
        print("config error: budget and instances must be positive, alpha in (0, 1]",
              file=sys.stderr)
        return EXIT_CONFIG
    report = verify_theorems(args.seed, args.budget, args.instances, args.alpha)
    print(report.format())
    return EXIT_OK if report.passed else EXIT_VERIFY


def _cmd_constants(args) -> int:
    if args.regenerate:
        if not 1 <= args.max_bits <= 12:
            print("config error: --max-bits must lie in [1, 12]", file=sys.stderr)
            return EXIT_CONFIG
        target = args.output or str(resources.files("quantsel.data").joinpath("lloyd_max_beta.txt"))
        table = write_beta_table(target, args.max_bits)
        print(f"wrote {target}")
    else:
        table = load_beta_table()
    print(f"{'bits':>4} {'beta':>22} {'high-res approx':>16} {'rel diff':>9}")
    for b, beta in table.items():
        approx = high_resolution_beta(b)
        print(f"{b:>4} {beta!r:>22} {approx:>16.6e} {(beta - approx) / approx:>+9.2%}")
    return EXIT_OK


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handler = {"run": _cmd_run, "verify": _cmd_verify, "constants": _cmd_constants}[args.command]
    return handler(args)


if __name__ == "__main__":
    sys.exit(main())
