"""Run every experiment config in configs/ and write CSV, config and plot files.

    python scripts/run_figures.py --out results [--trials 50] [--workers 4] [--only ul_rate_vs_bits]
"""
import argparse
import json
import sys
import time
from pathlib import Path

from quantsel.harness import config_to_dict, emit_csv, emit_plot, load_config, run_experiment

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path("results"))
    ap.add_argument("--trials", type=int, help="override the trial count of every config")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--only", nargs="*", default=None, help="config stems to run")
    ap.add_argument("--backend", default="auto", choices=["auto", "matplotlib", "gnuplot"])
    args = ap.parse_args(argv)

    overrides = [f"trials={args.trials}"] if args.trials else []
    args.out.mkdir(parents=True, exist_ok=True)
    for path in sorted(CONFIG_DIR.glob("*.toml")):
        if args.only is not None and path.stem not in args.only:
            continue
        cfg = load_config(path, overrides)
        start = time.perf_counter()
        table = run_experiment(cfg, workers=args.workers)
        emit_csv(table, args.out / f"{path.stem}.csv")
        (args.out / f"{path.stem}.config.json").write_text(json.dumps(config_to_dict(cfg), indent=2))
        emit_plot(table, args.out / f"{path.stem}.png", backend=args.backend)
        print(f"{path.stem}: {cfg.trials} trials, {time.perf_counter() - start:.1f} s")
    return 0


if __name__ == "__main__":
    sys.exit(main())
