"""Command line entry point: ``hglab --config PATH`` or ``hglab --recipe NAME``."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import List, Optional

from . import harness


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hglab", description="Run one experiment or a canned recipe.")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", type=Path, help="experiment configuration file")
    src.add_argument("--recipe", choices=("acceptance-suite", "decay-study", "weak-null-zoo"),
                     help="write a canned experiment set into --out")
    p.add_argument("--out", type=Path, default=None, help="output directory")
    p.add_argument("--threads", type=int, default=1, help="worker threads for compiled kernels")
    p.add_argument("--seed", type=int, default=None, help="seed for randomized sweeps")
    p.add_argument("--run", action="store_true", help="with --recipe: also run every configuration")
    return p


def _run_config(path: Path, out: Optional[Path], threads: int, seed: Optional[int]) -> int:
    try:
        spec = harness.parse_config(path)
        if seed is not None:
            spec.seed = seed
        harness.set_threads(threads)
    except harness.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return harness.EXIT_CONFIG
    status = harness.run(spec, out, threads)
    where = harness.output_dir(spec, out)
    print(f"{spec.command}: {'ok' if status == 0 else 'numerical failure'} -> {where}")
    return status


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.config is not None:
        return _run_config(args.config, args.out, args.threads, args.seed)
    out = args.out or Path(harness.os.environ.get(harness.OUT_ENV, "hglab-out"))
    cfgs = harness.write_recipe(args.recipe, out)
    for c in cfgs:
        print(c)
    if not args.run:
        return 0
    worst = 0
    for c in cfgs:
        worst = max(worst, _run_config(c, out / c.stem, args.threads, args.seed))
    return worst


if __name__ == "__main__":
    sys.exit(main())
