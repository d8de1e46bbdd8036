#!/usr/bin/env python3
"""Run every built-in example and print a verdict table.

Usage:
    python scripts/run_gallery.py [--out DIR]
"""

import argparse
import sys
import time

from stoplab.config import builtin_examples
from stoplab.pipeline import StageError, run_problem


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default=None, help="base output directory (default: none)")
    args = parser.parse_args()

    all_ok = True
    for name, cfg in builtin_examples().items():
        out_dir = f"{args.out}/{name}" if args.out else None
        t0 = time.perf_counter()
        try:
            artifacts = run_problem(cfg, out_dir=out_dir)
        except StageError as err:
            print(f"{name:36s} ERROR in stage {err.stage}: {err.cause}")
            all_ok = False
            continue
        elapsed = time.perf_counter() - t0
        fails = [r.check_name for r in artifacts.reports if not r.ok]
        status = "ok" if artifacts.exit_ok else f"FAIL: {', '.join(fails)}"
        print(f"{name:36s} {elapsed:6.1f}s  {len(artifacts.reports):2d} checks  {status}")
        all_ok &= artifacts.exit_ok
    return 0 if all_ok else 1


if __name__ == "__main__":
    sys.exit(main())
