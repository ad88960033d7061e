"""Run every shipped config and tabulate exit codes.

    python scripts/run_all_experiments.py [--skip-slow] [--out DIR]

Outputs go to out/<config name>/ unless --out is given.  The literal
step-size planted run is expected to exit 1; see README.
"""

import argparse
import logging
import time
from pathlib import Path

from interpolab.cli import run_experiment
from interpolab.config import validate_config

ROOT = Path(__file__).resolve().parents[1]
SLOW = {"corollary.cfg"}


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--skip-slow", action="store_true", help="skip the minute-long corollary run")
    p.add_argument("--out", type=Path, default=ROOT / "out", help="parent directory for outputs")
    args = p.parse_args()
    logging.basicConfig(level=logging.ERROR)

    print(f"{'config':28s} {'exit':>4s} {'seconds':>8s}  failing verdicts")
    for path in sorted((ROOT / "configs").glob("*.cfg")):
        if args.skip_slow and path.name in SLOW:
            continue
        cfg = validate_config(path).with_overrides(out_dir=args.out / path.stem)
        start = time.perf_counter()
        code, result = run_experiment(cfg)
        elapsed = time.perf_counter() - start
        failing = [v.name for v in result.verdicts if v.status == "fail"] if result else ["numerical failure"]
        print(f"{path.name:28s} {code:4d} {elapsed:8.2f}  {', '.join(failing)}")


if __name__ == "__main__":
    main()
