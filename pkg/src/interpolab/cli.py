"""Command-line entry point: ``interpolab --config FILE`` or ``python -m interpolab``.

Exit codes: 0 all verdicts pass, 1 some verdict fails, 2 bad config or
usage, 3 the numerics went non-finite.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import logging
import math
import sys
from dataclasses import fields
from pathlib import Path
from typing import Any, Sequence

from .config import EXPERIMENTS, ConfigError, ExperimentConfig, default_config, validate_config
from .core_net import save_weights
from .descent import DivergenceError
from .experiments import EXPERIMENTS as RUNNERS
from .experiments import ExperimentResult, Verdict, check

log = logging.getLogger("interpolab")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3


def git_blob_hash(data: bytes) -> str:
    """Same digest as ``git hash-object``."""
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def _cell(value: Any) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])


def apply_expectations(result: ExperimentResult, expect: dict[str, float]) -> None:
    """Turn each ``[expect]`` entry into a verdict comparing it with a reported metric."""
    for key, want in sorted(expect.items()):
        name = f"expect:{key}"
        if key not in result.metrics:
            result.verdicts.append(Verdict(name, "fail", f"no metric named {key!r}"))
            continue
        got = result.metrics[key]
        try:
            ok = math.isclose(float(got), want, rel_tol=1e-9, abs_tol=1e-12)
        except (TypeError, ValueError):
            ok = False
        result.verdicts.append(check(name, ok, f"got {got!r}, expected {want!r}"))


def _inputs(cfg: ExperimentConfig) -> list[Path]:
    return [p for p in (cfg.source, cfg.file) if p is not None]


def summary_text(cfg: ExperimentConfig, result: ExperimentResult) -> str:
    lines = [f"experiment: {cfg.experiment}", f"seed: {cfg.seed}", "", "config:"]
    for f in fields(cfg):
        if f.name in ("echo", "expect", "source"):
            continue
        lines.append(f"  {f.name} = {getattr(cfg, f.name)}")
    for key, value in sorted(cfg.expect.items()):
        lines.append(f"  expect.{key} = {value!r}")
    lines += ["", "inputs (git blob sha1):"]
    inputs = _inputs(cfg)
    if not inputs:
        lines.append("  (none; built-in defaults)")
    for path in inputs:
        lines.append(f"  {git_blob_hash(path.read_bytes())}  {path}")
    lines += ["", "metrics:"]
    for key, value in result.metrics.items():
        lines.append(f"  {key} = {_cell(value)}")
    if result.notes:
        lines += ["", "notes:"] + [f"  {note}" for note in result.notes]
    lines += ["", "verdicts:"]
    for v in result.verdicts:
        lines.append(f"  {v.status.upper():4s} {v.name}: {v.detail}")
    lines += ["", f"overall: {'PASS' if result.passed else 'FAIL'}"]
    return "\n".join(lines) + "\n"


def prepare_output(out: Path) -> None:
    if not out.exists():
        log.warning("output directory %s does not exist; creating it", out)
    out.mkdir(parents=True, exist_ok=True)


def run_experiment(cfg: ExperimentConfig) -> tuple[int, ExperimentResult | None]:
    prepare_output(cfg.out_dir)
    try:
        result = RUNNERS[cfg.experiment](cfg)
    except (DivergenceError, FloatingPointError) as exc:
        log.error("numerical failure in %s: %s", cfg.experiment, exc)
        (cfg.out_dir / "summary.txt").write_text(
            f"experiment: {cfg.experiment}\nseed: {cfg.seed}\n\nerror: {exc}\n\noverall: FAIL\n")
        return EXIT_NUMERIC, None
    apply_expectations(result, cfg.expect)
    for name, (header, rows) in result.tables.items():
        write_csv(cfg.out_dir / name, header, rows)
    if result.weights is not None:
        save_weights(result.weights, cfg.out_dir / "weights.txt")
    text = summary_text(cfg, result)
    (cfg.out_dir / "summary.txt").write_text(text)
    for v in result.verdicts:
        level = logging.INFO if v.passed else logging.WARNING
        log.log(level, "%s %s: %s", v.status.upper(), v.name, v.detail)
    return (EXIT_OK if result.passed else EXIT_FAIL), result


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="interpolab", description="Run a named interpolation experiment.")
    p.add_argument("--config", type=Path, help="experiment config file")
    p.add_argument("--experiment", choices=EXPERIMENTS, help="experiment to run (overrides the config)")
    p.add_argument("--seed", type=int, help="top-level seed (overrides the config)")
    p.add_argument("--out", type=Path, help="output directory (overrides the config)")
    p.add_argument("--quiet", action="store_true", help="only log warnings and errors")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    if args.seed is not None and args.seed < 0:
        log.error("--seed must be non-negative")
        return EXIT_CONFIG
    try:
        if args.config is not None:
            cfg = validate_config(args.config, experiment=args.experiment)
        elif args.experiment is not None:
            cfg = default_config(args.experiment)
        else:
            log.error("give --config or --experiment")
            return EXIT_CONFIG
    except ConfigError as exc:
        for err in exc.errors:
            log.error("%s", err)
        return EXIT_CONFIG
    cfg = cfg.with_overrides(seed=args.seed, out_dir=args.out)
    code, _ = run_experiment(cfg)
    if not args.quiet:
        print((cfg.out_dir / "summary.txt").read_text(), end="")
    return code


if __name__ == "__main__":
    sys.exit(main())
