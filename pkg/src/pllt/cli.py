"""Command-line front end.

Exit status is 0 on success, 1 when the experiment (or comparison) fails
and 2 when the configuration is invalid.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .compare import compare
from .config import KINDS, load_config, resolve
from .errors import ComparisonImpossible, ConfigError, PLLTError
from .runner import run

EXIT_OK, EXIT_FAILED, EXIT_CONFIG = 0, 1, 2


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pllt", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for kind in KINDS:
        p = sub.add_parser(kind, help=f"run a {kind} experiment")
        p.add_argument("--config", type=Path, help="TOML run file (all keys optional)")
        p.add_argument("--out", type=Path, help="output directory (default: out key or ./<kind>)")
        p.add_argument("--jobs", type=int, default=1, help="worker threads")
        p.add_argument("--preset", help="target resonance, e.g. 1:3")
    p = sub.add_parser("compare", help="deviation of run A from reference run B")
    p.add_argument("run_a", nargs="+", type=Path, help="CSV files of run A")
    p.add_argument("--ref", nargs="+", type=Path, required=True, help="reference CSV files (run B)")
    p.add_argument("--metric", choices=("phase", "locus"), default="phase")
    p.add_argument("--amp-column", default="A1")
    p.add_argument("--amp-tol", type=float, default=0.01, help="relative amplitude tolerance")
    p.add_argument("--phase-tol", type=float, default=1.0, help="phase tolerance [deg]")
    p.add_argument("--out", type=Path, help="write per-point deviations to this CSV")
    return ap


def _run(args) -> int:
    if args.jobs < 1:
        raise ConfigError("must be >= 1", key="--jobs")
    if args.config is not None:
        cfg = load_config(args.config, preset=args.preset, kind=args.command)
    else:
        cfg = resolve({}, preset=args.preset, kind=args.command)
    out = args.out or Path(cfg.get("out", args.command))
    man = run(cfg, out, jobs=args.jobs)
    print(f"{man.kind}: {man.status} ({man.wall_clock_s:.1f} s, {man.steps} steps) -> {out}")
    if man.message:
        print(f"  {man.message}")
    return EXIT_OK if man.ok else EXIT_FAILED


def _compare(args) -> int:
    rep = compare(args.run_a, args.ref, amp_column=args.amp_column, metric=args.metric,
                  amp_tol=args.amp_tol, phase_tol_deg=args.phase_tol)
    if args.out:
        rep.to_csv(args.out)
    print(json.dumps(rep.summary(), indent=2))
    return EXIT_OK if rep.passed else EXIT_FAILED


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        return _compare(args) if args.command == "compare" else _run(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ComparisonImpossible as exc:
        print(f"comparison impossible: {exc}", file=sys.stderr)
        return EXIT_FAILED
    except PLLTError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
