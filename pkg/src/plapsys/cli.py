"""``plapsys <subcommand> --config <path> [--out <dir>]``.

Every subcommand writes its CSV files plus ``verdicts.csv`` into the output
directory, prints the verdict lines, and exits nonzero iff a verdict FAILs.
"""

from __future__ import annotations

import argparse
import sys
import warnings
from pathlib import Path
from typing import Sequence

from . import studies
from .config import ConfigError, RunConfig, load_config, serialize_config
from .core import OutsideHypothesesWarning, SupportOverflowError

EXIT_FAIL = 1
EXIT_ERROR = 2


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(",") if v.strip())


def _radii(text: str) -> tuple[float, ...]:
    """``lo:hi:count`` or a comma list."""
    if ":" in text:
        lo, hi, count = text.split(":")
        count = int(count)
        if count < 1:
            raise argparse.ArgumentTypeError("count must be positive")
        if count == 1:
            return (float(lo),)
        step = (float(hi) - float(lo)) / (count - 1)
        return tuple(float(lo) + i * step for i in range(count))
    return _floats(text)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="plapsys", description="Degenerate p-Laplacian system experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, type=Path)
        p.add_argument("--out", type=Path, default=None, help="output directory (overrides 'out' in the config)")
        return p

    add("simulate", "run and write the run log, snapshots and mass/gradient verdicts")
    p = add("verify-barenblatt", "mass round trip and discrete residual of the Barenblatt profile")
    p.add_argument("--M", type=_floats, default=(0.5, 1.0, 2.0), help="comma separated masses")
    p.add_argument("--t", type=float, default=1.0, help="time at which the residual is measured")
    add("entropy", "run with the snapshot schedule and check entropy decay and convergence")
    p = add("harnack", "Harnack bracket constants over a radius sweep")
    p.add_argument("--T", type=float, default=1.0)
    p.add_argument("--R", type=_radii, default=None, help="lo:hi:count or comma list (default 2T^(1/p) to L/2)")
    p = add("convergence-study", "repeat the run at h, h/2, h/4 and report observed orders")
    p.add_argument("--levels", type=int, default=3)
    p = add("epsilon-ladder", "runs with eps in 1e-2, 1e-3, 1e-4, 0 and their pairwise distances")
    p.add_argument("--eps", type=_floats, default=studies.LADDER)
    return parser


def _dispatch(args, cfg: RunConfig) -> studies.StudyResult:
    if args.command == "simulate":
        return studies.simulate(cfg)
    if args.command == "verify-barenblatt":
        return studies.verify_barenblatt(cfg.p, cfg.n, args.M, cfg.grid(), args.t)
    if args.command == "entropy":
        return studies.entropy_study(cfg)
    if args.command == "harnack":
        return studies.harnack_study(cfg, args.T, args.R)
    if args.command == "convergence-study":
        return studies.convergence_study(cfg, args.levels)
    if args.command == "epsilon-ladder":
        return studies.epsilon_ladder(cfg, args.eps)
    raise AssertionError(args.command)


def write_result(result: studies.StudyResult, out: Path, cfg: RunConfig) -> None:
    out.mkdir(parents=True, exist_ok=True)
    files = dict(result.files)
    files["verdicts.csv"] = result.verdicts()
    files["config.txt"] = serialize_config(cfg)
    for name, text in sorted(files.items()):
        path = out / name
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
    except (OSError, ConfigError) as exc:
        print(f"plapsys: {args.config}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    out = args.out if args.out is not None else Path(cfg.out)
    if not cfg.params().within_theory:
        print("note: n=1 lies outside the theorems' hypotheses (n >= 2); verdicts are empirical only")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", OutsideHypothesesWarning)
        try:
            result = _dispatch(args, cfg)
        except (ValueError, SupportOverflowError, FloatingPointError, RuntimeError) as exc:
            print(f"plapsys {args.command}: {exc}", file=sys.stderr)
            return EXIT_ERROR
    write_result(result, out, cfg)
    for rep in result.reports:
        print(rep.verdict_line())
        for note in rep.notes:
            print(f"  note: {note}")
    return 0 if result.passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
