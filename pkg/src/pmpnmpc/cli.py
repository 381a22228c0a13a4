"""Command-line front end: ``simulate``, ``compare`` and ``verify``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from .artifacts import RunArtifacts, package_version, summarize, write_comparison, write_run
from .config import ExperimentConfig, config_hash, load_config
from .diagnostics import diagnostics_config, report
from .direct import run_closed_loop_direct
from .exceptions import ConfigurationError, IntegrationBlowupError, NMPCError
from .loop import ClosedLoopLog, PlantBlowupError, run_closed_loop
from .verify import format_table, run_battery

__all__ = ["METHODS", "run_method", "cmd_simulate", "cmd_compare", "cmd_verify", "main"]

METHODS = ("pmp", "direct-1", "direct-10")

logger = logging.getLogger("pmpnmpc")


class RunFailed(NMPCError):
    def __init__(self, method: str, sample: int, cause: Exception, log: Optional[ClosedLoopLog] = None):
        self.sample = sample
        self.log = log
        super().__init__(f"{method}: run failed at sample {sample}: {cause}")


def run_method(cfg: ExperimentConfig, method: str) -> ClosedLoopLog:
    if method not in METHODS:
        raise ConfigurationError(f"unknown method {method!r}; expected one of {', '.join(METHODS)}")
    spec = cfg.build_spec()
    x0 = np.array(cfg.x0)
    try:
        if method == "pmp":
            return run_closed_loop(x0, spec, cfg.nmpc, shooting=cfg.solver)
        nodes = int(method.split("-")[1])
        return run_closed_loop_direct(x0, spec, cfg.nmpc, cfg.direct_config(nodes))
    except PlantBlowupError as exc:
        raise RunFailed(method, exc.node, exc, exc.log) from None
    except (IntegrationBlowupError, ArithmeticError) as exc:
        raise RunFailed(method, -1, exc) from None


def _meta(cfg: ExperimentConfig) -> Dict[str, object]:
    return {"config_hash": config_hash(cfg), "seed": cfg.seed, "version": package_version()}


def _write(out: Path, cfg: ExperimentConfig, log: ClosedLoopLog, suffix: str = "") -> RunArtifacts:
    spec = cfg.build_spec()
    diag = dcfg = None
    if len(log) >= 2:
        dcfg = diagnostics_config(log, spec)
        diag = report(log, dcfg, spec)
    return write_run(out, log, _meta(cfg), diag, dcfg, suffix)


def cmd_simulate(cfg: ExperimentConfig, method: str, out) -> RunArtifacts:
    """Run one closed loop and write its trajectory, diagnostics and summary CSVs."""
    out = Path(out)
    try:
        log = run_method(cfg, method)
    except RunFailed as exc:
        if exc.log is not None and len(exc.log):
            _write(out, cfg, exc.log)
        raise
    return _write(out, cfg, log)


def cmd_compare(cfg: ExperimentConfig, out) -> List[Dict[str, object]]:
    """All three methods from the same initial state; one row per method."""
    out = Path(out)
    summaries = []
    for method in METHODS:
        log = run_method(cfg, method)
        _write(out, cfg, log, suffix=f"_{method}")
        summaries.append(summarize(log))
    write_comparison(out / "comparison.csv", summaries, _meta(cfg))
    return summaries


def cmd_verify(cfg: ExperimentConfig, corrupted_jacobian: bool = False) -> int:
    results = run_battery(cfg, corrupted_jacobian=corrupted_jacobian)
    print(format_table(results))
    return 0 if all(r.passed for r in results) else 1


def _print_summary(rows: Sequence[Dict[str, object]]):
    cols = ("method", "rms_full", "rms_last_quarter", "constraint_margin", "mean_solve_time_s",
            "max_solve_time_s", "mean_iters", "converged_fraction")
    print("  ".join(f"{c:>18}" for c in cols))
    for row in rows:
        cells = [f"{row[c]:>18.6g}" if isinstance(row[c], float) else f"{row[c]!s:>18}" for c in cols]
        print("  ".join(cells))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pmpnmpc", description="Minimum-principle NMPC experiments.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run one closed loop and write CSVs")
    sim.add_argument("--config", required=True, type=Path)
    sim.add_argument("--method", required=True, choices=METHODS)
    sim.add_argument("--out", required=True, type=Path)

    cmp_ = sub.add_parser("compare", help="run pmp, direct-1 and direct-10 and tabulate them")
    cmp_.add_argument("--config", required=True, type=Path)
    cmp_.add_argument("--out", required=True, type=Path)

    ver = sub.add_parser("verify", help="run the verification battery")
    ver.add_argument("--config", required=True, type=Path)
    ver.add_argument("--corrupt-jacobian", action="store_true", help=argparse.SUPPRESS)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        if args.command == "simulate":
            artifacts = cmd_simulate(cfg, args.method, args.out)
            _print_summary([artifacts.summary])
            print(f"wrote {artifacts.trajectory_csv}, {artifacts.diagnostics_csv}, {artifacts.summary_csv}")
            return 0
        if args.command == "compare":
            _print_summary(cmd_compare(cfg, args.out))
            print(f"wrote {args.out / 'comparison.csv'}")
            return 0
        return cmd_verify(cfg, corrupted_jacobian=args.corrupt_jacobian)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NMPCError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
