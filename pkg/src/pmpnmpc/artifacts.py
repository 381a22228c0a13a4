"""Plot-ready CSV output for closed-loop runs.

Files are written to a temporary sibling and renamed into place. Numbers use
``repr`` (shortest round-trip form, always a ``.`` decimal point), so output
does not depend on the locale. Every file starts with ``#`` metadata lines.
"""

from __future__ import annotations

import csv
import io
import os
import tempfile
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from .diagnostics import DiagnosticsConfig, DiagnosticsReport
from .hamiltonian import OcpSpec
from .loop import ClosedLoopLog

__all__ = [
    "RunArtifacts",
    "package_version",
    "write_csv",
    "read_csv",
    "trajectory_table",
    "summarize",
    "write_run",
    "write_comparison",
    "SUMMARY_COLUMNS",
    "COMPARISON_COLUMNS",
]

SUMMARY_COLUMNS = (
    "method", "samples", "aborted", "rms_full", "rms_last_quarter", "constraint_margin",
    "mean_solve_time_s", "max_solve_time_s", "mean_iters", "max_iters", "converged_fraction",
)
COMPARISON_COLUMNS = (
    "method", "rms_full", "rms_last_quarter", "mean_solve_time_s", "max_solve_time_s", "constraint_margin",
    "mean_iters", "converged_fraction",
)


def package_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


def _cell(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence], meta: Optional[Dict[str, object]] = None) -> Path:
    """Write ``# key=value`` lines, the header and the rows, then rename into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    for key, value in (meta or {}).items():
        buf.write(f"# {key}={_cell(value)}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_cell(v) for v in row])
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(buf.getvalue())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def read_csv(path):
    """Return ``(meta, header, rows)`` with rows as lists of strings."""
    meta: Dict[str, str] = {}
    with open(path, encoding="utf-8", newline="") as fh:
        lines = fh.read().splitlines()
    body = []
    for line in lines:
        if line.startswith("#") and not body:
            key, _, value = line[1:].strip().partition("=")
            meta[key] = value
        else:
            body.append(line)
    reader = csv.reader(body)
    header = next(reader)
    return meta, header, [row for row in reader]


def trajectory_table(log: ClosedLoopLog):
    n_x = log.states.shape[1]
    n_u = log.inputs.shape[1]
    n_c = log.constraints.shape[1]
    header = (["t"] + [f"x_{i + 1}" for i in range(n_x)] + [f"xref_{i + 1}" for i in range(n_x)]
              + [f"u_{i + 1}" for i in range(n_u)] + [f"e_{i + 1}" for i in range(n_x)]
              + [f"C_{i + 1}" for i in range(n_c)] + ["residual", "iters", "solve_time_s"])
    rows = []
    for k in range(len(log)):
        rows.append([log.times[k], *log.states[k], *log.references[k], *log.inputs[k], *log.errors[k],
                     *log.constraints[k], log.residuals[k], int(log.iterations[k]), log.solve_times[k]])
    return header, rows


def summarize(log: ClosedLoopLog) -> Dict[str, object]:
    empty = len(log) == 0
    return {
        "method": log.method,
        "samples": len(log),
        "aborted": bool(log.aborted),
        "rms_full": log.tracking_rms() if not empty else float("nan"),
        "rms_last_quarter": log.tracking_rms(0.75) if not empty else float("nan"),
        "constraint_margin": log.constraint_margin(),
        "mean_solve_time_s": float(np.mean(log.solve_times)) if not empty else float("nan"),
        "max_solve_time_s": float(np.max(log.solve_times)) if not empty else float("nan"),
        "mean_iters": float(np.mean(log.iterations)) if not empty else float("nan"),
        "max_iters": int(np.max(log.iterations)) if not empty else 0,
        "converged_fraction": float(np.mean(log.converged)) if not empty else float("nan"),
    }


@dataclass
class RunArtifacts:
    trajectory_csv: Path
    diagnostics_csv: Optional[Path]
    summary_csv: Path
    summary: Dict[str, object] = field(default_factory=dict)


def _diagnostics_rows(log: ClosedLoopLog, rep: DiagnosticsReport):
    flagged: Dict[int, List[str]] = {}
    for k, name in rep.flags:
        flagged.setdefault(k, []).append(name)
    header = ["k", "t", "V", "head_integral", "zeta", "identity_rel_error", "terminal_norm_P", "flags"]
    rows = []
    K = len(log)
    for k in range(K):
        last = k == K - 1
        rows.append([k, log.times[k], rep.v_sequence[k], rep.head_integrals[k],
                     float("nan") if last else rep.zeta_sequence[k],
                     float("nan") if last else rep.identity_errors[k],
                     rep.terminal_norms[k], "|".join(flagged.get(k, []))])
    return header, rows


def write_run(out_dir, log: ClosedLoopLog, meta: Dict[str, object], diag: Optional[DiagnosticsReport] = None,
              diag_cfg: Optional[DiagnosticsConfig] = None, suffix: str = "") -> RunArtifacts:
    """Write ``trajectory``, ``diagnostics`` and ``summary`` CSVs for one run."""
    out_dir = Path(out_dir)
    meta = dict(meta, method=log.method)
    header, rows = trajectory_table(log)
    traj = write_csv(out_dir / f"trajectory{suffix}.csv", header, rows, meta)
    diag_path = None
    if diag is not None:
        dmeta = dict(meta)
        if diag_cfg is not None:
            dmeta.update(gamma=diag_cfg.lipschitz_estimate, eps_c=diag_cfg.terminal_bound, p_min=diag_cfg.p_min)
        dmeta.update(nu_bar=diag.nu_bar, zeta_bound=diag.zeta_bound, a_bar=diag.a_bar,
                     plateau_bound=diag.plateau_bound, flag_count=len(diag.flags))
        dh, drows = _diagnostics_rows(log, diag)
        diag_path = write_csv(out_dir / f"diagnostics{suffix}.csv", dh, drows, dmeta)
    summary = summarize(log)
    summary_path = write_csv(out_dir / f"summary{suffix}.csv", SUMMARY_COLUMNS,
                             [[summary[c] for c in SUMMARY_COLUMNS]], meta)
    return RunArtifacts(traj, diag_path, summary_path, summary)


def write_comparison(path, summaries: Sequence[Dict[str, object]], meta: Dict[str, object]) -> Path:
    """One row per method; timing columns are the only non-reproducible entries."""
    return write_csv(path, COMPARISON_COLUMNS, [[s[c] for c in COMPARISON_COLUMNS] for s in summaries], meta)
