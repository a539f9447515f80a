"""Run telemetry: per-iteration trace records, solver reports, and the trace CSV.

The trace CSV schema is stable and documented: one header row with the fixed
column order below, one record per iteration plus the initial state, blank
cells for fields a given algorithm does not produce. Floats are written with
``repr`` so a rerun with the same config and seed is byte-identical and the
file round-trips losslessly through :func:`load_trace_csv`.
"""
from __future__ import annotations

import os
import tempfile
from dataclasses import dataclass, field
from typing import Optional

TRACE_COLUMNS = (
    "iter", "eta", "lower", "upper", "obj_gap", "violation",
    "fevals", "gevals", "qp_solves", "lp_solves",
)

_INT_COLUMNS = {"iter", "fevals", "gevals", "qp_solves", "lp_solves"}


@dataclass
class SubproblemCounters:
    """Cumulative QP/LP solve counts for one run."""

    qp_solves: int = 0
    lp_solves: int = 0


@dataclass(frozen=True)
class TraceRecord:
    iter: int
    eta: Optional[float]
    lower: Optional[float]
    upper: Optional[float]
    obj_gap: Optional[float]
    violation: float
    fevals: int
    gevals: int
    qp_solves: int
    lp_solves: int


@dataclass
class SolverReport:
    """Full telemetry of one solver run.

    ``status`` is "converged" on success; anything else ("max_iters",
    "max_epochs", "stalled") means the best iterate was still returned but the
    target accuracy is not certified. Cumulative counters are measured against
    the problem's oracle counters at run entry.
    """

    algorithm: str
    status: str
    records: list = field(default_factory=list)
    wall_time: float = 0.0
    level_iterates: Optional[list] = None

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    @property
    def iterations(self) -> int:
        return max(0, len(self.records) - 1)

    @property
    def final(self) -> Optional[TraceRecord]:
        return self.records[-1] if self.records else None

    @property
    def fevals(self) -> int:
        return self.records[-1].fevals if self.records else 0

    @property
    def gevals(self) -> int:
        return self.records[-1].gevals if self.records else 0


def _format_cell(name: str, value) -> str:
    if value is None:
        return ""
    if name in _INT_COLUMNS:
        return str(int(value))
    return repr(float(value))


def trace_csv_text(records) -> str:
    lines = [",".join(TRACE_COLUMNS)]
    for rec in records:
        lines.append(",".join(_format_cell(c, getattr(rec, c)) for c in TRACE_COLUMNS))
    return "\n".join(lines) + "\n"


def write_atomic_text(path: str, text: str) -> None:
    """Write via a temp file and rename so partial files are never left behind."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_trace_csv(path: str, records) -> None:
    write_atomic_text(path, trace_csv_text(records))


def load_trace_csv(path: str) -> list:
    """Read a trace CSV back into TraceRecord objects (inverse of the writer)."""
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    header = tuple(lines[0].split(","))
    if header != TRACE_COLUMNS:
        raise ValueError(f"unexpected trace header: {header}")
    records = []
    for ln in lines[1:]:
        cells = ln.split(",")
        kwargs = {}
        for name, cell in zip(TRACE_COLUMNS, cells):
            if cell == "":
                kwargs[name] = None
            elif name in _INT_COLUMNS:
                kwargs[name] = int(cell)
            else:
                kwargs[name] = float(cell)
        records.append(TraceRecord(**kwargs))
    return records
