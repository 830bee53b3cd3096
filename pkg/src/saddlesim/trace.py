"""Run traces and their CSV serialization.

A trace is the per-round record of a solver run: communication and local
iteration counters plus whatever convergence metrics were sampled.  Traces
round-trip through CSV files with a fixed header; missing metrics are
stored as NaN and serialized as empty fields.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

from .core import SplitPoint

__all__ = ["TraceRow", "RunTrace", "TraceFormatError", "write_trace", "load_trace", "CSV_HEADER"]

CSV_HEADER = "round,comm_rounds,local_iters,dist_sq,gap,consensus_err,wall_seconds"
_COLUMNS = CSV_HEADER.split(",")


class TraceFormatError(ValueError):
    """A trace file does not match the expected layout."""


@dataclass
class TraceRow:
    round: int
    comm_rounds: int
    local_iters: int
    dist_sq: float = math.nan
    gap: float = math.nan
    consensus_err: float = math.nan
    wall_seconds: float = 0.0


@dataclass
class RunTrace:
    """Per-round records plus the terminal state of one solver run."""

    method: str
    rows: List[TraceRow] = field(default_factory=list)
    final: Optional[SplitPoint] = None
    final_nodes: Optional[list] = None
    u_history: Optional[list] = None

    def validate(self) -> None:
        prev_round = None
        prev_comm = None
        for row in self.rows:
            if prev_round is not None and row.round <= prev_round:
                raise TraceFormatError("round column must be strictly increasing")
            if prev_comm is not None and row.comm_rounds < prev_comm:
                raise TraceFormatError("comm_rounds column must be nondecreasing")
            prev_round, prev_comm = row.round, row.comm_rounds

    def first_round_reaching(self, dist_sq: float) -> Optional[TraceRow]:
        """Earliest recorded row whose distance metric is at or below a level."""
        for row in self.rows:
            if not math.isnan(row.dist_sq) and row.dist_sq <= dist_sq:
                return row
        return None


def _fmt(v: float) -> str:
    if math.isnan(v):
        return ""
    return f"{v:.17g}"


def write_trace(trace: RunTrace, path) -> None:
    """Write rows as CSV; floats carry 17 significant digits, NaN is empty."""
    if not trace.rows:
        raise TraceFormatError("refusing to write an empty trace")
    trace.validate()
    path = Path(path)
    lines = [CSV_HEADER]
    for r in trace.rows:
        lines.append(
            f"{r.round},{r.comm_rounds},{r.local_iters},"
            f"{_fmt(r.dist_sq)},{_fmt(r.gap)},{_fmt(r.consensus_err)},{_fmt(r.wall_seconds)}"
        )
    path.write_text("\n".join(lines) + "\n")


def load_trace(path) -> RunTrace:
    """Load a CSV trace, validating the header and the row invariants."""
    path = Path(path)
    with open(path) as fh:
        header = fh.readline().rstrip("\n")
        if header != CSV_HEADER:
            got = header.split(",")
            for i, want in enumerate(_COLUMNS):
                if i >= len(got) or got[i] != want:
                    found = got[i] if i < len(got) else "<missing>"
                    raise TraceFormatError(
                        f"{path}: header column {i} is {found!r}, expected {want!r}"
                    )
            raise TraceFormatError(f"{path}: header has extra columns")
        rows = []
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != len(_COLUMNS):
                raise TraceFormatError(f"{path}:{lineno}: expected {len(_COLUMNS)} fields")
            try:
                rows.append(TraceRow(
                    round=int(parts[0]),
                    comm_rounds=int(parts[1]),
                    local_iters=int(parts[2]),
                    dist_sq=float(parts[3]) if parts[3] else math.nan,
                    gap=float(parts[4]) if parts[4] else math.nan,
                    consensus_err=float(parts[5]) if parts[5] else math.nan,
                    wall_seconds=float(parts[6]) if parts[6] else 0.0,
                ))
            except ValueError as exc:
                raise TraceFormatError(f"{path}:{lineno}: {exc}") from exc
    trace = RunTrace(method=path.stem, rows=rows)
    trace.validate()
    return trace
