"""Figure rendering from trace CSVs."""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

CSV_HEADER = ["round", "comm_rounds", "local_iters", "dist_sq", "gap",
              "consensus_err", "wall_seconds"]
X_COLUMNS = ("comm_rounds", "round", "local_iters")
Y_COLUMNS = ("dist_sq", "gap", "consensus_err")

# fixed per-series styling so reruns produce identical figures
_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]
_MARKERS = ["o", "s", "^", "d", "v", "x"]


class TraceDataError(ValueError):
    """A trace file is malformed or lacks the requested data."""


class EmptyTraceError(TraceDataError):
    """A trace file has no data rows."""


@dataclass(frozen=True)
class FigureSpec:
    """What to draw: a list of (trace path, label) plus axis choices."""

    traces: Tuple[Tuple[str, str], ...]
    x_column: str = "comm_rounds"
    y_column: str = "dist_sq"
    log_y: bool = True
    title: Optional[str] = None
    output: str = "figure.png"

    def __post_init__(self):
        if not self.traces:
            raise ValueError("a figure needs at least one trace")
        if self.x_column not in X_COLUMNS:
            raise ValueError(f"x column must be one of {X_COLUMNS}, got {self.x_column!r}")
        if self.y_column not in Y_COLUMNS:
            raise ValueError(f"y column must be one of {Y_COLUMNS}, got {self.y_column!r}")
        object.__setattr__(self, "traces", tuple((str(p), str(l)) for p, l in self.traces))

    @staticmethod
    def from_dict(doc: dict) -> "FigureSpec":
        traces = []
        for entry in doc.get("traces", []):
            if isinstance(entry, dict):
                traces.append((entry["path"], entry.get("label", Path(entry["path"]).stem)))
            else:
                path, _, label = str(entry).partition(":")
                traces.append((path, label or Path(path).stem))
        return FigureSpec(
            traces=tuple(traces),
            x_column=doc.get("x", "comm_rounds"),
            y_column=doc.get("y", "dist_sq"),
            log_y=bool(doc.get("log_y", True)),
            title=doc.get("title"),
            output=doc.get("output", "figure.png"),
        )


def _load_columns(path: str, x_column: str, y_column: str):
    """Read one trace, returning the two requested columns as arrays."""
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise TraceDataError(f"cannot read trace {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != CSV_HEADER:
            raise TraceDataError(f"{path}: unexpected header {header!r}")
        xi = CSV_HEADER.index(x_column)
        yi = CSV_HEADER.index(y_column)
        xs: List[float] = []
        ys: List[float] = []
        for lineno, row in enumerate(reader, start=2):
            if not row or row == [""]:
                continue
            if len(row) != len(CSV_HEADER):
                raise TraceDataError(f"{path}:{lineno}: expected {len(CSV_HEADER)} fields")
            try:
                xs.append(float(row[xi]))
                ys.append(float(row[yi]) if row[yi] else math.nan)
            except ValueError as exc:
                raise TraceDataError(f"{path}:{lineno}: {exc}") from exc
    if not xs:
        raise EmptyTraceError(f"{path}: no data rows")
    x = np.asarray(xs)
    y = np.asarray(ys)
    keep = ~np.isnan(y)
    if not keep.any():
        raise TraceDataError(f"{path}: column {y_column!r} holds no values")
    return x[keep], y[keep]


def render(spec: FigureSpec) -> Path:
    """Render the figure to ``spec.output`` (PNG, 150 dpi) atomically.

    The output file appears only after a fully successful render; any
    failure leaves no partial file behind.
    """
    series = [(_load_columns(path, spec.x_column, spec.y_column), label)
              for path, label in spec.traces]

    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    try:
        for index, ((x, y), label) in enumerate(series):
            ax.plot(x, y,
                    color=_COLORS[index % len(_COLORS)],
                    marker=_MARKERS[index % len(_MARKERS)],
                    markersize=3.5,
                    markevery=max(1, len(x) // 25),
                    linewidth=1.4,
                    label=label)
        if spec.log_y:
            ax.set_yscale("log")
        ax.set_xlabel(spec.x_column.replace("_", " "))
        ax.set_ylabel(spec.y_column.replace("_", " "))
        if spec.title:
            ax.set_title(spec.title)
        ax.grid(True, which="both", alpha=0.3)
        ax.legend()
        fig.tight_layout()

        output = Path(spec.output)
        tmp = output.with_name(output.name + ".tmp")
        try:
            fig.savefig(tmp, dpi=150, format="png")
            os.replace(tmp, output)
        except OSError:
            tmp.unlink(missing_ok=True)
            raise
        return output
    finally:
        plt.close(fig)
