"""Publication-style convergence figures from solver trace CSVs.

Consumes the delimited traces written by the simulator (header
``round,comm_rounds,local_iters,dist_sq,gap,consensus_err,wall_seconds``)
and renders one raster figure overlaying several methods, typically the
distance metric against communication exchanges on a log scale.
"""

from .render import FigureSpec, TraceDataError, render

__version__ = "0.1.0"

__all__ = ["FigureSpec", "TraceDataError", "render"]
