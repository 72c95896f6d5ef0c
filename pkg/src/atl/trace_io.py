"""CSV serialization of simulation traces (17 significant digits, lossless)."""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .simulate import SimulationTrace, trace_columns


def format_trace(trace: SimulationTrace) -> str:
    buf = io.StringIO()
    buf.write(",".join(trace_columns(trace.m, trace.n)) + "\n")
    for row in trace.data:
        buf.write(",".join(f"{v:.17g}" for v in row) + "\n")
    return buf.getvalue()


def write_trace(trace: SimulationTrace, path) -> None:
    Path(path).write_text(format_trace(trace))


def _dims_from_header(cols):
    m = sum(1 for c in cols if c.startswith("y_star_"))
    nm = sum(1 for c in cols if c.startswith("x_"))
    if m == 0 or nm % m:
        raise ConfigError("trace header does not describe a canonical state")
    return m, nm // m


def read_trace(path) -> SimulationTrace:
    """Inverse of :func:`write_trace` (verdict metadata is not stored in the CSV)."""
    lines = Path(path).read_text().splitlines()
    cols = lines[0].split(",")
    m, n = _dims_from_header(cols)
    if cols != trace_columns(m, n):
        raise ConfigError("trace header does not match the documented column order")
    data = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]], dtype=float)
    return SimulationTrace(m, n, data.reshape(-1, len(cols)))
