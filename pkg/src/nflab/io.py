"""CSV output with shortest round-trip float formatting."""
from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


def format_value(v) -> str:
    """Render one cell; floats use ``repr`` so parsing them back is exact."""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    """Write a header row then data rows.  I/O errors propagate unchanged."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            if len(row) != len(header):
                raise ValueError(f"row has {len(row)} cells, header has {len(header)}")
            writer.writerow([format_value(v) for v in row])
    return path


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


TRACE_COLUMNS = ("t", "dt", "accepted", "diffusion", "metabolic", "pumping", "pressure",
                 "energy", "m_l2", "dtm_l2", "tv")


def trace_rows(trace) -> list[tuple]:
    rows = []
    for r in trace.rows:
        e = r.energy
        rows.append((r.t, r.dt, r.accepted, e.diffusion, e.metabolic, e.pumping, e.pressure,
                     e.total, r.m_l2, r.dtm_l2, r.tv))
    return rows


def write_trace(path, trace) -> Path:
    return write_csv(path, TRACE_COLUMNS, trace_rows(trace))
