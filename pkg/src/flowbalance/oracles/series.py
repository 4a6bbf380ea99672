"""CSV output of ``(t, value)`` trajectories."""

from __future__ import annotations

import csv
import io

import numpy as np

from ..errors import DomainError


def fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_series(times, values, stream=None) -> str:
    """Write header ``t,value`` then one row per point; returns the text."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if times.shape != values.shape or times.ndim != 1:
        raise DomainError("times and values must be 1-d and the same length")
    if np.any(np.diff(times) <= 0.0):
        raise DomainError("series times must be increasing")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "value"])
    for t, v in zip(times, values):
        w.writerow([fmt(t), fmt(v)])
    text = buf.getvalue()
    if stream is not None:
        stream.write(text)
    return text
