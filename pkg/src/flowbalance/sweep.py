"""Parameter sweeps producing deterministic CSV."""

from __future__ import annotations

import copy
import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .analysis import ANALYSES
from .errors import DomainError, FlowBalanceError
from .model import StateSpaceModel
from .oracles import thread_count
from .oracles.series import fmt

__all__ = ["SweepSpec", "apply_parameter", "run_sweep", "sweep_csv"]


@dataclass(frozen=True)
class SweepSpec:
    """``parameter_path`` is dotted: ``parameters.q``,
    ``transitions.<id>.dist.<field>``, ``states.<name>.<field>`` or
    ``artificial_renewal.rate``."""

    parameter_path: str
    values: tuple
    analysis: str = "steady"
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(self.values))
        if not self.values:
            raise DomainError("sweep needs at least one value")
        if self.analysis not in ANALYSES:
            raise DomainError(f"analysis must be one of {sorted(ANALYSES)}")


def _locate(doc: dict, path: str):
    parts = path.split(".")
    node = doc
    i = 0
    while i < len(parts) - 1:
        key = parts[i]
        if key in ("transitions", "states") and isinstance(node.get(key), list):
            ident = "id" if key == "transitions" else "name"
            if i + 1 >= len(parts) - 1:
                raise DomainError(f"path {path!r} needs a field after the {key} entry")
            match = [e for e in node[key] if e.get(ident) == parts[i + 1]]
            if not match:
                raise DomainError(f"path {path!r}: no {key[:-1]} named {parts[i + 1]!r}")
            node = match[0]
            i += 2
            continue
        if not isinstance(node, dict) or key not in node:
            raise DomainError(f"path {path!r} does not resolve at {key!r}")
        node = node[key]
        i += 1
    last = parts[-1]
    if not isinstance(node, dict) or last not in node:
        raise DomainError(f"path {path!r} does not resolve at {last!r}")
    return node, last


def apply_parameter(model: StateSpaceModel, path: str, value) -> StateSpaceModel:
    """Copy of ``model`` with the field at ``path`` replaced by ``value``."""
    doc = copy.deepcopy(model.to_document())
    node, key = _locate(doc, path)
    node[key] = value
    return StateSpaceModel.from_document(doc)


def _point(model, spec, value):
    try:
        m = apply_parameter(model, spec.parameter_path, value)
        return "ok", ANALYSES[spec.analysis](m, **spec.options)
    except (FlowBalanceError, ValueError) as exc:
        return f"error: {type(exc).__name__}: {exc}", {}


def run_sweep(model: StateSpaceModel, spec: SweepSpec, threads=None) -> list:
    """One record per value, in spec order; failures are kept as status text."""
    _locate(copy.deepcopy(model.to_document()), spec.parameter_path)
    workers = min(thread_count(threads), len(spec.values))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            out = list(pool.map(lambda v: _point(model, spec, v), spec.values))
    else:
        out = [_point(model, spec, v) for v in spec.values]
    return [(v, status, rec) for v, (status, rec) in zip(spec.values, out)]


def sweep_csv(model: StateSpaceModel, spec: SweepSpec, threads=None) -> str:
    rows = run_sweep(model, spec, threads)
    columns = []
    for _, _, rec in rows:
        for c in rec:
            if c not in columns:
                columns.append(c)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([spec.parameter_path, "status"] + columns)
    for value, status, rec in rows:
        cells = [fmt(value) if isinstance(value, (int, float)) else value, status]
        for c in columns:
            x = rec.get(c)
            cells.append("" if x is None else (str(x) if isinstance(x, int) else fmt(x)))
        w.writerow(cells)
    return buf.getvalue()
