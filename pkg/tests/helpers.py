"""Shared test helpers: bundled models and random model generators."""

from __future__ import annotations

import json
from importlib import resources

import numpy as np

from flowbalance import load_model, parse_model


def bundled_path(name: str) -> str:
    return str(resources.files("flowbalance") / "models" / f"{name}.json")


def bundled(name: str):
    return load_model(bundled_path(name))


def bundled_doc(name: str) -> dict:
    with open(bundled_path(name), encoding="utf-8") as fh:
        return json.load(fh)


def with_params(name: str, **params):
    doc = bundled_doc(name)
    doc["parameters"].update(params)
    return parse_model(json.dumps(doc))


def _random_dist(rng, allow_fixed: bool):
    kinds = ["exponential", "weibull", "lognormal"] + (["fixed"] if allow_fixed else [])
    kind = kinds[rng.integers(len(kinds))]
    mean = float(rng.uniform(0.3, 3.0))
    if kind == "exponential":
        return {"kind": "exponential", "rate": 1.0 / mean}
    if kind == "fixed":
        return {"kind": "fixed", "delay": mean}
    if kind == "weibull":
        return {"kind": "weibull", "shape": float(rng.uniform(0.6, 3.0)), "mean": mean}
    return {"kind": "lognormal", "mean": mean, "scv": float(rng.uniform(0.2, 3.0))}


def random_semi_markov(seed: int, n_min: int = 3, n_max: int = 6):
    """Irreducible model with mixed holding-time laws and no absorbing state.

    A ring guarantees irreducibility; extra chords add races. At most one
    fixed delay leaves each state so no transition is starved.
    """
    rng = np.random.default_rng(seed)
    n = int(rng.integers(n_min, n_max + 1))
    names = [f"S{i}" for i in range(n)]
    edges = [(i, (i + 1) % n) for i in range(n)]
    for _ in range(int(rng.integers(0, n + 1))):
        i, j = (int(x) for x in rng.choice(n, size=2, replace=False))
        if (i, j) not in edges:
            edges.append((i, j))
    transitions = []
    fixed_used = set()
    for e, (i, j) in enumerate(edges):
        dist = _random_dist(rng, allow_fixed=i not in fixed_used)
        if dist["kind"] == "fixed":
            fixed_used.add(i)
        transitions.append({"id": f"t{e}", "from": names[i], "to": names[j], "dist": dist})
    doc = {"states": [{"name": s} for s in names], "transitions": transitions}
    return parse_model(json.dumps(doc))


def random_exponential(seed: int, absorbing: bool = False):
    """Random irreducible all-exponential model, optionally with an absorbing sink."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 6))
    names = [f"S{i}" for i in range(n)]
    edges = {(i, (i + 1) % n) for i in range(n)} if n > 1 else set()
    for _ in range(n):
        i, j = (int(x) for x in rng.choice(n, size=2, replace=False))
        edges.add((i, j))
    transitions = [{"id": f"t{i}_{j}", "from": names[i], "to": names[j],
                    "dist": {"kind": "exponential", "rate": float(rng.uniform(0.1, 3.0))}}
                   for i, j in sorted(edges)]
    states = [{"name": s} for s in names]
    if absorbing:
        states.append({"name": "F", "absorbing": True})
        for i in sorted({int(x) for x in rng.choice(n, size=int(rng.integers(1, n + 1)))}):
            transitions.append({"id": f"fail{i}", "from": names[i], "to": "F",
                                "dist": {"kind": "exponential",
                                         "rate": float(rng.uniform(0.05, 1.0))}})
    return parse_model(json.dumps({"states": states, "transitions": transitions}))
