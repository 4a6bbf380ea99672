"""State-space model documents: JSON parsing, validation and printing.

A model file looks like::

    {
      "name": "two-part redundant",
      "parameters": {"lam": 1.0, "tau": 1.0},
      "initial": "S0",
      "states": [{"name": "S0"}, {"name": "S1"},
                 {"name": "S2", "absorbing": true}],
      "transitions": [
        {"id": "fail2", "from": "S0", "to": "S1",
         "dist": {"kind": "exponential", "rate": "2*lam"}},
        {"id": "repair", "from": "S1", "to": "S0",
         "dist": {"kind": "fixed", "delay": "tau"}},
        {"id": "fail1", "from": "S1", "to": "S2",
         "dist": {"kind": "exponential", "rate": "lam"}}
      ],
      "artificial_renewal": {"from": "S2", "to": "S0", "rate": 1.0}
    }

Numeric distribution fields may be arithmetic expressions over
``parameters``. An exponential whose rate evaluates to exactly zero marks the
transition inactive (it is kept in the document but ignored by analyses).
"""

from __future__ import annotations

import ast
import copy
import json
import math
import operator
from dataclasses import dataclass, field
from typing import Optional

from . import distributions as dist_mod
from .distributions import DistributionSpec
from .errors import DomainError, ModelValidationError

__all__ = [
    "State",
    "Transition",
    "Renewal",
    "StateSpaceModel",
    "parse_model",
    "load_model",
    "dump_model",
    "evaluate_expression",
]

_BINOPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
}
_FUNCS = {"exp": math.exp, "log": math.log, "sqrt": math.sqrt, "expm1": math.expm1,
          "log1p": math.log1p, "gamma": math.gamma}


def evaluate_expression(expr, parameters: dict) -> float:
    """Evaluate a number or a small arithmetic expression over ``parameters``."""
    if isinstance(expr, bool):
        raise DomainError(f"expected a number, got {expr!r}")
    if isinstance(expr, (int, float)):
        return float(expr)
    if not isinstance(expr, str):
        raise DomainError(f"expected a number or expression string, got {expr!r}")
    try:
        tree = ast.parse(expr, mode="eval")
    except SyntaxError as exc:
        raise DomainError(f"bad expression {expr!r}: {exc.msg}") from None

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.Name):
            if node.id not in parameters:
                raise DomainError(f"unknown parameter {node.id!r} in {expr!r}")
            return evaluate_expression(parameters[node.id], {})
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            v = ev(node.operand)
            return -v if isinstance(node.op, ast.USub) else v
        if (isinstance(node, ast.Call) and isinstance(node.func, ast.Name)
                and node.func.id in _FUNCS and len(node.args) == 1 and not node.keywords):
            return _FUNCS[node.func.id](ev(node.args[0]))
        raise DomainError(f"unsupported syntax in expression {expr!r}")

    try:
        return float(ev(tree))
    except (ZeroDivisionError, OverflowError, ValueError) as exc:
        if isinstance(exc, DomainError):
            raise
        raise DomainError(f"cannot evaluate {expr!r}: {exc}") from None


@dataclass(frozen=True)
class State:
    name: str
    absorbing: bool = False
    regeneration: bool = True


@dataclass(frozen=True)
class Transition:
    id: str
    source: str
    target: str
    dist: Optional[DistributionSpec]
    dist_source: dict = field(compare=True, hash=False)
    clock: str = "restart"
    clock_id: Optional[str] = None

    @property
    def active(self) -> bool:
        return self.dist is not None


@dataclass(frozen=True)
class Renewal:
    source: str
    target: str
    rate: float
    rate_source: object = None


@dataclass(frozen=True, eq=True)
class StateSpaceModel:
    """Validated model; the single source of truth for every analysis."""

    states: tuple
    transitions: tuple
    initial: str
    parameters: dict = field(default_factory=dict, hash=False)
    artificial_renewal: Optional[Renewal] = None
    name: str = ""

    __hash__ = None

    @property
    def n(self) -> int:
        return len(self.states)

    @property
    def state_names(self) -> list:
        return [s.name for s in self.states]

    def index(self, name: str) -> int:
        for i, s in enumerate(self.states):
            if s.name == name:
                return i
        raise KeyError(name)

    def state(self, name: str) -> State:
        return self.states[self.index(name)]

    @property
    def absorbing(self) -> frozenset:
        return frozenset(i for i, s in enumerate(self.states) if s.absorbing)

    @property
    def active_transitions(self) -> list:
        return [t for t in self.transitions if t.active]

    def transition(self, tid: str) -> Transition:
        for t in self.transitions:
            if t.id == tid:
                return t
        raise KeyError(tid)

    def outflows(self, state: str) -> list:
        return [t for t in self.transitions if t.active and t.source == state]

    def inflows(self, state: str) -> list:
        return [t for t in self.transitions if t.active and t.target == state]

    def mean_rates(self) -> dict:
        """Uncorrected exponential rates, one over each holding-time mean."""
        return {t.id: 1.0 / t.dist.mean for t in self.active_transitions}

    # -- serialisation ----------------------------------------------------

    def to_document(self) -> dict:
        doc = {}
        if self.name:
            doc["name"] = self.name
        if self.parameters:
            doc["parameters"] = copy.deepcopy(self.parameters)
        doc["initial"] = self.initial
        doc["states"] = []
        for s in self.states:
            entry = {"name": s.name}
            if s.absorbing:
                entry["absorbing"] = True
            if not s.regeneration:
                entry["regeneration"] = False
            doc["states"].append(entry)
        doc["transitions"] = []
        for t in self.transitions:
            entry = {"id": t.id, "from": t.source, "to": t.target,
                     "dist": copy.deepcopy(t.dist_source)}
            if t.clock != "restart":
                entry["clock"] = t.clock
            if t.clock_id is not None:
                entry["clock_id"] = t.clock_id
            doc["transitions"].append(entry)
        if self.artificial_renewal is not None:
            r = self.artificial_renewal
            doc["artificial_renewal"] = {
                "from": r.source, "to": r.target,
                "rate": r.rate if r.rate_source is None else r.rate_source,
            }
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_document(), indent=2)

    @classmethod
    def from_document(cls, doc) -> "StateSpaceModel":
        return _build(doc)

    def with_renewal(self, target: Optional[str] = None, rate: float = 1.0) -> "StateSpaceModel":
        """Copy with an artificial transition from the absorbing state back to ``target``."""
        absorbing = [s.name for s in self.states if s.absorbing]
        if not absorbing:
            raise DomainError("model has no absorbing state")
        target = target or self.initial
        doc = self.to_document()
        if len(absorbing) > 1:
            raise DomainError("renewal needs a single absorbing state; merge them first")
        doc["artificial_renewal"] = {"from": absorbing[0], "to": target, "rate": rate}
        return _build(doc)


def _dist_from_source(src, parameters):
    if not isinstance(src, dict):
        raise DomainError("dist must be an object")
    kind = src.get("kind")
    numeric = {"kind": kind}
    for key, value in src.items():
        if key == "kind":
            continue
        numeric[key] = evaluate_expression(value, parameters)
    if kind == "exponential" and numeric.get("rate") == 0.0 and len(numeric) == 2:
        return None
    return dist_mod.from_json(numeric)


def _build(doc) -> StateSpaceModel:
    errors = []
    if not isinstance(doc, dict):
        raise ModelValidationError("model document must be a JSON object")
    known = {"name", "parameters", "initial", "states", "transitions", "artificial_renewal",
             "description"}
    for key in doc:
        if key not in known:
            errors.append(f"unknown top-level key {key!r}")

    parameters = doc.get("parameters", {}) or {}
    if not isinstance(parameters, dict):
        errors.append("parameters must be an object")
        parameters = {}
    for pname, pval in parameters.items():
        try:
            evaluate_expression(pval, {})
        except DomainError as exc:
            errors.append(f"parameter {pname!r}: {exc}")

    states = []
    seen = set()
    raw_states = doc.get("states")
    if not isinstance(raw_states, list) or not raw_states:
        errors.append("states must be a non-empty list")
        raw_states = []
    for k, s in enumerate(raw_states):
        if not isinstance(s, dict) or not isinstance(s.get("name"), str):
            errors.append(f"state #{k}: needs a string name")
            continue
        name = s["name"]
        extra = set(s) - {"name", "absorbing", "regeneration"}
        if extra:
            errors.append(f"state {name!r}: unknown keys {sorted(extra)}")
        if name in seen:
            errors.append(f"state {name!r}: duplicate name")
            continue
        seen.add(name)
        absorbing = s.get("absorbing", False)
        regeneration = s.get("regeneration", True)
        if not isinstance(absorbing, bool) or not isinstance(regeneration, bool):
            errors.append(f"state {name!r}: absorbing/regeneration must be booleans")
            continue
        states.append(State(name, absorbing, regeneration))
    absorbing_names = {s.name for s in states if s.absorbing}
    if states and len(absorbing_names) == len(states):
        errors.append("model needs at least one non-absorbing state")

    transitions = []
    tids = set()
    raw_trans = doc.get("transitions")
    if not isinstance(raw_trans, list):
        errors.append("transitions must be a list")
        raw_trans = []
    for k, t in enumerate(raw_trans):
        if not isinstance(t, dict):
            errors.append(f"transition #{k}: must be an object")
            continue
        tid = t.get("id", f"t{k}")
        label = f"transition {tid!r}"
        extra = set(t) - {"id", "from", "to", "dist", "clock", "clock_id"}
        if extra:
            errors.append(f"{label}: unknown keys {sorted(extra)}")
        if not isinstance(tid, str):
            errors.append(f"transition #{k}: id must be a string")
            continue
        if tid in tids:
            errors.append(f"{label}: duplicate id")
        tids.add(tid)
        src, dst = t.get("from"), t.get("to")
        ok = True
        for role, name in (("from", src), ("to", dst)):
            if name not in seen:
                errors.append(f"{label}: undeclared state {name!r} in '{role}'")
                ok = False
        if ok and src == dst:
            errors.append(f"{label}: self-loop on {src!r}")
            ok = False
        if ok and src in absorbing_names:
            errors.append(f"{label}: absorbing state {src!r} cannot have outflows")
            ok = False
        clock = t.get("clock", "restart")
        clock_id = t.get("clock_id")
        if clock not in ("restart", "continue"):
            errors.append(f"{label}: clock must be 'restart' or 'continue'")
            ok = False
        if clock_id is not None and not isinstance(clock_id, str):
            errors.append(f"{label}: clock_id must be a string")
            ok = False
        if clock == "continue" and clock_id is None:
            errors.append(f"{label}: continue clock needs a clock_id")
            ok = False
        try:
            d = _dist_from_source(t.get("dist"), parameters)
        except DomainError as exc:
            errors.append(f"{label}: {exc}")
            continue
        if ok:
            transitions.append(Transition(tid, src, dst, d, copy.deepcopy(t.get("dist")),
                                          clock, clock_id))

    restart_clocks = {t.clock_id for t in transitions if t.clock == "restart" and t.clock_id}
    for t in transitions:
        if t.clock == "continue" and t.clock_id not in restart_clocks:
            errors.append(f"transition {t.id!r}: orphan clock_id {t.clock_id!r} "
                          f"(no restart transition introduces it)")

    initial = doc.get("initial")
    if initial is None and states:
        initial = states[0].name
    if initial not in seen:
        errors.append(f"initial state {initial!r} is not declared")
    elif initial in absorbing_names:
        errors.append(f"initial state {initial!r} is absorbing")

    renewal = None
    raw_ren = doc.get("artificial_renewal")
    if raw_ren is not None:
        if not isinstance(raw_ren, dict):
            errors.append("artificial_renewal must be an object")
        else:
            rsrc, rdst = raw_ren.get("from"), raw_ren.get("to")
            if rsrc not in absorbing_names:
                errors.append(f"artificial_renewal: 'from' {rsrc!r} must be an absorbing state")
            if rdst not in seen or rdst in absorbing_names:
                errors.append(f"artificial_renewal: 'to' {rdst!r} must be a non-absorbing state")
            try:
                rate = evaluate_expression(raw_ren.get("rate", 1.0), parameters)
                if not rate > 0.0:
                    errors.append("artificial_renewal: rate must be > 0")
                src_val = raw_ren.get("rate", 1.0)
                renewal = Renewal(rsrc, rdst, rate,
                                  src_val if isinstance(src_val, str) else None)
            except DomainError as exc:
                errors.append(f"artificial_renewal: {exc}")

    if errors:
        raise ModelValidationError(errors)
    return StateSpaceModel(
        states=tuple(states),
        transitions=tuple(transitions),
        initial=initial,
        parameters=copy.deepcopy(parameters),
        artificial_renewal=renewal,
        name=doc.get("name", ""),
    )


def parse_model(text) -> StateSpaceModel:
    """Parse and validate a UTF-8 JSON model.

    Raises :class:`ModelValidationError` listing every problem found.
    """
    if isinstance(text, bytes):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ModelValidationError(f"model is not valid UTF-8: {exc}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelValidationError(
            f"JSON syntax error at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from None
    return _build(doc)


def load_model(path) -> StateSpaceModel:
    with open(path, "rb") as fh:
        return parse_model(fh.read())


def dump_model(model: StateSpaceModel) -> str:
    return model.to_json()
