"""Corrections for states that are not regeneration points.

A non-regeneration state inherits a running clock from the state it was
entered from (a repair that already started, say). Each such state must have
a single outflow, so by the single-outflow property its rate only rescales
its own probability. The solve is therefore done in two passes: once with a
placeholder rate, then again with the rate implied by the inflow mix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .correction import equivalent_rate, race_for
from .ctmc import SteadyState, build_generator, steady_state
from .errors import DomainError, FlowBalanceError, UnsupportedStructureError

__all__ = [
    "InflowClass",
    "NonregenResult",
    "residual_mean_fixed_delay",
    "rate_from_balance",
    "weighted_inflow_rate",
    "inflow_classes",
    "solve_nonregen",
    "markov_approximation",
]


@dataclass(frozen=True)
class InflowClass:
    source_probability: float
    inflow_rate: float
    branch_rate: float
    transition: str = ""
    kind: str = "fresh"

    def __post_init__(self):
        for name in ("source_probability", "inflow_rate", "branch_rate"):
            if not getattr(self, name) > 0.0:
                raise DomainError(f"inflow class {name} must be > 0")

    @property
    def weight(self) -> float:
        return self.source_probability * self.inflow_rate


def residual_mean_fixed_delay(tau: float, lam: float) -> float:
    """Mean remaining delay given that an exponential(``lam``) event interrupted it.

    ``tau / F(tau) - 1/lam`` with ``F(tau) = 1 - exp(-lam tau)``.
    """
    if not (tau > 0.0 and lam > 0.0):
        raise DomainError("tau and lambda must be > 0")
    y = lam * tau
    if y < 1e-4:
        return tau * (0.5 + y / 12.0 - y**3 / 720.0)
    return tau / -math.expm1(-y) - 1.0 / lam


def rate_from_balance(mu: float, lam: float, mu1: float) -> float:
    """Rate of the interrupted branch from the overall repair balance.

    Solves ``P1 mu1 + P2 mu2 = mu`` (conditional on the repair being active)
    for ``mu2 = mu lam / (lam + mu1 - mu)``.
    """
    denom = lam + mu1 - mu
    if not denom > 0.0:
        raise DomainError(f"balance infeasible: lambda + mu1 - mu = {denom:g} <= 0")
    return mu * lam / denom


def weighted_inflow_rate(classes, weighting: str = "rate") -> float:
    """Combine per-inflow branch rates, weighted by inflow intensity ``P_i * lambda_i``.

    ``weighting="rate"`` averages the rates themselves. ``"holding_time"``
    averages the mean holding times ``1/mu_i`` and inverts the result, which
    is what the single-outflow balance ``P = inflow * E[holding]`` implies.
    """
    classes = list(classes)
    if not classes:
        raise DomainError("need at least one inflow class")
    total = sum(c.weight for c in classes)
    if not total > 0.0:
        raise DomainError("total inflow weight is zero")
    if weighting == "rate":
        return sum(c.weight * c.branch_rate for c in classes) / total
    if weighting == "holding_time":
        return total / sum(c.weight / c.branch_rate for c in classes)
    raise DomainError(f"unknown weighting {weighting!r}")


def _single_outflow(model, state):
    outs = model.outflows(state.name)
    if len(outs) != 1:
        raise UnsupportedStructureError(
            f"non-regeneration state {state.name!r} has {len(outs)} outflows; "
            "the two-pass solve needs exactly one")
    return outs[0]


def inflow_classes(model, state_name: str, probabilities: dict, rates: dict) -> list:
    """One :class:`InflowClass` per active transition into a non-regeneration state.

    The clock is *continued* when the source state is running the same
    ``clock_id`` (residual branch), otherwise it starts fresh.
    """
    state = model.state(state_name)
    out = _single_outflow(model, state)
    fresh_rate = equivalent_rate(race_for(model, out, 0.0)).mu_hat
    classes = []
    for t_in in model.inflows(state_name):
        src = model.state(t_in.source)
        if not src.regeneration:
            raise UnsupportedStructureError(
                f"clock chain {t_in.source!r} -> {state_name!r} links two non-regeneration "
                "states; only one level of clock sharing is supported")
        running = [t for t in model.outflows(src.name)
                   if out.clock == "continue" and t.clock_id == out.clock_id
                   and t.clock == "restart"]
        if running and running[0].id != t_in.id:
            clock = running[0]
            if clock.dist.kind != "fixed_delay":
                raise UnsupportedStructureError(
                    f"residual time of clock {clock.clock_id!r} is only derived for fixed delays")
            others = [t for t in model.outflows(src.name) if t.id != clock.id]
            if not all(t.dist.is_exponential for t in others):
                raise UnsupportedStructureError(
                    f"state {src.name!r}: residual needs exponential competitors")
            lam = sum(t.dist.rate for t in others)
            branch = 1.0 / residual_mean_fixed_delay(clock.dist.delay, lam)
            kind = "residual"
        else:
            branch, kind = fresh_rate, "fresh"
        classes.append(InflowClass(float(probabilities[src.name]), float(rates[t_in.id]), float(branch),
                                   t_in.id, kind))
    if not classes:
        raise UnsupportedStructureError(f"state {state_name!r} has no inflows")
    return classes


@dataclass
class NonregenResult:
    steady: SteadyState
    rates: dict
    passes: int
    classes: dict = field(default_factory=dict)
    corrections: dict = field(default_factory=dict)
    placeholder_gap: float = 0.0

    @property
    def p(self) -> np.ndarray:
        return self.steady.p


def _regen_rates(model, nonregen_out: set):
    rates, corrections = {}, {}
    for t in model.active_transitions:
        if t.id in nonregen_out:
            continue
        src = model.state(t.source)
        if t.clock == "continue":
            raise UnsupportedStructureError(
                f"transition {t.id!r}: continue clock out of regeneration state {src.name!r}")
        if t.dist.is_exponential:
            rates[t.id] = t.dist.rate
        else:
            res = equivalent_rate(race_for(model, t, 0.0))
            corrections[t.id] = res
            rates[t.id] = res.mu_hat
    return rates, corrections


def _two_pass(model, base_rates, outs, scale, weighting):
    rates = dict(base_rates)
    for t in outs.values():
        rates[t.id] = scale / t.dist.mean
    first = steady_state(build_generator(model, rates, include_renewal=True))
    probs = dict(zip(model.state_names, first.p))
    classes = {}
    for name, t in outs.items():
        classes[name] = inflow_classes(model, name, probs, rates)
        rates[t.id] = float(weighted_inflow_rate(classes[name], weighting))
    second = steady_state(build_generator(model, rates, include_renewal=True))
    return second, rates, classes


def solve_nonregen(model, placeholder_scale: float = 1.0,
                   weighting: str = "holding_time") -> NonregenResult:
    """Steady state of a model containing non-regeneration states.

    Pass 1 solves with placeholder rates (``placeholder_scale / mean``) at the
    non-regeneration states; pass 2 replaces them by the inflow-weighted
    branch rates and solves again. The solve is repeated with a placeholder
    ten times larger and the two answers must agree.
    """
    nonregen = [s for s in model.states if not s.regeneration]
    outs = {s.name: _single_outflow(model, s) for s in nonregen}
    base_rates, corrections = _regen_rates(model, {t.id for t in outs.values()})
    if not outs:
        g = build_generator(model, base_rates, include_renewal=True)
        return NonregenResult(steady_state(g), base_rates, 1, {}, corrections)
    steady, rates, classes = _two_pass(model, base_rates, outs, placeholder_scale, weighting)
    check, _, _ = _two_pass(model, base_rates, outs, 10.0 * placeholder_scale, weighting)
    gap = float(np.max(np.abs(steady.p - check.p)))
    if gap > 1e-9:
        raise FlowBalanceError(f"result depends on the placeholder rate (gap {gap:.3e})")
    return NonregenResult(steady, rates, 2, classes, corrections, gap)


def markov_approximation(model) -> SteadyState:
    """Naive Markov steady state: every transition at one over its mean."""
    g = build_generator(model, model.mean_rates(), include_renewal=True)
    return steady_state(g)
