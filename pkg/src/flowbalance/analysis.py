"""High-level analyses returning flat, ordered ``{column: value}`` records.

Shared by the command line and the sweep engine so both report the same
columns for the same model.
"""

from __future__ import annotations

from .correction import corrected_rates, correct_steady, renewal_hazard, solve_hazard
from .nonregen import solve_nonregen
from .oracles import SimConfig, fd_hazard, simulate

__all__ = ["steady_record", "hazard_record", "simulate_record", "fd_record", "ANALYSES"]


def _has_nonregen(model) -> bool:
    return any(not s.regeneration for s in model.states)


def _corrections(rec, corrections):
    for tid, c in corrections.items():
        rec[f"gamma:{tid}"] = c.gamma
        rec[f"mu_hat:{tid}"] = c.mu_hat


def steady_record(model, **_) -> dict:
    """Corrected steady state; the two-pass solve when clocks are shared."""
    rec = {}
    if _has_nonregen(model):
        res = solve_nonregen(model)
        _corrections(rec, res.corrections)
        for name, classes in res.classes.items():
            tid = model.outflows(name)[0].id
            rec[f"mu_hat:{tid}"] = res.rates[tid]
    else:
        res = correct_steady(model)
        _corrections(rec, res.corrections)
    for name, p in zip(model.state_names, res.steady.p):
        rec[f"P:{name}"] = float(p)
    if model.absorbing:
        rates, _ = corrected_rates(model, 0.0)
        rec["renewal_hazard"] = renewal_hazard(model, rates)
    return rec


def hazard_record(model, tol: float = 1e-10, max_iter: int = 200, **_) -> dict:
    """Quasi-stationary fixed point plus the renewal-based hazard for contrast."""
    qs, trace = solve_hazard(model, tol=tol, max_iter=max_iter)
    rec = {"k": qs.k, "iterations": len(trace.steps)}
    _corrections(rec, qs.corrections)
    for name in qs.names:
        rec[f"v:{name}"] = qs.probability(name)
    rates, _ = corrected_rates(model, 0.0)
    rec["renewal_hazard"] = renewal_hazard(model, rates)
    rec["flux_residual"] = qs.residual
    return rec


def simulate_record(model, **options) -> dict:
    cfg = SimConfig(**{k: v for k, v in options.items() if k in SimConfig.__dataclass_fields__})
    res = simulate(model, cfg)
    rec = {}
    for name, est in res.state_probs.items():
        rec[f"P:{name}"] = est.value
        rec[f"se:{name}"] = est.std_error
    if res.hazard is not None:
        rec["hazard"] = res.hazard.value
        rec["hazard_se"] = res.hazard.std_error
        rec["survivors"] = res.survivors_at_window
    if res.renewal_hazard is not None:
        rec["renewal_hazard"] = res.renewal_hazard.value
        rec["renewal_hazard_se"] = res.renewal_hazard.std_error
    return rec


def fd_record(model, dt: float = 6e-4, steps: int = 10_000, window=(4.0, 6.0), **_) -> dict:
    res = fd_hazard(model, dt, steps, window)
    return {"hazard": res.window_average, "mass_defect": res.mass_defect}


ANALYSES = {
    "steady": steady_record,
    "hazard": hazard_record,
    "simulate": simulate_record,
    "fd": fd_record,
}
