"""Forward-marching supplementary-variable scheme for the absorption hazard.

States whose outflows are all exponential carry a scalar probability. A state
with one non-exponential outflow carries a vector of probability mass per
holding-time age bin of width ``dt``; each step the mass moves one bin to the
right, so transport in age is exact. The hazard is the discrete version of
``(dF/dt) / (1 - F)`` with ``F`` the absorbed mass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import DomainError, IntegrationError, UnsupportedStructureError

__all__ = ["FDResult", "fd_hazard"]


@dataclass(frozen=True)
class FDResult:
    times: np.ndarray
    hazard: np.ndarray
    window_average: float
    window: tuple
    dt: float
    steps: int
    mass_defect: float

    @property
    def series(self) -> tuple:
        return self.times, self.hazard

    def window_extent(self, a: float, b: float) -> float:
        """``max - min`` of the hazard over ``[a, b]``."""
        m = (self.times >= a) & (self.times <= b)
        return float(self.hazard[m].max() - self.hazard[m].min())


class _Aged:
    """Age-binned mass of a state with one non-exponential outflow."""

    def __init__(self, dist, target, bins, dt):
        self.target = target
        self.mass = np.zeros(bins)
        # during a step, bin j ages from (j + 1/2) dt to (j + 3/2) dt
        lo = (np.arange(bins) + 0.5) * dt
        hi = lo + dt
        with np.errstate(invalid="ignore"):
            frac = -np.expm1(dist.logsf(hi) - dist.logsf(lo))
        frac[~np.isfinite(frac)] = 1.0
        frac[-1] = 1.0
        self.fire = np.clip(frac, 0.0, 1.0)


def _bins_for(dist, dt, steps):
    end = dist.support_end
    if math.isfinite(end):
        return min(int(math.ceil(end / dt)) + 2, steps + 2)
    return steps + 2


def fd_hazard(model, dt: float, steps: int, window: tuple,
              scheme: str = "euler") -> FDResult:
    """March the age-structured forward equations and estimate the hazard.

    ``scheme="euler"`` moves ``lambda dt`` of the mass along each exponential
    edge per step. ``scheme="exp"`` uses the per-step factor
    ``1 - exp(-Lambda dt)`` split in proportion to the rates.
    """
    if not dt > 0.0:
        raise DomainError("dt must be > 0")
    if steps < 1:
        raise DomainError("steps must be >= 1")
    a, b = map(float, window)
    if not (0.0 <= a < b <= dt * steps * (1.0 + 1e-12)):
        raise DomainError(f"window {window} not covered by dt*steps = {dt * steps:g}")
    if scheme not in ("euler", "exp"):
        raise DomainError(f"unknown scheme {scheme!r}")
    if not model.absorbing:
        raise DomainError("fd_hazard needs an absorbing state")

    n = model.n
    absorbing = np.array([s.absorbing for s in model.states])
    exp_out = []
    aged = {}
    for i, s in enumerate(model.states):
        outs = model.outflows(s.name)
        ex = [(model.index(t.target), t.dist.rate) for t in outs if t.dist.is_exponential]
        nx = [t for t in outs if not t.dist.is_exponential]
        if len(nx) > 1:
            raise UnsupportedStructureError(
                f"state {s.name!r} has {len(nx)} non-exponential outflows; at most one is supported")
        if nx and nx[0].clock == "continue":
            raise UnsupportedStructureError(
                f"transition {nx[0].id!r}: continue clocks are not supported by the marcher")
        total = sum(r for _, r in ex)
        if total * dt >= 1.0:
            raise IntegrationError(
                f"state {s.name!r}: exit rate {total:g} times dt {dt:g} must be < 1")
        exp_out.append((ex, total))
        if nx:
            aged[i] = _Aged(nx[0].dist, model.index(nx[0].target), _bins_for(nx[0].dist, dt, steps), dt)

    p = np.zeros(n)
    init = model.index(model.initial)
    if init in aged:
        aged[init].mass[0] = 1.0
    else:
        p[init] = 1.0

    absorbed = 0.0
    hazard = np.empty(steps)
    defect = 0.0
    for step in range(steps):
        inflow = np.zeros(n)
        for i in range(n):
            if absorbing[i]:
                continue
            ex, total = exp_out[i]
            if i in aged:
                m = aged[i].mass
                held = m.sum()
            else:
                held = p[i]
            if total > 0.0 and held > 0.0:
                if scheme == "euler":
                    keep = 1.0 - total * dt
                    per = dt
                else:
                    keep = math.exp(-total * dt)
                    per = (1.0 - keep) / total
                for j, r in ex:
                    inflow[j] += r * per * held
                if i in aged:
                    m *= keep
                else:
                    p[i] *= keep
            if i in aged:
                ag = aged[i]
                fired = ag.mass * ag.fire
                inflow[ag.target] += fired.sum()
                ag.mass -= fired
                ag.mass[1:] = ag.mass[:-1].copy()
                ag.mass[0] = 0.0
        gained = float(inflow[absorbing].sum())
        inflow[absorbing] = 0.0
        for i in range(n):
            if inflow[i] == 0.0:
                continue
            if i in aged:
                aged[i].mass[0] += inflow[i]
            else:
                p[i] += inflow[i]
        survive = 1.0 - absorbed
        hazard[step] = gained / dt / survive if survive > 0.0 else math.nan
        absorbed += gained
        total_mass = p.sum() + sum(ag.mass.sum() for ag in aged.values()) + absorbed
        defect = max(defect, abs(total_mass - 1.0))
    if defect > 1e-6:
        raise IntegrationError(f"probability mass drifted by {defect:.3e}")
    times = np.arange(steps) * dt
    sel = (times >= a) & (times <= b)
    if not sel.any():
        raise DomainError("no time points inside the window")
    avg = float(np.mean(hazard[sel]))
    return FDResult(times, hazard, avg, (a, b), dt, steps, defect)
