"""Discrete-event Monte Carlo simulation of state-space models.

Replications are advanced in vectorised blocks. Block ``b`` draws from a
Philox stream keyed by ``(seed, b)``, so the output depends only on the seed
and the replication count, never on how blocks are spread over threads.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..distributions import DistributionSpec
from ..errors import DomainError, UndefinedHazardError

__all__ = ["SimConfig", "OracleEstimate", "SimResult", "simulate", "BLOCK_SIZE", "thread_count"]

BLOCK_SIZE = 16384
_TWO53 = float(2**53)


def thread_count(requested: Optional[int] = None) -> int:
    """Worker count, capped by the SMC_THREADS environment variable."""
    cap = os.environ.get("SMC_THREADS")
    n = requested or os.cpu_count() or 1
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            raise DomainError(f"SMC_THREADS must be an integer, got {cap!r}") from None
    return max(1, n)


@dataclass(frozen=True)
class SimConfig:
    replications: int = 100_000
    horizon: float = 1000.0
    seed: int = 0
    hazard_window: Optional[tuple] = None
    averaging_window: Optional[tuple] = None
    hazard_bins: int = 50
    estimator: str = "exposure"
    threads: Optional[int] = None
    renewal: bool = False

    def __post_init__(self):
        if self.replications < 1:
            raise DomainError("replications must be >= 1")
        if not self.horizon > 0.0:
            raise DomainError("horizon must be > 0")
        if self.seed < 0:
            raise DomainError("seed must be >= 0")
        for name in ("hazard_window", "averaging_window"):
            w = getattr(self, name)
            if w is None:
                continue
            a, b = map(float, w)
            if not (0.0 <= a < b <= self.horizon):
                raise DomainError(f"{name} {w} must satisfy 0 <= a < b <= horizon")
            object.__setattr__(self, name, (a, b))
        if self.hazard_bins < 1:
            raise DomainError("hazard_bins must be >= 1")
        if self.estimator not in ("exposure", "start"):
            raise DomainError("estimator must be 'exposure' or 'start'")


@dataclass(frozen=True)
class OracleEstimate:
    value: float
    std_error: float
    samples: int
    series: Optional[tuple] = None

    def within(self, target: float, n_se: float) -> bool:
        return abs(self.value - target) <= n_se * self.std_error


@dataclass
class SimResult:
    state_probs: dict = field(default_factory=dict)
    hazard: Optional[OracleEstimate] = None
    renewal_hazard: Optional[OracleEstimate] = None
    absorbed: int = 0
    censored: int = 0
    survivors_at_window: int = 0


class _Compiled:
    def __init__(self, model, renewal: bool):
        self.names = model.state_names
        self.n = model.n
        self.absorbing = np.array([s.absorbing for s in model.states])
        self.initial = model.index(model.initial)
        self.clock_ids = sorted({t.clock_id for t in model.active_transitions if t.clock_id})
        self.outs = []
        for s in model.states:
            row = []
            for t in model.outflows(s.name):
                cid = self.clock_ids.index(t.clock_id) if t.clock_id else -1
                row.append((model.index(t.target), t.dist, t.clock == "continue", cid))
            self.outs.append(row)
        ren = model.artificial_renewal
        if renewal and ren is not None:
            i = model.index(ren.source)
            self.outs[i] = [(model.index(ren.target), DistributionSpec.exponential(ren.rate),
                             False, -1)]
            self.absorbing[i] = False


def _uniform(rng, size):
    # strictly inside (0, 1)
    return (rng.integers(0, 2**53, size=size, dtype=np.int64) + 0.5) / _TWO53


def _overlap(a, b, lo, hi):
    return np.clip(np.minimum(b, hi) - np.maximum(a, lo), 0.0, None)


def _run_block(cm: _Compiled, cfg: SimConfig, block: int, size: int):
    rng = np.random.Generator(np.random.Philox(key=np.array([cfg.seed, block], dtype=np.uint64)))
    horizon = cfg.horizon
    state = np.full(size, cm.initial, dtype=np.int64)
    t = np.zeros(size)
    next_t = np.full(size, np.inf)
    next_to = np.zeros(size, dtype=np.int64)
    next_clock = np.full(size, -1, dtype=np.int64)
    clocks = np.full((len(cm.clock_ids), size), np.nan)
    absorb_t = np.full(size, np.inf)
    avg = cfg.averaging_window
    occ = np.zeros((size, cm.n)) if avg is not None else None

    def schedule(idx):
        for s in np.unique(state[idx]):
            sub = idx[state[idx] == s]
            outs = cm.outs[s]
            if not outs:
                next_t[sub] = np.inf
                continue
            cand = np.empty((len(outs), len(sub)))
            for j, (_, dist, cont, cid) in enumerate(outs):
                if dist.kind == "fixed_delay":
                    fresh = t[sub] + dist.delay
                else:
                    fresh = t[sub] + dist.quantile(_uniform(rng, len(sub)))
                if cont:
                    running = clocks[cid, sub]
                    fresh = np.where(np.isnan(running), fresh, running)
                cand[j] = fresh
            keep = {cid for (_, _, _, cid) in outs if cid >= 0}
            for c in range(len(cm.clock_ids)):
                if c not in keep:
                    clocks[c, sub] = np.nan
            for j, (_, _, _, cid) in enumerate(outs):
                if cid >= 0:
                    clocks[cid, sub] = cand[j]
            win = np.argmin(cand, axis=0)
            next_t[sub] = cand[win, np.arange(len(sub))]
            targets = np.array([o[0] for o in outs])
            cids = np.array([o[3] for o in outs])
            next_to[sub] = targets[win]
            next_clock[sub] = cids[win]

    schedule(np.arange(size))
    while True:
        idx = np.nonzero(next_t < horizon)[0]
        if len(idx) == 0:
            break
        if occ is not None:
            occ[idx, state[idx]] += _overlap(t[idx], next_t[idx], *avg)
        t[idx] = next_t[idx]
        fired = next_clock[idx]
        has = fired >= 0
        clocks[fired[has], idx[has]] = np.nan
        state[idx] = next_to[idx]
        hit = cm.absorbing[state[idx]]
        done = idx[hit]
        absorb_t[done] = np.minimum(absorb_t[done], t[done])
        next_t[done] = np.inf
        live = idx[~hit]
        if len(live):
            schedule(live)
    if occ is not None:
        occ[np.arange(size), state] += _overlap(t, np.full(size, horizon), *avg)
    return absorb_t, occ


def _hazard_estimate(absorb_t, cfg: SimConfig) -> tuple:
    a, b = cfg.hazard_window
    edges = np.linspace(a, b, cfg.hazard_bins + 1)
    width = edges[1] - edges[0]
    lo, hi = edges[:-1], edges[1:]
    order = np.sort(absorb_t)
    deaths = np.searchsorted(order, hi, side="left") - np.searchsorted(order, lo, side="left")
    survivors = len(order) - np.searchsorted(order, lo, side="left")
    if np.any(survivors == 0):
        raise UndefinedHazardError(
            f"no surviving paths at t={lo[survivors == 0][0]:g}", int(survivors.min()))
    if cfg.estimator == "exposure":
        # time at risk inside each bin
        exposure = np.array([_overlap(np.zeros(1), order, l, h).sum() for l, h in zip(lo, hi)])
        h_bins = deaths / exposure
        var = deaths / exposure**2
    else:
        h_bins = deaths / (survivors * width)
        var = deaths / (survivors * width) ** 2
    value = float(h_bins.mean())
    se = float(math.sqrt(var.sum()) / len(h_bins))
    return OracleEstimate(value, se, int(survivors[0]), (lo.copy(), h_bins)), int(survivors[0])


def simulate(model, cfg: SimConfig) -> SimResult:
    """Simulate ``cfg.replications`` independent paths from the initial state.

    * ``state_probs``: time-average occupancy over ``averaging_window``.
    * ``hazard``: absorption hazard averaged over ``hazard_window`` bins.
    * ``renewal_hazard``: ``1 / mean time to absorption``, the failure rate
      of the renewal process obtained by restarting after every absorption.

    With ``cfg.renewal`` the model's artificial renewal transition is
    simulated too, so nothing is absorbed and only ``state_probs`` applies.
    """
    cm = _Compiled(model, cfg.renewal)
    n = cfg.replications
    blocks = [(b, min(BLOCK_SIZE, n - b * BLOCK_SIZE)) for b in range(math.ceil(n / BLOCK_SIZE))]
    workers = min(thread_count(cfg.threads), len(blocks))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda bs: _run_block(cm, cfg, *bs), blocks))
    else:
        parts = [_run_block(cm, cfg, *bs) for bs in blocks]
    absorb_t = np.concatenate([p[0] for p in parts])
    res = SimResult()
    if cfg.averaging_window is not None:
        occ = np.concatenate([p[1] for p in parts]) / (cfg.averaging_window[1] - cfg.averaging_window[0])
        mean = occ.mean(axis=0)
        se = occ.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.zeros(cm.n)
        res.state_probs = {name: OracleEstimate(float(mean[i]), float(se[i]), n)
                           for i, name in enumerate(cm.names)}
    if cm.absorbing.any():
        finite = np.isfinite(absorb_t)
        res.absorbed = int(finite.sum())
        res.censored = int(n - res.absorbed)
        if cfg.hazard_window is not None:
            res.hazard, res.survivors_at_window = _hazard_estimate(absorb_t, cfg)
        if res.censored == 0 and n > 1:
            m = absorb_t.mean()
            se_m = absorb_t.std(ddof=1) / math.sqrt(n)
            res.renewal_hazard = OracleEstimate(float(1.0 / m), float(se_m / m**2), n)
    return res
