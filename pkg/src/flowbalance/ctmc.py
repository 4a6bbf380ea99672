"""Continuous-time Markov chains in column convention.

``q[j, i]`` is the rate from state ``i`` to state ``j`` so that
``dP/dt = Q @ P`` and every column of ``Q`` sums to zero. Most textbooks use
the transposed (row) convention; everything in this package uses columns.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .errors import DomainError, EigenError, IntegrationError, ReducibleChainError

__all__ = [
    "Generator",
    "SteadyState",
    "QuasiStationaryResult",
    "build_generator",
    "steady_state",
    "quasi_stationary",
    "transient",
]


@dataclass(frozen=True)
class Generator:
    names: tuple
    q: np.ndarray
    absorbing: frozenset = frozenset()

    def __post_init__(self):
        q = np.array(self.q, dtype=float)
        if q.ndim != 2 or q.shape[0] != q.shape[1] or q.shape[0] != len(self.names):
            raise DomainError("generator must be square and match the state names")
        q.flags.writeable = False
        object.__setattr__(self, "q", q)

    @property
    def n(self) -> int:
        return len(self.names)

    @classmethod
    def from_rates(cls, rates: np.ndarray, names: Optional[Sequence[str]] = None,
                   absorbing=None) -> "Generator":
        """Build from a matrix of off-diagonal rates ``rates[j, i]`` (i -> j)."""
        r = np.array(rates, dtype=float)
        np.fill_diagonal(r, 0.0)
        if np.any(r < 0.0):
            raise DomainError("off-diagonal rates must be >= 0")
        r[np.diag_indices_from(r)] = -r.sum(axis=0)
        names = tuple(names) if names is not None else tuple(f"S{i}" for i in range(len(r)))
        if absorbing is None:
            absorbing = frozenset(i for i in range(len(r)) if r[i, i] == 0.0)
        return cls(names, r, frozenset(absorbing))

    @property
    def up(self) -> np.ndarray:
        return np.array([i for i in range(self.n) if i not in self.absorbing], dtype=int)


def build_generator(model, rates: dict, include_renewal: bool = False) -> Generator:
    """Assemble ``Q`` from a model and one rate per active transition.

    Parallel transitions between the same ordered pair are summed. With
    ``include_renewal`` the model's artificial renewal transition is added and
    its source no longer counts as absorbing.
    """
    n = model.n
    q = np.zeros((n, n))
    known = {t.id for t in model.active_transitions}
    unknown = set(rates) - known
    if unknown:
        raise DomainError(f"rates given for unknown transitions {sorted(unknown)}")
    for t in model.active_transitions:
        if t.id not in rates:
            raise DomainError(f"no rate assigned to transition {t.id!r}")
        r = float(rates[t.id])
        if not (r > 0.0 and math.isfinite(r)):
            raise DomainError(f"transition {t.id!r}: rate must be > 0, got {r}")
        q[model.index(t.target), model.index(t.source)] += r
    absorbing = set(model.absorbing)
    if include_renewal and model.artificial_renewal is not None:
        ren = model.artificial_renewal
        i, j = model.index(ren.source), model.index(ren.target)
        q[j, i] += ren.rate
        absorbing.discard(i)
    q[np.diag_indices(n)] = -q.sum(axis=0)
    return Generator(tuple(model.state_names), q, frozenset(absorbing))


def _reach(adj: np.ndarray, start: int) -> set:
    seen = {start}
    stack = [start]
    while stack:
        i = stack.pop()
        for j in np.nonzero(adj[i])[0]:
            if j not in seen:
                seen.add(int(j))
                stack.append(int(j))
    return seen


def _check_irreducible(q: np.ndarray, names, what: str):
    n = len(q)
    if n == 1:
        return
    adj = (q.T > 0.0)
    np.fill_diagonal(adj, False)
    fwd = _reach(adj, 0)
    back = _reach(adj.T, 0)
    bad = [names[i] for i in range(n) if i not in fwd or i not in back]
    if bad:
        raise ReducibleChainError(
            f"{what} is not a single communicating class; states not mutually "
            f"reachable with {names[0]!r}: {bad}", bad)


@dataclass(frozen=True)
class SteadyState:
    p: np.ndarray
    residual: float
    names: tuple

    def __getitem__(self, name):
        return float(self.p[self.names.index(name)])

    def conditional(self, exclude) -> dict:
        """Probabilities renormalised over the states not in ``exclude``."""
        keep = [i for i, nm in enumerate(self.names) if nm not in set(exclude)]
        tot = self.p[keep].sum()
        return {self.names[i]: float(self.p[i] / tot) for i in keep}


def steady_state(g: Generator) -> SteadyState:
    """Solve ``Q P = 0, sum(P) = 1`` for an irreducible chain."""
    q = g.q
    _check_irreducible(q, g.names, "chain")
    a = np.array(q)
    a[-1, :] = 1.0
    b = np.zeros(g.n)
    b[-1] = 1.0
    p = np.linalg.solve(a, b)
    p[np.abs(p) < 1e-300] = 0.0
    residual = float(np.max(np.abs(q @ p))) if g.n else 0.0
    return SteadyState(p, residual, g.names)


@dataclass
class QuasiStationaryResult:
    """Decay rate ``k`` and quasi-stationary vector ``v`` over the up states."""

    k: float
    v: np.ndarray
    names: tuple
    edge_rates: np.ndarray
    residual: float
    eigen_residual: float
    spectral_ratio: float = math.nan
    rates: dict = field(default_factory=dict)
    corrections: dict = field(default_factory=dict)

    def probability(self, name: str) -> float:
        return float(self.v[self.names.index(name)])


def quasi_stationary(g: Generator) -> QuasiStationaryResult:
    """Perron-Frobenius analysis of the non-absorbing block.

    All absorbing states are treated as one merged absorbing set.
    """
    if not g.absorbing:
        raise DomainError("quasi-stationary analysis needs an absorbing state")
    up = g.up
    names = tuple(g.names[i] for i in up)
    block = g.q[np.ix_(up, up)]
    edge = -block.sum(axis=0)
    edge[np.abs(edge) < 1e-15 * max(1.0, np.abs(block).max())] = 0.0
    if not np.any(edge > 0.0):
        raise DomainError("no transition leads into the absorbing set")
    _check_irreducible(block, names, "non-absorbing block")

    w, vecs = np.linalg.eig(block)
    order = np.argsort(-w.real)
    lead = w[order[0]]
    if abs(lead.imag) > 1e-9 * abs(lead.real):
        raise EigenError(f"dominant eigenvalue is complex: {lead}")
    if len(w) > 1:
        nxt = w[order[1]]
        if abs(nxt - lead) <= 1e-12 * abs(lead):
            raise EigenError(f"dominant eigenvalue {lead.real} is not simple")
    v = vecs[:, order[0]].real
    v = v * np.sign(v[np.argmax(np.abs(v))])
    v = v / v.sum()
    if v.min() < -1e-12:
        raise EigenError("Perron vector has mixed signs; the up block is likely reducible")
    v = np.clip(v, 0.0, None)
    v = v / v.sum()
    k = -float(lead.real)
    eig_res = float(np.max(np.abs(block @ v + k * v)))
    flux = float(v @ edge)
    ratio = math.nan
    if len(w) > 1:
        ratio = float(abs(w[order[1]]) / abs(lead)) if lead != 0 else math.nan
    return QuasiStationaryResult(k=k, v=v, names=names, edge_rates=edge,
                                 residual=abs(k - flux), eigen_residual=eig_res,
                                 spectral_ratio=ratio)


def transient(g: Generator, p0, times, rtol: float = 1e-10, atol: float = 1e-13) -> np.ndarray:
    """Integrate ``dP/dt = Q P`` and return the trajectory at ``times``.

    Uses an embedded Runge-Kutta 5(4) pair with adaptive step control.
    """
    p0 = np.asarray(p0, dtype=float)
    times = np.asarray(times, dtype=float)
    if p0.shape != (g.n,):
        raise DomainError("p0 has the wrong length")
    if abs(p0.sum() - 1.0) > 1e-12 or np.any(p0 < 0.0):
        raise DomainError("p0 must be a probability vector")
    if times.ndim != 1 or len(times) == 0 or np.any(np.diff(times) <= 0.0):
        raise DomainError("times must be strictly increasing")
    if len(times) == 1:
        return p0[None, :].copy()
    q = np.array(g.q)
    sol = solve_ivp(lambda t, p: q @ p, (times[0], times[-1]), p0, method="RK45",
                    t_eval=times, rtol=rtol, atol=atol)
    if not sol.success:
        raise IntegrationError(f"transient integration failed: {sol.message}")
    traj = sol.y.T
    drift = np.max(np.abs(traj.sum(axis=1) - 1.0))
    if drift > 1e-9:
        raise IntegrationError(f"probability mass drifted by {drift:.3e}")
    return traj
