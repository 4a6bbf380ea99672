"""Equivalent exponential rates for non-exponential transitions.

A transition whose holding time follows ``G`` races against the other
outflows of its source state (combined survival ``1 - F``). Weighting the
holding-time age by the inflow history ``e^{k t}`` gives

    1/A   = int_0^inf e^{kt} (1 - G)(1 - F) dt
    gamma = int_0^inf e^{kt} (1 - F) g dt
    mu    = A * gamma

with ``k = 0`` for steady state and ``k`` equal to the Perron-Frobenius decay
rate for quasi-stationary analysis. Because ``k`` depends on the corrected
rates, :func:`solve_hazard` iterates the two mappings to a fixed point.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import integrate

from .ctmc import (Generator, QuasiStationaryResult, SteadyState, build_generator,
                   quasi_stationary, steady_state)
from .distributions import DistributionSpec
from .errors import (ConvergenceError, DivergenceError, DomainError, EigenError,
                     IntegrationError, UnsupportedStructureError)

__all__ = [
    "OutflowRace",
    "CorrectionResult",
    "FixedPointStep",
    "FixedPointTrace",
    "SteadyCorrection",
    "equivalent_rate",
    "equivalent_rate_vs_exponential",
    "equivalent_rate_fixed_delay",
    "race_for",
    "corrected_rates",
    "correct_steady",
    "renewal_hazard",
    "solve_hazard",
    "embedded_renewal_steady",
]

# integrand at the truncation point must be below this fraction of its peak
TAIL_FRACTION = 1e-14
QUAD_EPSABS = 1e-13
QUAD_EPSREL = 1e-12
_LOG_TAIL = math.log(TAIL_FRACTION)
_QUANTILE_LEVELS = (1e-9, 1e-4, 0.01, 0.1, 0.5, 0.9, 0.99, 1 - 1e-4, 1 - 1e-9)


@dataclass(frozen=True)
class OutflowRace:
    """A transition ``target`` racing against ``competitors`` from one state."""

    target: DistributionSpec
    competitors: tuple = ()
    decay: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "competitors", tuple(self.competitors))
        if not (self.decay >= 0.0 and math.isfinite(self.decay)):
            raise DomainError(f"decay rate must be finite and >= 0, got {self.decay}")

    def competitor_sf(self, t):
        """Combined survival of the competing outflows (1 when there are none)."""
        out = np.ones_like(np.asarray(t, dtype=float))
        for c in self.competitors:
            out = out * c.sf(t)
        return out

    def competitor_logsf(self, t):
        out = np.zeros_like(np.asarray(t, dtype=float))
        for c in self.competitors:
            out = out + c.logsf(t)
        return out


@dataclass(frozen=True)
class CorrectionResult:
    gamma: float
    a_const: float
    mu_hat: float
    method: str
    error_estimate: float = 0.0


def equivalent_rate_fixed_delay(tau: float, lam: float, k: float = 0.0) -> float:
    """Equivalent rate of a fixed delay ``tau`` racing an exponential ``lam``.

    ``(lam - k) / (exp(tau (lam - k)) - 1)``, continuous at ``lam == k``
    where it equals ``1 / tau``.
    """
    if not tau > 0.0:
        raise DomainError(f"delay must be > 0, got {tau}")
    if lam < 0.0 or k < 0.0:
        raise DomainError("rates must be >= 0")
    x = lam - k
    if abs(x) < 1e-8:
        y = tau * x
        return (1.0 - y / 2.0 + y * y / 12.0 - y**4 / 720.0) / tau
    return x / math.expm1(tau * x)


def _check_convergent(dists, k: float):
    tail = sum(d.tail_rate for d in dists)
    if k > 0.0 and tail <= k:
        raise DivergenceError(
            f"age integral diverges: combined tail decay rate {tail:g} does not "
            f"exceed the decay rate k={k:g}")


def _breakpoints(dists, lo: float, hi: float) -> list:
    pts = set()
    for d in dists:
        if d.kind == "fixed_delay":
            pts.add(d.delay)
            continue
        for level in _QUANTILE_LEVELS:
            pts.add(float(d.quantile(level)))
    return sorted(p for p in pts if lo < p < hi and math.isfinite(p))


def _truncation_point(log_f, dists) -> float:
    """Smallest grid point past the peak where ``exp(log_f)`` falls below the tail fraction."""
    scale = min(d.mean for d in dists)
    grid = scale * 2.0 ** np.arange(-20, 80, 0.5)
    with np.errstate(over="ignore", invalid="ignore"):
        vals = np.array([float(log_f(t)) for t in grid])
    vals = np.where(np.isnan(vals), -np.inf, vals)
    peak = max(0.0, vals[0])
    for t, v in zip(grid, vals):
        peak = max(peak, v)
        if v < peak + _LOG_TAIL and t > scale:
            return float(t)
    raise DivergenceError("integrand does not decay to the tail fraction; integral diverges")


def _quad(f, a: float, b: float, points) -> tuple:
    if b <= a:
        return 0.0, 0.0
    pts = [p for p in points if a < p < b]
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, err = integrate.quad(f, a, b, points=pts or None, epsabs=QUAD_EPSABS,
                                      epsrel=QUAD_EPSREL, limit=2000)
        except integrate.IntegrationWarning:
            # accept the estimate if the reported error is still small
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            val, err = integrate.quad(f, a, b, points=pts or None, epsabs=QUAD_EPSABS,
                                      epsrel=QUAD_EPSREL, limit=2000)
            if err > 1e-9 * max(1.0, abs(val)):
                raise IntegrationError(
                    f"quadrature did not reach tolerance (estimate {val}, error {err})")
    return val, err


def _quadrature_rate(race: OutflowRace) -> CorrectionResult:
    g, k = race.target, race.decay
    everything = (g,) + race.competitors
    _check_convergent(everything, k)
    comp_end = min((c.support_end for c in race.competitors), default=math.inf)

    if g.kind == "fixed_delay":
        tau = g.delay
        if tau == comp_end:
            raise DomainError("fixed delays tie exactly; the race winner is undefined")
        if tau > comp_end:
            raise DomainError("transition can never fire: a competing fixed delay is shorter")
        f_age = lambda t: math.exp(k * t) * float(race.competitor_sf(t))  # noqa: E731
        inv_a, err = _quad(f_age, 0.0, tau, _breakpoints(race.competitors, 0.0, tau))
        gamma = math.exp(k * tau) * float(race.competitor_sf(tau))
    else:
        upper = comp_end
        if not math.isfinite(upper):
            log_f = lambda t: k * t + float(g.logsf(t)) + float(race.competitor_logsf(t))  # noqa: E731
            upper = _truncation_point(log_f, everything)
        pts = _breakpoints(everything, 0.0, upper)
        f_age = lambda t: math.exp(k * t + float(g.logsf(t)) + float(race.competitor_logsf(t)))  # noqa: E731

        inv_a, err_a = _quad(f_age, 0.0, upper, pts)
        gamma, err_g = _winning_integral(
            g, lambda t: k * t + float(race.competitor_logsf(t)), upper, pts)
        err = err_a + err_g
    if not gamma > 0.0:
        raise DomainError("transition can never fire: winning-race ratio is zero")
    return CorrectionResult(gamma=gamma, a_const=1.0 / inv_a, mu_hat=gamma / inv_a,
                            method="quadrature", error_estimate=err)


def equivalent_rate(race: OutflowRace, force_quadrature: bool = False) -> CorrectionResult:
    """Equivalent exponential rate of ``race.target`` under decay ``race.decay``.

    Closed forms are used when the target is exponential or a fixed delay and
    every competitor is exponential; otherwise both integrals are computed by
    adaptive quadrature on a truncated range. Raises :class:`DivergenceError`
    when the holding-time tails are too heavy for ``e^{kt}``.
    """
    g, k = race.target, race.decay
    all_exp = all(c.is_exponential for c in race.competitors)
    if not force_quadrature and all_exp and g.kind in ("exponential", "fixed_delay"):
        lam = sum(c.rate for c in race.competitors)
        if g.is_exponential:
            s = g.rate + lam - k
            if s <= 0.0:
                raise DivergenceError(
                    f"age integral diverges: total outflow rate {g.rate + lam:g} <= k={k:g}")
            return CorrectionResult(gamma=g.rate / s, a_const=s, mu_hat=g.rate,
                                    method="closed_form_exp")
        tau, x = g.delay, lam - k
        gamma = math.exp(-x * tau)
        mu_hat = equivalent_rate_fixed_delay(tau, lam, k)
        return CorrectionResult(gamma=gamma, a_const=mu_hat / gamma, mu_hat=mu_hat,
                                method="closed_form_fixed")
    return _quadrature_rate(race)


def _winning_integral(g: DistributionSpec, log_weight, upper: float, t_points) -> tuple:
    """``int_0^upper w(t) g(t) dt``.

    Up to the median the substitution ``t = Q(p)`` turns the density into
    ``dp``, which removes the integrable density singularity at ``t = 0``
    (Weibull shape < 1). Beyond the median the density is smooth but the
    weight may grow, so the rest is integrated in ``t`` directly.
    """
    t_mid = min(float(g.quantile(0.5)), upper)
    p_mid = float(g.cdf(t_mid))

    def f(p):
        t = float(g.quantile(p))
        if not math.isfinite(t):
            return 0.0
        return math.exp(log_weight(t))

    p_pts = {lv for lv in _QUANTILE_LEVELS if lv < p_mid} | {
        float(g.cdf(t)) for t in t_points if t < t_mid}
    head, err_h = _quad(f, 0.0, p_mid, sorted(p_pts))
    if t_mid >= upper:
        return head, err_h

    def f_tail(t):
        # log form: e^{kt} alone can overflow where the density underflows
        return math.exp(log_weight(t) + float(g.logpdf(t)))

    tail, err_t = _quad(f_tail, t_mid, upper, t_points)
    return head + tail, err_h + err_t


def _laplace_density(g: DistributionSpec, s: float) -> tuple:
    """``int_0^inf e^{-s t} g(t) dt`` for a continuous ``g``."""
    if s < 0.0 and g.tail_rate <= -s:
        raise DivergenceError(
            f"transform diverges: tail decay {g.tail_rate:g} does not exceed {-s:g}")
    upper = _truncation_point(lambda t: -s * t + float(g.logsf(t)), (g,))
    return _winning_integral(g, lambda t: -s * t, upper, ())


def equivalent_rate_vs_exponential(g: DistributionSpec, lam: float, k: float = 0.0) -> CorrectionResult:
    """Equivalent rate of ``g`` competing with a single exponential outflow ``lam``.

    Uses the transform form ``gamma = int e^{-(lam-k)t} g dt`` and
    ``mu = (lam - k)/(1/gamma - 1)``. At ``lam == k`` that form is 0/0 and the
    general age-weighted quadrature is used instead.
    """
    if lam < 0.0 or k < 0.0:
        raise DomainError("rates must be >= 0")
    x = lam - k
    if g.is_exponential:
        s = g.rate + x
        if s <= 0.0:
            raise DivergenceError(f"age integral diverges: {g.rate + lam:g} <= k={k:g}")
        return CorrectionResult(gamma=g.rate / s, a_const=s, mu_hat=g.rate,
                                method="closed_form_exp")
    if g.kind == "fixed_delay":
        mu = equivalent_rate_fixed_delay(g.delay, lam, k)
        gamma = math.exp(-x * g.delay)
        return CorrectionResult(gamma=gamma, a_const=mu / gamma, mu_hat=mu,
                                method="closed_form_fixed")
    if x == 0.0:
        comp = (DistributionSpec.exponential(lam),) if lam > 0 else ()
        return _quadrature_rate(OutflowRace(g, comp, k))
    gamma, err = _laplace_density(g, x)
    mu = x / (1.0 / gamma - 1.0)
    return CorrectionResult(gamma=gamma, a_const=mu / gamma, mu_hat=mu,
                            method="quadrature", error_estimate=err)


# -- model-level procedures ------------------------------------------------


def race_for(model, transition, k: float = 0.0) -> OutflowRace:
    """The race a transition runs against the other active outflows of its source."""
    comps = tuple(t.dist for t in model.outflows(transition.source) if t.id != transition.id)
    return OutflowRace(transition.dist, comps, k)


def corrected_rates(model, k: float = 0.0, skip=()) -> tuple:
    """Rates for every active transition with non-exponential ones corrected.

    Returns ``(rates, corrections)``; ``corrections`` maps transition id to its
    :class:`CorrectionResult` for the corrected transitions only. Transitions
    in ``skip`` get their uncorrected mean rate.
    """
    rates, corrections = {}, {}
    for t in model.active_transitions:
        if t.dist.is_exponential:
            rates[t.id] = t.dist.rate
        elif t.id in skip:
            rates[t.id] = 1.0 / t.dist.mean
        else:
            res = equivalent_rate(race_for(model, t, k))
            corrections[t.id] = res
            rates[t.id] = res.mu_hat
    return rates, corrections


@dataclass
class SteadyCorrection:
    rates: dict
    corrections: dict
    generator: Generator
    steady: SteadyState

    @property
    def p(self) -> np.ndarray:
        return self.steady.p


def _require_semi_markov(model):
    nonregen = [s.name for s in model.states if not s.regeneration]
    if nonregen:
        raise UnsupportedStructureError(
            f"states {nonregen} are not regeneration points; use solve_nonregen")
    cont = [t.id for t in model.active_transitions if t.clock == "continue"]
    if cont:
        raise UnsupportedStructureError(f"continue clocks {cont} need solve_nonregen")


def correct_steady(model) -> SteadyCorrection:
    """Steady state of the corrected Markov model (``k = 0``).

    An artificial renewal transition, when present, is included so that
    models with an absorbing state still have a steady state.
    """
    _require_semi_markov(model)
    rates, corrections = corrected_rates(model, 0.0)
    g = build_generator(model, rates, include_renewal=True)
    return SteadyCorrection(rates, corrections, g, steady_state(g))


def renewal_hazard(model, rates: dict) -> float:
    """System hazard from the renewal construction.

    All absorbing states are merged and routed back to the renewal target
    (the model's artificial renewal target, else its initial state). The
    steady-state probabilities conditional on being up weight the direct
    rates into the absorbing set. The renewal rate itself does not matter.
    """
    g = build_generator(model, rates)
    if not g.absorbing:
        raise DomainError("renewal hazard needs an absorbing state")
    up = g.up
    m = len(up)
    target = (model.artificial_renewal.target if model.artificial_renewal is not None
              else model.initial)
    q = np.zeros((m + 1, m + 1))
    q[:m, :m] = g.q[np.ix_(up, up)]
    edge = -q[:m, :m].sum(axis=0)
    q[m, :m] = edge
    q[list(up).index(model.index(target)), m] = 1.0
    q[m, m] = -1.0
    names = tuple(g.names[i] for i in up) + ("<absorbed>",)
    ss = steady_state(Generator(names, q))
    p_up = ss.p[:m] / ss.p[:m].sum()
    return float(p_up @ edge)


@dataclass(frozen=True)
class FixedPointStep:
    k_in: float
    k_out: float
    residual: float
    mu_hat: dict
    relaxation: float


@dataclass
class FixedPointTrace:
    k0: float
    steps: list = field(default_factory=list)
    converged: bool = False

    @property
    def iterations(self) -> list:
        """``(k, {transition: mu_hat})`` per step."""
        return [(s.k_in, dict(s.mu_hat)) for s in self.steps]

    @property
    def residuals(self) -> list:
        return [s.residual for s in self.steps]

    @property
    def final_residual(self) -> float:
        return abs(self.steps[-1].residual) if self.steps else math.inf

    def sign_alternations(self) -> int:
        r = [x for x in self.residuals if x != 0.0]
        return sum(1 for a, b in zip(r, r[1:]) if (a > 0) != (b > 0))


def solve_hazard(model, tol: float = 1e-10, max_iter: int = 200, relaxation: float = 1.0,
                 initial_k: Optional[float] = None) -> tuple:
    """Quasi-stationary hazard of a model with non-exponential transitions.

    Starting from ``k`` of the uncorrected exponential model (rates are the
    inverse means) this alternates ``k -> corrected rates -> k`` until the
    change falls below ``tol``. Three sign-alternating residuals in a row
    switch the relaxation factor to 0.5.

    Returns ``(QuasiStationaryResult, FixedPointTrace)``. The result carries
    the corrected ``rates`` and per-transition ``corrections``.
    """
    _require_semi_markov(model)
    if not 0.0 < relaxation <= 1.0:
        raise DomainError("relaxation must lie in (0, 1]")
    base = quasi_stationary(build_generator(model, model.mean_rates()))
    k = base.k if initial_k is None else float(initial_k)
    trace = FixedPointTrace(k0=k)
    omega = relaxation
    for _ in range(max_iter):
        try:
            rates, corrections = corrected_rates(model, k)
            qs = quasi_stationary(build_generator(model, rates))
        except DivergenceError as exc:
            raise DivergenceError(f"at k={k:.6g}: {exc}", trace) from None
        except (EigenError, IntegrationError, DomainError) as exc:
            raise ConvergenceError(f"at k={k:.6g}: {exc}", trace) from None
        res = qs.k - k
        trace.steps.append(FixedPointStep(k, qs.k, res,
                                          {t: c.mu_hat for t, c in corrections.items()}, omega))
        if abs(res) < tol:
            trace.converged = True
            qs.rates = rates
            qs.corrections = corrections
            return qs, trace
        r = trace.residuals[-3:]
        if omega > 0.5 and len(r) == 3 and (r[0] > 0) != (r[1] > 0) and (r[1] > 0) != (r[2] > 0):
            omega = 0.5
        k = k + omega * res
        if not k > 0.0:
            raise ConvergenceError(f"iteration produced a non-positive decay rate {k}", trace)
    raise ConvergenceError(
        f"no convergence after {max_iter} iterations (last |dk|={trace.final_residual:.3e})",
        trace)


# -- two-step renewal oracle -------------------------------------------------


def _surv_product(dists, t):
    out = 1.0
    for d in dists:
        out *= float(d.sf(t))
    return out


def _integrate_to_inf(f, dists):
    """Integrate over [0, support end) splitting at a few quantiles; last piece infinite."""
    end = min(d.support_end for d in dists)
    cuts = sorted({float(d.quantile(p)) for d in dists if d.kind != "fixed_delay"
                   for p in (0.5, 0.999)})
    cuts = [c for c in cuts if 0.0 < c < end]
    edges = [0.0] + cuts + [end]
    total = 0.0
    for a, b in zip(edges, edges[1:]):
        total += integrate.quad(f, a, b, epsabs=1e-14, epsrel=1e-13, limit=2000)[0]
    return total


def _embedded_row(outs):
    """Jump probabilities and mean holding time for one state's outflows."""
    dists = [t.dist for t in outs]
    delays = [d.delay for d in dists if d.kind == "fixed_delay"]
    if len(delays) != len(set(delays)):
        raise DomainError("fixed delays tie exactly; the race winner is undefined")
    probs = []
    for j, d in enumerate(dists):
        others = dists[:j] + dists[j + 1:]
        if d.kind == "fixed_delay":
            probs.append(_surv_product(others, d.delay))
        else:
            probs.append(_integrate_to_inf(
                lambda t, d=d, o=others: float(d.pdf(t)) * _surv_product(o, t), dists))
    mean = _integrate_to_inf(lambda t: _surv_product(dists, t), dists)
    return probs, mean


def embedded_renewal_steady(model) -> SteadyState:
    """Steady state by the classical two-step route.

    Solve the embedded jump chain ``pi K = pi`` and weight by mean holding
    times. Works directly from the holding-time laws and never touches the
    equivalent-rate machinery, so it serves as an independent check of
    :func:`correct_steady`.
    """
    _require_semi_markov(model)
    n = model.n
    kmat = np.zeros((n, n))
    means = np.zeros(n)
    for i, s in enumerate(model.states):
        outs = model.outflows(s.name)
        if s.absorbing:
            ren = model.artificial_renewal
            if ren is None or ren.source != s.name:
                raise DomainError(f"absorbing state {s.name!r} has no renewal transition")
            kmat[i, model.index(ren.target)] = 1.0
            means[i] = 1.0 / ren.rate
            continue
        if not outs:
            raise DomainError(f"state {s.name!r} has no outflows")
        probs, means[i] = _embedded_row(outs)
        for t, pr in zip(outs, probs):
            kmat[i, model.index(t.target)] += pr
    a = kmat.T - np.eye(n)
    a[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    pi = np.linalg.solve(a, b)
    p = pi * means
    p = p / p.sum()
    return SteadyState(p, float(np.max(np.abs(pi @ kmat - pi))), tuple(model.state_names))
