"""Holding-time distributions: exponential, fixed delay, Weibull, lognormal.

Every function accepts a scalar or a numpy array of times. Survival is always
computed directly (never as ``1 - cdf``) so that far tails keep full relative
precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import special

from .errors import BeyondSupportError, DomainError

__all__ = [
    "DistributionSpec",
    "KINDS",
    "distribution_eval",
    "moments",
    "from_mean_scv",
    "sample",
    "from_json",
    "to_json",
]

KINDS = ("exponential", "fixed_delay", "weibull", "lognormal")

_SQRT2 = math.sqrt(2.0)
_SQRT2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class DistributionSpec:
    """An immutable holding-time law.

    Only the fields belonging to ``kind`` are set:

    * exponential: ``rate``
    * fixed_delay: ``delay``
    * weibull: ``shape``, ``scale``
    * lognormal: ``mean_log``, ``sd_log``
    """

    kind: str
    rate: Optional[float] = None
    delay: Optional[float] = None
    shape: Optional[float] = None
    scale: Optional[float] = None
    mean_log: Optional[float] = None
    sd_log: Optional[float] = None

    def __post_init__(self):
        required = {
            "exponential": ("rate",),
            "fixed_delay": ("delay",),
            "weibull": ("shape", "scale"),
            "lognormal": ("mean_log", "sd_log"),
        }
        if self.kind not in required:
            raise DomainError(f"unknown distribution kind {self.kind!r}")
        for name in ("rate", "delay", "shape", "scale", "mean_log", "sd_log"):
            value = getattr(self, name)
            if name in required[self.kind]:
                if value is None or not math.isfinite(value):
                    raise DomainError(f"{self.kind}: parameter {name} must be a finite number")
                # mean_log is a location parameter and may take any sign
                if name != "mean_log" and value <= 0.0:
                    raise DomainError(f"{self.kind}: parameter {name} must be > 0, got {value}")
                object.__setattr__(self, name, float(value))
            elif value is not None:
                raise DomainError(f"{self.kind} takes no parameter {name}")

    # -- constructors -----------------------------------------------------

    @classmethod
    def exponential(cls, rate: float) -> "DistributionSpec":
        return cls("exponential", rate=rate)

    @classmethod
    def fixed_delay(cls, delay: float) -> "DistributionSpec":
        return cls("fixed_delay", delay=delay)

    @classmethod
    def weibull(cls, shape: float, scale: float) -> "DistributionSpec":
        return cls("weibull", shape=shape, scale=scale)

    @classmethod
    def lognormal(cls, mean_log: float, sd_log: float) -> "DistributionSpec":
        return cls("lognormal", mean_log=mean_log, sd_log=sd_log)

    # -- evaluation -------------------------------------------------------

    @property
    def is_exponential(self) -> bool:
        return self.kind == "exponential"

    def _z(self, t):
        with np.errstate(divide="ignore"):
            return (np.log(t) - self.mean_log) / self.sd_log

    def sf(self, t):
        """Survival function ``1 - F(t)``."""
        t = _check_time(t)
        if self.kind == "exponential":
            return np.exp(-self.rate * t)
        if self.kind == "fixed_delay":
            return np.where(t < self.delay, 1.0, 0.0)
        if self.kind == "weibull":
            return np.exp(-((t / self.scale) ** self.shape))
        return 0.5 * special.erfc(self._z(t) / _SQRT2)

    def logsf(self, t):
        t = _check_time(t)
        if self.kind == "exponential":
            return -self.rate * t
        if self.kind == "fixed_delay":
            return np.where(t < self.delay, 0.0, -np.inf)
        if self.kind == "weibull":
            return -((t / self.scale) ** self.shape)
        return special.log_ndtr(-self._z(t))

    def cdf(self, t):
        t = _check_time(t)
        if self.kind == "exponential":
            return -np.expm1(-self.rate * t)
        if self.kind == "fixed_delay":
            return np.where(t < self.delay, 0.0, 1.0)
        if self.kind == "weibull":
            return -np.expm1(-((t / self.scale) ** self.shape))
        return 0.5 * special.erfc(-self._z(t) / _SQRT2)

    def pdf(self, t):
        """Density; zero everywhere for a fixed delay (its mass is a point at ``delay``)."""
        t = _check_time(t)
        if self.kind == "exponential":
            return self.rate * np.exp(-self.rate * t)
        if self.kind == "fixed_delay":
            return np.zeros_like(t)
        if self.kind == "weibull":
            b, s = self.shape, self.scale
            with np.errstate(divide="ignore", invalid="ignore"):
                x = t / s
                out = (b / s) * x ** (b - 1.0) * np.exp(-(x**b))
            return out
        z = self._z(t)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.exp(-0.5 * z * z) / (t * self.sd_log * _SQRT2PI)
        return np.where(t > 0.0, out, 0.0)

    def logpdf(self, t):
        """Log density, ``-inf`` where the density vanishes; no underflow in the tail."""
        t = _check_time(t)
        with np.errstate(divide="ignore", invalid="ignore"):
            if self.kind == "exponential":
                return math.log(self.rate) - self.rate * t
            if self.kind == "fixed_delay":
                return np.full_like(t, -np.inf)
            if self.kind == "weibull":
                b, s = self.shape, self.scale
                x = t / s
                out = math.log(b / s) + (b - 1.0) * np.log(x) - x**b
                at_zero = math.log(b / s) if b == 1.0 else (np.inf if b < 1.0 else -np.inf)
                return np.where(t > 0.0, out, at_zero)
            z = self._z(t)
            out = -0.5 * z * z - np.log(t * self.sd_log * _SQRT2PI)
        return np.where(t > 0.0, out, -np.inf)

    def hazard(self, t):
        """``pdf / sf``; raises :class:`BeyondSupportError` where ``sf == 0``."""
        t = _check_time(t)
        if self.kind == "exponential":
            return np.full_like(t, self.rate)
        s = self.sf(t)
        if np.any(s <= 0.0):
            bad = np.atleast_1d(t)[np.atleast_1d(s) <= 0.0]
            raise BeyondSupportError(
                f"hazard of {self.kind} undefined at t={bad[0]!r}: survival is zero"
            )
        if self.kind == "fixed_delay":
            return np.zeros_like(t)
        if self.kind == "weibull":
            b, s_ = self.shape, self.scale
            with np.errstate(divide="ignore"):
                return (b / s_) * (t / s_) ** (b - 1.0)
        return self.pdf(t) / s

    def quantile(self, p):
        """Inverse CDF. ``p`` must lie in [0, 1)."""
        p = np.asarray(p, dtype=float)
        if np.any((p < 0.0) | (p >= 1.0)):
            raise DomainError("quantile level must lie in [0, 1)")
        if self.kind == "exponential":
            return -np.log1p(-p) / self.rate
        if self.kind == "fixed_delay":
            return np.where(p > 0.0, self.delay, 0.0)
        if self.kind == "weibull":
            return self.scale * (-np.log1p(-p)) ** (1.0 / self.shape)
        return np.exp(self.mean_log + self.sd_log * special.ndtri(p))

    # -- moments ----------------------------------------------------------

    @property
    def mean(self) -> float:
        if self.kind == "exponential":
            return 1.0 / self.rate
        if self.kind == "fixed_delay":
            return self.delay
        if self.kind == "weibull":
            return self.scale * math.gamma(1.0 + 1.0 / self.shape)
        return math.exp(self.mean_log + 0.5 * self.sd_log**2)

    @property
    def scv(self) -> float:
        if self.kind == "exponential":
            return 1.0
        if self.kind == "fixed_delay":
            return 0.0
        if self.kind == "weibull":
            # ratio of log-gammas avoids overflow for small shapes
            g1 = math.lgamma(1.0 + 1.0 / self.shape)
            g2 = math.lgamma(1.0 + 2.0 / self.shape)
            return math.expm1(g2 - 2.0 * g1)
        return math.expm1(self.sd_log**2)

    @property
    def tail_rate(self) -> float:
        """Exponential decay rate of the survival tail.

        ``inf`` for bounded or super-exponential tails, ``0`` for
        sub-exponential (heavy) tails.
        """
        if self.kind == "exponential":
            return self.rate
        if self.kind == "fixed_delay":
            return math.inf
        if self.kind == "weibull":
            if self.shape > 1.0:
                return math.inf
            if self.shape == 1.0:
                return 1.0 / self.scale
            return 0.0
        return 0.0

    @property
    def support_end(self) -> float:
        return self.delay if self.kind == "fixed_delay" else math.inf


def _check_time(t):
    t = np.asarray(t, dtype=float)
    if np.any(np.isnan(t)) or np.any(t < 0.0):
        raise DomainError("time must be >= 0")
    return t


def _scalar(x):
    x = np.asarray(x)
    return float(x) if x.ndim == 0 else x


def distribution_eval(d: DistributionSpec, t) -> dict:
    """Evaluate cdf, survival, pdf and hazard at ``t``.

    Past the end of the support the hazard does not exist; this raises
    :class:`BeyondSupportError` rather than returning a number.
    """
    return {
        "cdf": _scalar(d.cdf(t)),
        "survival": _scalar(d.sf(t)),
        "pdf": _scalar(d.pdf(t)),
        "hazard": _scalar(d.hazard(t)),
    }


def moments(d: DistributionSpec) -> dict:
    return {"mean": d.mean, "scv": d.scv}


def _weibull_scv(shape: float) -> float:
    return DistributionSpec.weibull(shape, 1.0).scv


def from_mean_scv(kind: str, mean: float, scv: Optional[float] = None,
                  shape: Optional[float] = None) -> DistributionSpec:
    """Build a distribution from its mean and squared coefficient of variation.

    Weibull is parametrized by ``shape`` instead of ``scv`` (pass one of the
    two; an ``scv`` is inverted numerically).
    """
    if not (mean > 0.0 and math.isfinite(mean)):
        raise DomainError(f"mean must be > 0, got {mean}")
    if kind == "exponential":
        if scv is not None and abs(scv - 1.0) > 1e-12:
            raise DomainError("exponential distributions have scv = 1")
        return DistributionSpec.exponential(1.0 / mean)
    if kind in ("fixed_delay", "fixed"):
        if scv not in (None, 0, 0.0):
            raise DomainError("fixed delays have scv = 0")
        return DistributionSpec.fixed_delay(mean)
    if kind == "lognormal":
        if scv is None or not scv > 0.0:
            raise DomainError("lognormal requires scv > 0")
        var_log = math.log1p(scv)
        return DistributionSpec.lognormal(math.log(mean) - 0.5 * var_log, math.sqrt(var_log))
    if kind == "weibull":
        if shape is None:
            if scv is None or not scv > 0.0:
                raise DomainError("weibull requires a shape (or an scv > 0)")
            shape = _weibull_shape_for_scv(scv)
        elif scv is not None:
            raise DomainError("pass either shape or scv for weibull, not both")
        if not shape > 0.0:
            raise DomainError(f"weibull shape must be > 0, got {shape}")
        return DistributionSpec.weibull(shape, mean / math.gamma(1.0 + 1.0 / shape))
    raise DomainError(f"unsupported parametrization for kind {kind!r}")


def _weibull_shape_for_scv(scv: float) -> float:
    from scipy.optimize import brentq

    # scv is strictly decreasing in shape
    lo, hi = 0.05, 200.0
    f = lambda b: math.log(_weibull_scv(b)) - math.log(scv)  # noqa: E731
    if f(lo) < 0.0 or f(hi) > 0.0:
        raise DomainError(f"weibull scv {scv} outside supported range")
    return brentq(f, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)


def sample(d: DistributionSpec, u):
    """Inverse-CDF sample for uniform variate(s) ``u`` in the open interval (0, 1)."""
    u = np.asarray(u, dtype=float)
    if np.any(~((u > 0.0) & (u < 1.0))):
        raise DomainError("uniform variate must lie in (0, 1)")
    return _scalar(d.quantile(u))


def from_json(fragment: dict) -> DistributionSpec:
    """Build a distribution from its JSON fragment (numeric values only)."""
    frag = dict(fragment)
    kind = frag.pop("kind", None)
    keys = set(frag)

    def take(*names):
        if keys != set(names):
            raise DomainError(
                f"{kind} distribution expects keys {sorted(names)}, got {sorted(keys)}"
            )
        return [float(frag[n]) for n in names]

    if kind == "exponential":
        if keys == {"mean"}:
            return from_mean_scv("exponential", *take("mean"))
        return DistributionSpec.exponential(*take("rate"))
    if kind in ("fixed", "fixed_delay"):
        return DistributionSpec.fixed_delay(*take("delay"))
    if kind == "weibull":
        if "mean" in keys:
            shape, mean = take("shape", "mean")
            return from_mean_scv("weibull", mean, shape=shape)
        return DistributionSpec.weibull(*take("shape", "scale"))
    if kind == "lognormal":
        if "mean" in keys:
            mean, scv = take("mean", "scv")
            return from_mean_scv("lognormal", mean, scv=scv)
        return DistributionSpec.lognormal(*take("mean_log", "sd_log"))
    raise DomainError(f"unknown distribution kind {kind!r}")


def to_json(d: DistributionSpec) -> dict:
    if d.kind == "exponential":
        return {"kind": "exponential", "rate": d.rate}
    if d.kind == "fixed_delay":
        return {"kind": "fixed", "delay": d.delay}
    if d.kind == "weibull":
        return {"kind": "weibull", "shape": d.shape, "scale": d.scale}
    return {"kind": "lognormal", "mean_log": d.mean_log, "sd_log": d.sd_log}
