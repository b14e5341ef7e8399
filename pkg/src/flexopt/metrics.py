"""Demand-response metrics on price, CEF and grid-purchase series.

All functions accept plain arrays or :class:`TimeSeries` and an optional
``window`` (slice, index array or boolean mask) to restrict the hours.
Only grid purchase enters; feed-in is not evaluated.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from flexopt.core_types import FlexoptError, TimeSeries

PAIR_TOL = 1e-12


class UndefinedMetricError(FlexoptError, ArithmeticError):
    """A ratio whose denominator vanishes on the selected window."""


def _arr(x, window=None) -> np.ndarray:
    a = x.values if isinstance(x, TimeSeries) else np.asarray(x, dtype=float)
    if a.ndim != 1:
        raise ValueError("metric inputs must be one-dimensional")
    return a if window is None else a[window]


def _pair(a, b, window):
    x, y = _arr(a, window), _arr(b, window)
    if x.shape != y.shape:
        raise ValueError(f"length mismatch: {x.size} vs {y.size}")
    return x, y


def _ratio(num: float, den: float, what: str) -> float:
    if den == 0.0 or not math.isfinite(den):
        raise UndefinedMetricError(f"{what}: zero denominator")
    return num / den


def energy_weighted(signal, purchase, dt: float = 1.0, window=None) -> float:
    s, p = _pair(signal, purchase, window)
    if np.any(p < 0):
        raise ValueError("purchase must be non-negative")
    energy = math.fsum(p * dt)
    if energy <= 0.0:
        raise UndefinedMetricError("no energy purchased in window")
    return math.fsum(s * p * dt) / energy


def time_weighted(signal, dt: float = 1.0, window=None) -> float:
    s = _arr(signal, window)
    if s.size == 0:
        raise UndefinedMetricError("empty window")
    return math.fsum(s * dt) / (s.size * dt)


def ewap(prices, purchase, dt: float = 1.0, window=None) -> float:
    """Energy-weighted average price in EUR/MWh."""
    return energy_weighted(prices, purchase, dt, window)


def ewacef(cefs, purchase, dt: float = 1.0, window=None) -> float:
    return energy_weighted(cefs, purchase, dt, window)


def twap(prices, dt: float = 1.0, window=None) -> float:
    return time_weighted(prices, dt, window)


def twacef(cefs, dt: float = 1.0, window=None) -> float:
    return time_weighted(cefs, dt, window)


def pi_rate(ewap_value: float, twap_value: float) -> float:
    return _ratio(ewap_value, twap_value, "pi rate")


def eps_rate(ewacef_value: float, twacef_value: float) -> float:
    return _ratio(ewacef_value, twacef_value, "epsilon rate")


def tcer(twap_value: float, twacef_value: float) -> float:
    return _ratio(twap_value, twacef_value, "TCER")


def ecer(ewap_value: float, ewacef_value: float) -> float:
    return _ratio(ewap_value, ewacef_value, "ECER")


@dataclass(frozen=True)
class MetricSet:
    """Metric bundle of one purchase profile. Undefined ratios are ``None``."""

    ewap: float | None
    twap: float | None
    ewacef: float | None
    twacef: float | None
    pi_rate: float | None
    eps_rate: float | None
    tcer: float | None
    ecer: float | None
    omega: float | None
    peak_buy: float
    volume_buy: float

    @property
    def defined(self) -> bool:
        return all(v is not None for v in asdict(self).values())

    def as_dict(self) -> dict[str, float | None]:
        return asdict(self)


def _maybe(fn, *args, **kwargs):
    """``fn(*args)``, or ``None`` when an input is undefined or the result is."""
    if any(a is None for a in args):
        return None
    try:
        return fn(*args, **kwargs)
    except UndefinedMetricError:
        return None


def metric_set(prices, cefs, purchase, dt: float = 1.0, window=None) -> MetricSet:
    """Compute every metric for one purchase profile on ``window``."""
    p = _arr(purchase, window)
    tw = _maybe(twap, prices, dt, window=window)
    twc = _maybe(twacef, cefs, dt, window=window)
    ew = _maybe(ewap, prices, purchase, dt, window=window)
    ewc = _maybe(ewacef, cefs, purchase, dt, window=window)
    tc = _maybe(tcer, tw, twc)
    ec = _maybe(ecer, ew, ewc)
    return MetricSet(
        ewap=ew,
        twap=tw,
        ewacef=ewc,
        twacef=twc,
        pi_rate=_maybe(pi_rate, ew, tw),
        eps_rate=_maybe(eps_rate, ewc, twc),
        tcer=tc,
        ecer=ec,
        omega=_maybe(lambda a, b: _ratio(a, b, "omega"), ec, tc),
        peak_buy=float(p.max()) if p.size else 0.0,
        volume_buy=math.fsum(p * dt) / 1000.0,
    )


@dataclass(frozen=True)
class PairMetrics:
    ecer_pair: float | None
    omega_pair: float | None
    defined: bool


def pair_metrics(base: MetricSet, s: MetricSet, tol: float = PAIR_TOL) -> PairMetrics:
    """Cost-emission ratio of moving from baseline ``base`` to scenario ``s``."""
    needed = (base.ewap, s.ewap, base.ewacef, s.ewacef, base.pi_rate, s.pi_rate, base.eps_rate, s.eps_rate)
    if any(v is None for v in needed):
        return PairMetrics(None, None, False)
    d_cef = base.ewacef - s.ewacef
    d_eps = s.eps_rate - base.eps_rate
    if abs(d_cef) < tol or abs(d_eps) < tol:
        return PairMetrics(None, None, False)
    return PairMetrics(
        ecer_pair=(base.ewap - s.ewap) / d_cef,
        omega_pair=(s.pi_rate - base.pi_rate) / d_eps,
        defined=True,
    )


def decarbonization_cost(tac_plain: float, tac_decarb: float) -> float:
    return tac_decarb - tac_plain
