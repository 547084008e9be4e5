"""Student t distribution from the regularized incomplete beta function.

The continued fraction is evaluated with the modified Lentz method and is
vectorized over numpy arrays, so CDFs of large samples stay cheap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = ["betainc", "t_cdf", "t_sf", "t_pdf", "t_quantile", "TDistribution"]

_TINY = 1e-300
_EPS = 1e-16
_MAX_ITER = 500


def _betacf(a: float, b: float, x: np.ndarray) -> np.ndarray:
    """Continued fraction for I_x(a, b), valid for x < (a + 1) / (a + b + 2)."""
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = np.ones_like(x)
    d = 1.0 - qab * x / qap
    d = np.where(np.abs(d) < _TINY, _TINY, d)
    d = 1.0 / d
    h = d.copy()
    for m in range(1, _MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = np.where(np.abs(d) < _TINY, _TINY, d)
        c = 1.0 + aa / c
        c = np.where(np.abs(c) < _TINY, _TINY, c)
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = np.where(np.abs(d) < _TINY, _TINY, d)
        c = 1.0 + aa / c
        c = np.where(np.abs(c) < _TINY, _TINY, c)
        d = 1.0 / d
        delta = d * c
        h *= delta
        if np.all(np.abs(delta - 1.0) < _EPS):
            break
    return h


def _front(a: float, b: float, x: np.ndarray, xc: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        log = math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b) + a * np.log(x) + b * np.log(xc)
    return np.exp(log)


def betainc(a: float, b: float, x, xc=None):
    """Regularized incomplete beta ``I_x(a, b)``.

    ``xc`` may carry ``1 - x`` computed without cancellation.
    """
    scalar = np.ndim(x) == 0
    x = np.atleast_1d(np.asarray(x, dtype=float))
    xc = 1.0 - x if xc is None else np.atleast_1d(np.asarray(xc, dtype=float))
    out = np.empty_like(x)
    lo = x <= 0.0
    hi = xc <= 0.0
    out[lo] = 0.0
    out[hi] = 1.0
    mid = ~(lo | hi)
    direct = mid & (x < (a + 1.0) / (a + b + 2.0))
    flipped = mid & ~direct
    if direct.any():
        xs, xcs = x[direct], xc[direct]
        out[direct] = _front(a, b, xs, xcs) * _betacf(a, b, xs) / a
    if flipped.any():
        xs, xcs = x[flipped], xc[flipped]
        out[flipped] = 1.0 - _front(b, a, xcs, xs) * _betacf(b, a, xcs) / b
    return float(out[0]) if scalar else out


def _check_df(df: float) -> float:
    if not df > 0:
        raise ValueError(f"degrees of freedom must be positive, got {df}")
    return float(df)


def t_sf(df: float, t):
    """Upper tail ``P(T > t)``."""
    df = _check_df(df)
    scalar = np.ndim(t) == 0
    t = np.atleast_1d(np.asarray(t, dtype=float))
    t2 = t * t
    # tail = I_{df/(df+t^2)}(df/2, 1/2) / 2, with 1 - x passed in exactly
    with np.errstate(invalid="ignore"):
        x = np.where(np.isinf(t), 0.0, df / (df + t2))
        xc = np.where(np.isinf(t), 1.0, t2 / (df + t2))
    tail = 0.5 * betainc(df / 2.0, 0.5, x, xc)
    out = np.where(t > 0, tail, 1.0 - tail)
    out = np.where(np.isnan(t), np.nan, out)
    return float(out[0]) if scalar else out


def t_cdf(df: float, t):
    """``P(T <= t)`` for Student's t with ``df`` degrees of freedom."""
    df = _check_df(df)
    scalar = np.ndim(t) == 0
    t = np.atleast_1d(np.asarray(t, dtype=float))
    out = t_sf(df, -t)
    return float(out[0]) if scalar else out


def t_pdf(df: float, t):
    df = _check_df(df)
    logc = math.lgamma((df + 1) / 2) - math.lgamma(df / 2) - 0.5 * math.log(df * math.pi)
    return np.exp(logc - (df + 1) / 2 * np.log1p(np.asarray(t, dtype=float) ** 2 / df))


def t_quantile(df: float, upper_tail_prob: float) -> float:
    """The point ``t`` with ``P(T > t) = upper_tail_prob``.

    Bisection on a bracket gets close, then Newton steps polish.
    """
    df = _check_df(df)
    q = float(upper_tail_prob)
    if not 0.0 < q < 1.0:
        raise ValueError(f"tail probability must lie in (0, 1), got {upper_tail_prob}")
    if q == 0.5:
        return 0.0
    if q > 0.5:
        return -t_quantile(df, 1.0 - q)
    lo, hi = 0.0, 1.0
    while t_sf(df, hi) > q:
        lo, hi = hi, hi * 2.0
        if hi > 1e300:
            return math.inf
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if t_sf(df, mid) > q:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-6 * max(1.0, hi):
            break
    t = 0.5 * (lo + hi)
    for _ in range(20):
        step = (t_sf(df, t) - q) / float(t_pdf(df, t))
        new = min(max(t + step, lo), hi)
        if abs(new - t) <= 1e-15 * max(1.0, abs(t)):
            t = new
            break
        t = new
    return t


@dataclass(frozen=True)
class TDistribution:
    df: float

    def __post_init__(self) -> None:
        _check_df(self.df)

    def cdf(self, t):
        return t_cdf(self.df, t)

    def sf(self, t):
        return t_sf(self.df, t)

    def pdf(self, t):
        return t_pdf(self.df, t)

    def isf(self, q: float) -> float:
        return t_quantile(self.df, q)

    def ppf(self, p: float) -> float:
        return t_quantile(self.df, 1.0 - p)
