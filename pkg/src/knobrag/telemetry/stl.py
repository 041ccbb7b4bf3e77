"""Seasonal-trend decomposition with LOESS (one inner pass, no robustness loop).

The smoothing steps follow Cleveland et al. (1990): cycle-subseries LOESS,
a low-pass filter of the smoothed subseries, then LOESS of the deseasonalized
series for the trend. Every LOESS pass on an evenly spaced grid is a banded
linear operator that only depends on the grid length and span, so operators
are built once and cached, and all functions accept ``(n,)`` or ``(n, m)``
arrays (``m`` independent series sharing one grid).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from knobrag.errors import SeriesTooShort

SEASONAL_SPAN = 7
MIN_LENGTH = 4
ACF_THRESHOLD = 0.3
MIN_LAG = 4


@dataclass(frozen=True)
class Decomposition:
    seasonal: np.ndarray
    trend: np.ndarray
    residual: np.ndarray
    period: int | None = None


def next_odd(x: float) -> int:
    """Smallest odd integer >= x."""
    n = int(np.ceil(x))
    return n if n % 2 == 1 else n + 1


def trend_span(period: int) -> int:
    return next_odd(1.5 * period)


def low_pass_span(period: int) -> int:
    return next_odd(period)


def degraded_trend_span(n: int) -> int:
    # no usable season: a fairly local smoother keeps spikes in the residual
    return max(5, next_odd(n / 10))


class _Banded:
    """A LOESS smoother as rows of weights over contiguous windows."""

    __slots__ = ("start", "weights", "n_in")

    def __init__(self, start: np.ndarray, weights: np.ndarray, n_in: int):
        self.start = start
        self.weights = weights
        self.n_in = n_in

    def apply(self, y: np.ndarray) -> np.ndarray:
        width = self.weights.shape[1]
        idx = self.start[:, None] + np.arange(width)[None, :]
        if y.ndim == 1:
            return np.einsum("ij,ij->i", self.weights, y[idx])
        return np.einsum("ij,ijm->im", self.weights, y[idx])


def _est_rows(n: int, span: int, xs: np.ndarray, nleft: np.ndarray, nright: np.ndarray):
    """Local-linear tricube weights for each fit position on the grid 1..n.

    Returns window starts (0-based), the weight rows and a mask of fits that
    had positive total weight.
    """
    width = int((nright - nleft).max()) + 1
    j = nleft[:, None] + np.arange(width)[None, :]
    inside = j <= nright[:, None]
    h = np.maximum(xs - nleft, nright - xs).astype(float)
    if span > n:
        h += (span - n) // 2
    r = np.abs(j - xs[:, None]).astype(float)
    hh = h[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.where(r <= 0.001 * hh, 1.0, (1.0 - (r / hh) ** 3) ** 3)
    w = np.where(inside & (r <= 0.999 * hh), w, 0.0)
    total = w.sum(axis=1)
    ok = total > 0
    w[ok] /= total[ok, None]
    a = (w * j).sum(axis=1)
    c = (w * (j - a[:, None]) ** 2).sum(axis=1)
    lin = ok & (h > 0) & (np.sqrt(c) > 0.001 * (n - 1))
    b = np.zeros_like(a)
    b[lin] = (xs[lin] - a[lin]) / c[lin]
    w = np.where(lin[:, None], w * (b[:, None] * (j - a[:, None]) + 1.0), w)
    return (nleft - 1).astype(np.intp), w, ok


@lru_cache(maxsize=256)
def _smoother(n: int, span: int) -> _Banded:
    """LOESS fit at every grid point 1..n."""
    xs = np.arange(1, n + 1)
    if span >= n:
        nleft = np.ones(n, dtype=np.int64)
        nright = np.full(n, n, dtype=np.int64)
    else:
        nsh = (span + 1) // 2
        nleft = np.clip(xs - nsh + 1, 1, n - span + 1)
        nright = nleft + span - 1
    start, w, ok = _est_rows(n, span, xs, nleft, nright)
    if not ok.all():
        # a failed fit keeps the input value
        w[~ok] = 0.0
        rows = np.flatnonzero(~ok)
        w[rows, xs[rows] - nleft[rows]] = 1.0
    return _Banded(start, w, n)


@lru_cache(maxsize=256)
def _extended_smoother(k: int, span: int) -> np.ndarray:
    """Dense (k+2, k) operator: fits at 1..k plus one step beyond each end."""
    out = np.zeros((k + 2, k))
    if k < 2:
        out[:, 0] = 1.0
        return out
    out[1:k + 1] = _smoother(k, span).apply(np.eye(k))
    xs = np.array([0, k + 1])
    nleft = np.array([1, max(1, k - span + 1)])
    nright = np.array([min(span, k), k])
    start, w, ok = _est_rows(k, span, xs, nleft, nright)
    for row, s0, wr in zip((0, k + 1), start, w):
        out[row, s0:s0 + wr.size] = wr[: k - s0]
    # a failed end fit copies the neighbouring smoothed value
    if not ok[0]:
        out[0] = out[1]
    if not ok[1]:
        out[k + 1] = out[k]
    return out


def loess_smooth(y: np.ndarray, span: int) -> np.ndarray:
    """Local-linear tricube LOESS of an evenly spaced series."""
    y = np.asarray(y, dtype=float)
    n = y.shape[0]
    if n < 2:
        return y.copy()
    return _smoother(n, span).apply(y)


def _moving_average(x: np.ndarray, length: int) -> np.ndarray:
    c = np.cumsum(x, axis=0)
    zero = np.zeros((1,) + x.shape[1:])
    c = np.concatenate([zero, c], axis=0)
    return (c[length:] - c[:-length]) / length


def _cycle_subseries(y: np.ndarray, period: int, span: int) -> np.ndarray:
    """Smooth each cycle-subseries and extend it one cycle on both sides."""
    n = y.shape[0]
    out = np.empty((n + 2 * period,) + y.shape[1:])
    lengths = (n - 1 - np.arange(period)) // period + 1
    for k in np.unique(lengths):
        phases = np.flatnonzero(lengths == k)
        op = _extended_smoother(int(k), span)
        rows = phases[None, :] + period * np.arange(k)[:, None]          # (k, P)
        sub = y[rows]                                                     # (k, P, ...)
        smoothed = np.tensordot(op, sub, axes=(1, 0))                     # (k+2, P, ...)
        dest = phases[None, :] + period * np.arange(k + 2)[:, None]
        out[dest] = smoothed
    return out


def stl_core(y: np.ndarray, period: int, seasonal_span: int = SEASONAL_SPAN,
             trend_len: int | None = None, low_pass_len: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """One inner STL pass starting from a zero trend; returns (seasonal, trend)."""
    n = y.shape[0]
    nt = trend_len or trend_span(period)
    nl = low_pass_len or low_pass_span(period)
    c = _cycle_subseries(y, period, seasonal_span)
    low = _moving_average(_moving_average(_moving_average(c, period), period), 3)
    low = _smoother(n, nl).apply(low)
    seasonal = c[period:period + n] - low
    trend = _smoother(n, nt).apply(y - seasonal)
    return seasonal, trend


# probe length (in cycles plus padding) whose left half shows the whole edge
# profile of the residual operator; the interior beyond it is constant
PROBE_CYCLES = 12
PROBE_PAD = 48
# row norms below this are round-off of an operator row that is exactly zero
NULL_SCALE = 1e-8


def _operator_row_norms(fit: np.ndarray) -> np.ndarray:
    resid = np.eye(fit.shape[0]) - fit
    return np.sqrt((resid ** 2).sum(axis=1))


@lru_cache(maxsize=128)
def _seasonal_scales_exact(n: int, period: int) -> np.ndarray:
    # column j of the fit is the response to a unit impulse at j
    seasonal, trend = stl_core(np.eye(n), period)
    return _operator_row_norms(seasonal + trend)


@lru_cache(maxsize=128)
def _seasonal_edge_profile(period: int) -> np.ndarray:
    length = PROBE_CYCLES * period + PROBE_PAD
    return _seasonal_scales_exact(length, period)[: length // 2].copy()


@lru_cache(maxsize=128)
def _degraded_scales(n: int) -> np.ndarray:
    op = _smoother(n, degraded_trend_span(n))
    rows = np.arange(n)
    own = op.weights[rows, rows - op.start]
    return np.sqrt(np.maximum((op.weights ** 2).sum(axis=1) - 2.0 * own + 1.0, 0.0))


def residual_scales(n: int, period: int | None) -> np.ndarray:
    """Per-index standard deviation of the residual under unit white noise.

    The decomposition is linear in its input, so the residual is M y for a
    fixed matrix M and these are the row norms of M. Edge positions are fit
    more closely than the interior and get smaller scales. ``period`` is
    the one the decomposition actually used (None for the no-season path).
    Positions whose residual is identically zero get scale 0.
    """
    if n < MIN_LENGTH:
        raise SeriesTooShort(f"series of length {n} is shorter than {MIN_LENGTH}")
    if period is None or period < 2 or n < 2 * period:
        out = _degraded_scales(n).copy()
    elif n < PROBE_CYCLES * period + PROBE_PAD:
        out = _seasonal_scales_exact(n, period).copy()
    else:
        edge = _seasonal_edge_profile(period)
        out = np.full(n, edge[-1])
        out[: edge.size] = edge
        # the decomposition commutes with time reversal
        out[n - edge.size:] = edge[::-1]
    # e.g. two cycles: each two-point subseries is fit exactly
    out[out < NULL_SCALE] = 0.0
    return out


def infer_period(values: np.ndarray) -> int | None:
    """Strongest autocorrelation peak over lags [4, n/2], or None if weak.

    The series is linearly detrended first and only local maxima of the ACF
    count as peaks, so a slowly decaying ACF (trend, random walk) does not
    report its smallest lag as a period.
    """
    x = np.asarray(values, dtype=float)
    n = x.size
    max_lag = n // 2
    if max_lag < MIN_LAG + 1:
        return None
    t = np.arange(n, dtype=float)
    x = x - np.polyval(np.polyfit(t, x, 1), t)
    denom = float(np.dot(x, x))
    if denom <= 1e-12 * max(1.0, float(np.abs(values).max()) ** 2) * n:
        return None
    size = 1 << int(np.ceil(np.log2(2 * n)))
    f = np.fft.rfft(x, size)
    acf = np.fft.irfft(f * np.conj(f), size)[: max_lag + 2] / denom
    lags = np.arange(MIN_LAG, max_lag + 1)
    peak = (acf[lags] >= acf[lags - 1]) & (acf[lags] >= acf[lags + 1])
    if not peak.any():
        return None
    cand = lags[peak]
    best = int(cand[np.argmax(acf[cand])])
    if acf[best] <= ACF_THRESHOLD:
        return None
    return best


def stl_decompose(values, period: int | None = None, *, infer: bool = True) -> Decomposition:
    """Decompose a series into seasonal + trend + residual.

    ``values`` is an array or a TelemetrySeries (whose period is used when
    ``period`` is omitted). A missing period is inferred from the
    autocorrelation unless ``infer`` is false, which forces the no-season
    path. Series shorter than two periods (or without a detectable period)
    get a zero seasonal component and a LOESS trend of the raw values. The
    residual is defined as value - seasonal - trend.
    """
    if hasattr(values, "metric") and hasattr(values, "values"):
        period = values.period if period is None else period
        values = values.values
    y = np.asarray(values, dtype=float)
    n = y.shape[0]
    if n < MIN_LENGTH:
        raise SeriesTooShort(f"series of length {n} is shorter than {MIN_LENGTH}")
    if period is None and infer:
        period = infer_period(y)
    if period is None or period < 2 or n < 2 * period:
        seasonal = np.zeros_like(y)
        trend = loess_smooth(y, degraded_trend_span(n))
        used = None
    else:
        seasonal, trend = stl_core(y, int(period))
        used = int(period)
    residual = y - seasonal - trend
    return Decomposition(seasonal=seasonal, trend=trend, residual=residual, period=used)
