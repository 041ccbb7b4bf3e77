"""Median/MAD deviation scores and the generalized ESD outlier loop."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import betaincinv

from knobrag.errors import DegenerateSample, EmptyInput, SeriesTooShort, ZeroMad
from knobrag.telemetry.stl import MIN_LENGTH, residual_scales, stl_decompose

DEFAULT_ALPHA = 0.05
# 1 / Phi^-1(3/4): sigma = MAD_TO_SIGMA * MAD for normal samples
MAD_TO_SIGMA = 1.482602218505602
# relative MAD at or below which residuals count as round-off; the largest
# seen on exactly regular series is about 1e-14
ROUNDOFF_MAD = 1e-12


@dataclass(frozen=True)
class AnomalyPoint:
    metric: str
    index: int
    timestamp: int
    value: float
    score: float
    iteration: int
    critical_value: float


def lower_median(x) -> float:
    """Median that is always a sample member (lower middle for even sizes)."""
    a = np.asarray(x, dtype=float).ravel()
    if a.size == 0:
        raise EmptyInput("median of an empty sample")
    k = (a.size - 1) // 2
    return float(np.partition(a, k)[k])


def mad(residuals) -> float:
    """Median absolute deviation from the (lower) median, unscaled."""
    a = np.asarray(residuals, dtype=float).ravel()
    if a.size == 0:
        raise EmptyInput("MAD of an empty sample")
    return lower_median(np.abs(a - lower_median(a)))


def deviation_scores(residuals) -> np.ndarray:
    """|e_j - median(e)| / MAD for every residual.

    Raises ZeroMad when the MAD is zero; callers treat that as "no
    statistically meaningful deviation" rather than dividing by a floor.
    """
    a = np.asarray(residuals, dtype=float).ravel()
    med = lower_median(a)
    dev = np.abs(a - med)
    scale = lower_median(dev)
    if scale <= 0:
        raise ZeroMad("median absolute deviation is zero")
    return dev / scale


def t_quantile(p: float, df: float) -> float:
    """Student-t quantile through the inverse regularized incomplete beta."""
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1)")
    if p == 0.5:
        return 0.0
    tail = min(p, 1.0 - p)
    x = float(betaincinv(df / 2.0, 0.5, 2.0 * tail))
    t = math.sqrt(df * (1.0 - x) / x)
    return t if p > 0.5 else -t


def esd_critical_value(n: int, k: int, alpha: float = DEFAULT_ALPHA) -> float:
    """Generalized ESD critical value for removal step ``k`` of ``n`` points.

    The detection loop evaluates it at k = 1, 2, ... for its k-th removal.
    """
    df = n - k - 1
    if df < 2:
        raise DegenerateSample(f"n={n}, k={k} leaves {df} degrees of freedom")
    if not 0.0 < alpha < 1.0:
        raise DegenerateSample("alpha must lie in (0, 1)")
    p = 1.0 - alpha / (2.0 * (n - k + 1))
    t = t_quantile(p, df)
    return (n - k) * t / math.sqrt((df + t * t) * (n - k + 1))


def default_max_anomalies(length: int) -> int:
    return max(1, math.ceil(0.05 * length))


def _exceeds(score: float, critical: float) -> bool:
    # the raw MAD underestimates sigma by 1/MAD_TO_SIGMA on normal data; the
    # critical value assumes a sigma-standardized statistic
    return score > MAD_TO_SIGMA * critical


def esd_on_residuals(residuals, alpha: float = DEFAULT_ALPHA, max_anomalies: int | None = None):
    """Iterative removal on a fixed residual vector (no re-decomposition).

    Returns ``(index, score, iteration, critical_value)`` in removal order.
    Median and MAD are recomputed over the remaining points each round.
    """
    e = np.asarray(residuals, dtype=float).ravel()
    return _esd_loop(e.size, lambda alive, j: e, alpha, max_anomalies)


def _esd_loop(n, residual_fn, alpha, max_anomalies, mad_floor=0.0):
    if max_anomalies is None:
        max_anomalies = default_max_anomalies(n)
    alive = np.ones(n, dtype=bool)
    found = []
    e = residual_fn(alive, None)
    for k in range(1, max_anomalies + 1):
        if n - k - 1 < 2:
            break
        idx = np.flatnonzero(alive)
        rest = e[idx]
        med = lower_median(rest)
        dev = np.abs(rest - med)
        scale = lower_median(dev)
        if scale <= mad_floor:
            break
        scores = dev / scale
        j = int(np.argmax(scores))
        c_max = float(scores[j])
        lam = esd_critical_value(n, k, alpha)
        if not _exceeds(c_max, lam):
            break
        found.append((int(idx[j]), c_max, k, lam))
        alive[idx[j]] = False
        if k < max_anomalies:
            e = residual_fn(alive, int(idx[j]))
    return found


def detect_anomalies(series, alpha: float = DEFAULT_ALPHA, max_anomalies: int | None = None) -> list[AnomalyPoint]:
    """Flag residual outliers of one metric, sorted by index.

    Residuals are divided by their per-index standard deviation under the
    linear decomposition, since edge points are fit more closely than the
    interior. After each removal the dropped points are given the values
    for which their own residuals vanish, i.e. the fit they would get if
    they were missing, so a spike cannot leak into the seasonal estimate of
    its same-phase neighbours.
    """
    values = np.asarray(series.values, dtype=float)
    if values.size < MIN_LENGTH:
        raise SeriesTooShort(f"{series.metric}: need at least {MIN_LENGTH} samples")
    n = values.size
    dec = stl_decompose(values, series.period)
    period = dec.period
    scales = residual_scales(n, period)
    resid = dec.residual.copy()
    dropped: list[int] = []
    columns = np.zeros((n, 0))

    def residuals(alive, j):
        nonlocal columns
        if j is not None:
            impulse = np.zeros(n)
            impulse[j] = 1.0
            columns = np.column_stack([columns, stl_decompose(impulse, period, infer=False).residual])
            dropped.append(j)
            block = columns[dropped]
            try:
                shift = np.linalg.solve(block, -resid[dropped])
            except np.linalg.LinAlgError:
                shift = np.linalg.lstsq(block, -resid[dropped], rcond=None)[0]
            resid[:] += columns @ shift
        return np.divide(resid, scales, out=np.zeros(n), where=scales > 0)

    # round-off residuals of a perfectly regular series must not be scored
    floor = ROUNDOFF_MAD * float(np.abs(values).max())
    hits = _esd_loop(values.size, residuals, alpha, max_anomalies, floor)
    points = [
        AnomalyPoint(
            metric=series.metric,
            index=j,
            timestamp=int(series.timestamps[j]),
            value=float(values[j]),
            score=c,
            iteration=it,
            critical_value=lam,
        )
        for j, c, it, lam in hits
    ]
    return sorted(points, key=lambda p: p.index)
