"""Telemetry-to-text: anomaly narratives and question-relevance selection."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from knobrag.embed.vectors import cosine_matrix
from knobrag.errors import MissingCatalogEntry, SeriesTooShort
from knobrag.telemetry.esd import DEFAULT_ALPHA, AnomalyPoint, detect_anomalies
from knobrag.telemetry.series import MetricCatalogEntry, TelemetrySeries, format_number, normal_value

DEFAULT_PERCENTILE = 5.0
DEFAULT_TOP_K = 3


@dataclass(frozen=True)
class AnomalyNarrative:
    metric: str
    explanation: str
    normal_value: float
    anomalous_value: float
    related_knobs: tuple[str, ...]
    text: str


def render(metric: str, normal: float, observed: float, knobs: Sequence[str], explanation: str) -> str:
    text = f"the value of {metric} changed from {format_number(normal)} to {format_number(observed)}"
    if knobs:
        noun = "knob is" if len(knobs) == 1 else "knobs are"
        text += f" and the related {noun} {', '.join(knobs)}"
    if explanation:
        text += f"; {explanation}"
    return text


def narrate(anomaly: AnomalyPoint, catalog, normal: float) -> AnomalyNarrative:
    """Render one anomaly. ``catalog`` is an entry or a metric -> entry mapping."""
    if isinstance(catalog, MetricCatalogEntry):
        entry = catalog
        if entry.metric != anomaly.metric:
            raise MissingCatalogEntry(f"catalog entry is for {entry.metric!r}, not {anomaly.metric!r}")
    else:
        try:
            entry = catalog[anomaly.metric]
        except KeyError:
            raise MissingCatalogEntry(f"no catalog entry for metric {anomaly.metric!r}") from None
    knobs = tuple(entry.related_knobs)
    return AnomalyNarrative(
        metric=anomaly.metric,
        explanation=entry.explanation,
        normal_value=float(normal),
        anomalous_value=float(anomaly.value),
        related_knobs=knobs,
        text=render(anomaly.metric, normal, anomaly.value, knobs, entry.explanation),
    )


def select_relevant(narratives: Sequence[AnomalyNarrative], question, K: int, embedder) -> list[AnomalyNarrative]:
    """Top-K narratives by cosine similarity to the question text; ties by metric name."""
    if K < 0:
        raise ValueError("K must be nonnegative")
    if not narratives or K == 0:
        return []
    text = getattr(question, "text", question)
    vecs = embedder.embed_many([n.text for n in narratives] + [text])
    sims = cosine_matrix(vecs[-1:], vecs[:-1])[0]
    order = sorted(range(len(narratives)), key=lambda i: (-sims[i], narratives[i].metric, i))
    return [narratives[i] for i in order[:K]]


@dataclass(frozen=True)
class MetricReport:
    metric: str
    anomalies: tuple[AnomalyPoint, ...]
    narrative: AnomalyNarrative | None
    skipped: str | None = None


def analyze_series(series: TelemetrySeries, catalog, alpha: float = DEFAULT_ALPHA,
                   max_anomalies: int | None = None, percentile: float = DEFAULT_PERCENTILE) -> MetricReport:
    """Detect anomalies and narrate the most deviant one (if any).

    That is the first point the ESD loop removes; later scores are measured
    against a different MAD and do not compare with it.
    """
    try:
        points = detect_anomalies(series, alpha, max_anomalies)
    except SeriesTooShort as exc:
        return MetricReport(series.metric, (), None, str(exc))
    if not points:
        return MetricReport(series.metric, (), None)
    worst = min(points, key=lambda p: p.iteration)
    try:
        narrative = narrate(worst, catalog, normal_value(series, percentile))
    except MissingCatalogEntry as exc:
        return MetricReport(series.metric, tuple(points), None, str(exc))
    return MetricReport(series.metric, tuple(points), narrative)


def analyze_telemetry(series: Sequence[TelemetrySeries], catalog, alpha: float = DEFAULT_ALPHA,
                      max_anomalies: int | None = None, percentile: float = DEFAULT_PERCENTILE,
                      workers: int = 1) -> list[MetricReport]:
    """Per-metric analysis, in input order; metrics are independent."""
    def one(s):
        return analyze_series(s, catalog, alpha, max_anomalies, percentile)
    if workers <= 1:
        return [one(s) for s in series]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, series))


def narratives_of(reports: Sequence[MetricReport]) -> list[AnomalyNarrative]:
    return [r.narrative for r in reports if r.narrative is not None]
