"""Telemetry analysis: STL decomposition, ESD outliers and narration."""

from knobrag.telemetry.esd import (
    DEFAULT_ALPHA,
    AnomalyPoint,
    default_max_anomalies,
    detect_anomalies,
    deviation_scores,
    esd_critical_value,
    mad,
)
from knobrag.telemetry.narrate import (
    AnomalyNarrative,
    MetricReport,
    analyze_series,
    analyze_telemetry,
    narrate,
    narratives_of,
    select_relevant,
)
from knobrag.telemetry.series import (
    MetricCatalog,
    MetricCatalogEntry,
    TelemetrySeries,
    load_catalog,
    load_series_csv,
    load_telemetry_dir,
    normal_value,
    write_series_csv,
)
from knobrag.telemetry.stl import Decomposition, infer_period, stl_decompose

__all__ = [
    "DEFAULT_ALPHA", "AnomalyNarrative", "AnomalyPoint", "Decomposition", "MetricCatalog", "MetricCatalogEntry",
    "MetricReport", "TelemetrySeries", "analyze_series", "analyze_telemetry", "default_max_anomalies",
    "detect_anomalies", "deviation_scores", "esd_critical_value", "infer_period", "load_catalog",
    "load_series_csv", "load_telemetry_dir", "mad", "narrate", "narratives_of", "normal_value",
    "select_relevant", "stl_decompose", "write_series_csv",
]
