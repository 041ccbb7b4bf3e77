"""Telemetry series, metric catalog and their on-disk formats."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from knobrag.errors import EmptyInput, MalformedRegistry, MissingCatalogEntry
from knobrag.knobspace import KnobRegistry, split_fields


@dataclass(frozen=True, eq=False)
class TelemetrySeries:
    metric: str
    timestamps: np.ndarray
    values: np.ndarray
    period: int | None = None

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype=np.int64)
        vs = np.asarray(self.values, dtype=np.float64)
        if ts.shape != vs.shape or ts.ndim != 1:
            raise ValueError(f"{self.metric}: timestamps and values must be equal-length vectors")
        if ts.size > 1 and np.any(np.diff(ts) <= 0):
            raise ValueError(f"{self.metric}: timestamps must be strictly increasing")
        if self.period is not None and self.period <= 0:
            raise ValueError(f"{self.metric}: period must be positive")
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "values", vs)

    def __len__(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class MetricCatalogEntry:
    metric: str
    explanation: str
    related_knobs: tuple[str, ...] = ()


class MetricCatalog(dict):
    """metric name -> MetricCatalogEntry; missing lookups raise MissingCatalogEntry."""

    def __missing__(self, key):
        raise MissingCatalogEntry(f"no catalog entry for metric {key!r}")


def load_catalog(path: str | Path, registry: KnobRegistry | None = None) -> MetricCatalog:
    """Read ``metric | explanation | related_knobs`` lines (``#`` comments allowed)."""
    out = MetricCatalog()
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = split_fields(line.rstrip("\n"))
            if len(parts) != 3:
                raise MalformedRegistry(f"expected 3 fields, found {len(parts)}", lineno)
            metric, explanation, knobs = parts
            if not metric:
                raise MalformedRegistry("empty metric name", lineno, "metric")
            related = tuple(k.strip() for k in knobs.split(",") if k.strip())
            if registry is not None:
                unknown = [k for k in related if k not in registry]
                if unknown:
                    raise MalformedRegistry(f"unknown knob(s) {', '.join(unknown)}", lineno, "related_knobs")
            out[metric] = MetricCatalogEntry(metric, explanation, related)
    return out


def load_series_csv(path: str | Path, metric: str | None = None, period: int | None = None) -> TelemetrySeries:
    """``timestamp,value`` rows; an optional header row is skipped."""
    path = Path(path)
    ts, vs = [], []
    with path.open(encoding="utf-8", newline="") as fh:
        for i, row in enumerate(csv.reader(fh)):
            if not row or not "".join(row).strip():
                continue
            if len(row) != 2:
                raise ValueError(f"{path}:{i + 1}: expected timestamp,value")
            try:
                t, v = int(row[0]), float(row[1])
            except ValueError:
                if i == 0:
                    continue
                raise ValueError(f"{path}:{i + 1}: cannot parse {row!r}") from None
            ts.append(t)
            vs.append(v)
    return TelemetrySeries(metric or path.stem, np.array(ts, dtype=np.int64), np.array(vs), period)


def load_telemetry_dir(directory: str | Path, period: int | None = None) -> list[TelemetrySeries]:
    """Every ``*.csv`` in the directory, in metric-name order."""
    files = sorted(Path(directory).glob("*.csv"))
    return [load_series_csv(f, period=period) for f in files]


def write_series_csv(series: TelemetrySeries, path: str | Path) -> None:
    from knobrag.corpus import atomic_write_text
    lines = ["timestamp,value"] + [f"{int(t)},{format_number(v)}" for t, v in zip(series.timestamps, series.values)]
    atomic_write_text(path, "\n".join(lines) + "\n")


def format_number(x: float) -> str:
    """Integral values print as integers; no exponent below 1e7 in magnitude."""
    x = float(x)
    if not np.isfinite(x):
        return str(x)
    if x.is_integer() and abs(x) < 1e16:
        return str(int(x))
    if abs(x) < 1e7:
        text = f"{x:.6f}".rstrip("0").rstrip(".")
        return text if text not in ("-0", "") else "0"
    return repr(x)


def normal_value(series, percentile: float = 5.0) -> float:
    """Linear-interpolated percentile of the raw values (the "normal" level)."""
    values = series.values if isinstance(series, TelemetrySeries) else series
    a = np.asarray(values, dtype=np.float64).ravel()
    if a.size == 0:
        raise EmptyInput("normal value of an empty series")
    if not 0.0 < percentile < 100.0:
        raise ValueError("percentile must lie in (0, 100)")
    return float(np.percentile(a, percentile))
