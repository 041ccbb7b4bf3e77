"""Deterministic synthetic workloads: clustered two-source corpora and spiky series.

All randomness comes from :class:`SplitMix64` (Steele, Lea and Flood's
64-bit mixer) with Box-Muller normals, so another implementation using the
same constants reproduces every value bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from knobrag.corpus import DocKind, Document

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


class SplitMix64:
    """uniform() = (next_u64() >> 11) * 2^-53; normal() via Box-Muller."""

    def __init__(self, seed: int):
        self.state = seed & _MASK
        self._spare: float | None = None

    def next_u64(self) -> int:
        self.state = (self.state + _GOLDEN) & _MASK
        z = self.state
        z = ((z ^ (z >> 30)) * _MIX1) & _MASK
        z = ((z ^ (z >> 27)) * _MIX2) & _MASK
        return z ^ (z >> 31)

    def uniform(self) -> float:
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def normal(self) -> float:
        # cos branch first, the sin branch is cached for the next call
        if self._spare is not None:
            z, self._spare = self._spare, None
            return z
        u1 = self.uniform()
        while u1 == 0.0:
            u1 = self.uniform()
        u2 = self.uniform()
        r = math.sqrt(-2.0 * math.log(u1))
        self._spare = r * math.sin(2.0 * math.pi * u2)
        return r * math.cos(2.0 * math.pi * u2)

    def normals(self, n: int) -> np.ndarray:
        return np.array([self.normal() for _ in range(n)], dtype=np.float64)

    def below(self, n: int) -> int:
        """Uniform integer in [0, n) by rejection (no modulo bias)."""
        if n <= 0:
            raise ValueError("n must be positive")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            x = self.next_u64()
            if x < limit:
                return x % n


# ---------------------------------------------------------------------------
# series with planted spikes


@dataclass(frozen=True)
class SpikeSeriesSpec:
    length: int
    period: int
    amplitude: float = 10.0
    slope: float = 0.0
    sigma: float = 1.0
    spikes: tuple[tuple[int, float], ...] = ()      # (index, magnitude in sigmas; sign kept)
    seed: int = 0
    metric: str = "synthetic_metric"
    start: int = 0

    def __post_init__(self):
        if self.period < 2:
            raise ValueError("period must be at least 2")
        if self.length < 1:
            raise ValueError("length must be positive")
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")
        for idx, _ in self.spikes:
            if not 0 <= idx < self.length:
                raise ValueError(f"spike index {idx} outside [0, {self.length})")


@dataclass(frozen=True)
class GeneratedSeries:
    series: "TelemetrySeries"
    spike_indices: frozenset[int]
    clean: np.ndarray            # noise-free signal (trend + season)


def gen_series(spec: SpikeSeriesSpec) -> GeneratedSeries:
    """amplitude*sin(2 pi t / period) + slope*t + N(0, sigma^2) + spikes."""
    from knobrag.telemetry.series import TelemetrySeries

    rng = SplitMix64(spec.seed)
    t = np.arange(spec.length, dtype=np.float64)
    clean = spec.amplitude * np.sin(2.0 * np.pi * t / spec.period) + spec.slope * t
    values = clean + spec.sigma * rng.normals(spec.length) if spec.sigma > 0 else clean.copy()
    # a zero-noise spike is measured in units of the amplitude instead
    unit = spec.sigma if spec.sigma > 0 else max(abs(spec.amplitude), 1.0)
    for idx, mag in spec.spikes:
        values[idx] += mag * unit
    series = TelemetrySeries(
        metric=spec.metric,
        timestamps=np.arange(spec.start, spec.start + spec.length, dtype=np.int64),
        values=values,
        period=spec.period,
    )
    return GeneratedSeries(series, frozenset(i for i, _ in spec.spikes), clean)


def random_spike_spec(rng: SplitMix64, seed: int, *, min_length=200, max_length=2000, min_period=12,
                      max_period=48, min_spikes=1, max_spikes=3, min_sigmas=10.0, max_sigmas=20.0,
                      amplitude=10.0, metric="synthetic_metric") -> SpikeSeriesSpec:
    """Draw a spec with spikes spread uniformly over the series, at least a period apart."""
    length = min_length + rng.below(max_length - min_length + 1)
    period = min_period + rng.below(max_period - min_period + 1)
    count = min_spikes + rng.below(max_spikes - min_spikes + 1)
    slope = (rng.uniform() - 0.5) * 0.02
    chosen: list[int] = []
    while len(chosen) < count:
        idx = rng.below(length)
        if all(abs(idx - c) >= period for c in chosen):
            chosen.append(idx)
    spikes = []
    for idx in sorted(chosen):
        mag = min_sigmas + (max_sigmas - min_sigmas) * rng.uniform()
        sign = 1.0 if rng.uniform() < 0.5 else -1.0
        spikes.append((idx, sign * mag))
    return SpikeSeriesSpec(length, period, amplitude, slope, 1.0, tuple(spikes), seed, metric)


# ---------------------------------------------------------------------------
# two-source clustered corpora


@dataclass(frozen=True)
class SyntheticCorpusSpec:
    """Clusters on a line; every manual is shifted by one fixed offset vector.

    ``noise`` is the expected norm of a document's noise vector, ``offset``
    the norm of the cross-source shift and ``separation`` the distance between
    neighbouring cluster centres. The offset points along the line, so with
    offset == separation a manual of cluster i lands on cluster i+1. The line
    passes ``radius`` away from the origin (0 centres the corpus).
    """

    clusters: int = 4
    docs_per_kind: int = 10
    noise: float = 0.1
    offset: float = 0.3
    separation: float = 0.3
    dim: int = 64
    radius: float = 0.0
    seed: int = 0
    knob_prefix: str = "knob_"

    def __post_init__(self):
        if self.clusters <= 0 or self.docs_per_kind <= 0 or self.dim < 2:
            raise ValueError("clusters, docs_per_kind must be positive and dim >= 2")
        if self.noise < 0 or self.offset < 0 or self.separation < 0:
            raise ValueError("noise, offset and separation must be nonnegative")


@dataclass
class SyntheticCorpus:
    documents: list[Document]
    embeddings: np.ndarray          # base embeddings, row i belongs to documents[i]
    cluster_of: dict[str, int]
    knob_of_cluster: list[str]
    centers: np.ndarray
    offset_vector: np.ndarray
    spec: SyntheticCorpusSpec = field(repr=False, default=None)

    def indices(self, kind: DocKind) -> np.ndarray:
        return np.array([i for i, d in enumerate(self.documents) if d.kind is kind], dtype=np.intp)

    def to_bytes(self) -> bytes:
        from knobrag.corpus import dump_record
        text = "".join(dump_record(d) + "\n" for d in self.documents).encode("utf-8")
        return text + np.ascontiguousarray(self.embeddings, dtype="<f8").tobytes()


def gen_corpus(spec: SyntheticCorpusSpec) -> SyntheticCorpus:
    rng = SplitMix64(spec.seed)
    d = spec.dim
    # centre line: radius * e0 + i * separation * e1; offset along e1
    e0 = np.zeros(d)
    e0[0] = 1.0
    e1 = np.zeros(d)
    e1[1] = 1.0
    first = -(spec.clusters - 1) / 2.0
    centers = np.array([spec.radius * e0 + (first + i) * spec.separation * e1 for i in range(spec.clusters)])
    offset = spec.offset * e1
    scale = spec.noise / math.sqrt(d)
    docs, rows, cluster_of = [], [], {}
    knobs = [f"{spec.knob_prefix}{c}" for c in range(spec.clusters)]
    for c in range(spec.clusters):
        for kind, tag in ((DocKind.HISTORICAL, "q"), (DocKind.MANUAL, "m")):
            for j in range(spec.docs_per_kind):
                doc_id = f"{tag}{c:02d}-{j:03d}"
                vec = centers[c] + scale * rng.normals(d)
                if kind is DocKind.MANUAL:
                    vec = vec + offset
                    text = f"manual note {j} on {knobs[c]}"
                else:
                    text = f"question {j} about {knobs[c]}"
                docs.append(Document(doc_id, kind, text, frozenset({knobs[c]}),
                                     f"cluster {c}" if kind is DocKind.MANUAL else ""))
                rows.append(vec)
                cluster_of[doc_id] = c
    return SyntheticCorpus(docs, np.array(rows), cluster_of, knobs, centers, offset, spec)


def recall_at_k(query_vecs: np.ndarray, query_labels, key_vecs: np.ndarray, key_labels, k: int) -> float:
    """Mean over queries of (#same-label keys in the top k) / min(k, #same-label keys).

    Keys are ranked by Euclidean distance in the given space; ties go to the
    lower key position.
    """
    q = np.asarray(query_vecs, dtype=np.float64)
    keys = np.asarray(key_vecs, dtype=np.float64)
    key_labels = np.asarray(key_labels)
    d2 = ((q[:, None, :] - keys[None, :, :]) ** 2).sum(axis=2)
    scores = []
    for i, label in enumerate(query_labels):
        relevant = int((key_labels == label).sum())
        if relevant == 0:
            continue
        top = np.lexsort((np.arange(len(keys)), d2[i]))[:k]
        scores.append((key_labels[top] == label).sum() / min(k, relevant))
    return float(np.mean(scores)) if scores else 0.0


def cross_source_recall(corpus: SyntheticCorpus, k: int = 5, net=None) -> float:
    """Question queries against manual keys, optionally through an alignment net."""
    qi = corpus.indices(DocKind.HISTORICAL)
    mi = corpus.indices(DocKind.MANUAL)
    qv, mv = corpus.embeddings[qi], corpus.embeddings[mi]
    if net is not None:
        qv = net.forward(qv, "question")
        mv = net.forward(mv, "manual")
    ql = [corpus.cluster_of[corpus.documents[i].id] for i in qi]
    ml = [corpus.cluster_of[corpus.documents[i].id] for i in mi]
    return recall_at_k(qv, ql, mv, ml, k)


def within_source_recall(corpus: SyntheticCorpus, k: int = 5) -> float:
    """Manual queries against the other manuals (self excluded by construction)."""
    mi = corpus.indices(DocKind.MANUAL)
    vecs = corpus.embeddings[mi]
    labels = np.array([corpus.cluster_of[corpus.documents[i].id] for i in mi])
    scores = []
    for j in range(len(mi)):
        rest = np.delete(np.arange(len(mi)), j)
        scores.append(recall_at_k(vecs[j:j + 1], labels[j:j + 1], vecs[rest], labels[rest], k))
    return float(np.mean(scores))


# ---------------------------------------------------------------------------
# scripted chat transcripts


def two_phase_responder(knob_reply: str, value_reply: str):
    """Responder answering the knob-list prompt and the value prompt by their format lines."""
    from knobrag.reasoner.prompts import template
    marker = template("phase2").splitlines()[0].split("$")[0]

    def respond(messages):
        return value_reply if marker in messages[-1]["content"] else knob_reply
    return respond


def constant_responder(text: str):
    return lambda messages: text


def record_transcript(run, responder) -> dict[str, str]:
    """Call ``run(backend)`` with a recording scripted backend; return hash -> response."""
    from knobrag.reasoner.backends import RecordingBackend, ScriptedBackend
    backend = RecordingBackend(ScriptedBackend(responder))
    run(backend)
    return dict(backend.records)
