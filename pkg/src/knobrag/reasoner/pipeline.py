"""Two-phase knob/value prompting and the end-to-end diagnosis."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from knobrag.corpus import Document
from knobrag.embed.align import AlignmentNetwork, source_of
from knobrag.embed.backends import Embedder, HashingEmbedder
from knobrag.errors import BackendUnavailable, FormatFailure
from knobrag.knobspace import EntryIssue, KnobRegistry, Recommendation, parse_knob_list, parse_recommendations
from knobrag.reasoner.backends import DEFAULT_SEED, DEFAULT_TEMPERATURE, ChatBackend, ChatExchange, ChatRequest
from knobrag.reasoner.prompts import DEFAULT_TOP_DOCS, PromptBundle, PromptStrategy, assemble_prompt, phase1_messages, phase2_messages
from knobrag.telemetry.esd import DEFAULT_ALPHA
from knobrag.telemetry.narrate import DEFAULT_TOP_K, analyze_telemetry, narratives_of, select_relevant
from knobrag.telemetry.series import MetricCatalog, TelemetrySeries, load_telemetry_dir
from knobrag.vectorstore import FlatIndex, IndexEntry, build_index


@dataclass
class Trail:
    """Audit record filled in by the phase functions."""

    responses: dict[str, str] = field(default_factory=dict)
    exchanges: list[ChatExchange] = field(default_factory=list)
    hallucinated: list[str] = field(default_factory=list)
    issues: list[EntryIssue] = field(default_factory=list)


def _ask(backend: ChatBackend, messages, model: str, temperature: float, seed: int, phase: str,
         trail: Trail | None) -> str:
    request = ChatRequest(model, tuple(messages), temperature, seed)
    response = backend.complete(request)
    if trail is not None:
        trail.responses[phase] = response.text
        trail.exchanges.append(ChatExchange(request, response))
    return response.text


def phase1_identify_knobs(bundle: PromptBundle, registry: KnobRegistry, backend: ChatBackend, *, model: str = "mock",
                          temperature: float = DEFAULT_TEMPERATURE, seed: int = DEFAULT_SEED,
                          trail: Trail | None = None) -> frozenset[str]:
    """Ask for a bracketed knob list; names outside the registry are dropped."""
    text = _ask(backend, phase1_messages(bundle), model, temperature, seed, "phase1", trail)
    known, unknown = parse_knob_list(text, registry)
    if trail is not None:
        trail.hallucinated.extend(unknown)
    return frozenset(known)


def phase2_recommend_values(bundle: PromptBundle, knobs, registry: KnobRegistry, backend: ChatBackend, *,
                            model: str = "mock", temperature: float = DEFAULT_TEMPERATURE, seed: int = DEFAULT_SEED,
                            trail: Trail | None = None) -> list[Recommendation]:
    """Ask for a ``{knob: value}`` dictionary over the requested knobs.

    Entries for knobs that were not requested are reported and dropped;
    requested knobs without a valid entry get a ``missing_value`` issue.
    """
    knobs = frozenset(knobs)
    if not knobs:
        raise ValueError("phase 2 needs at least one knob")
    text = _ask(backend, phase2_messages(bundle, knobs), model, temperature, seed, "phase2", trail)
    parsed = parse_recommendations(text, registry)
    issues = list(parsed.issues)
    recs, seen = [], set()
    for rec in parsed.recommendations:
        if rec.knob not in knobs:
            issues.append(EntryIssue(rec.knob, rec.value.raw, "not_requested", f"{rec.knob} was not asked for"))
        elif rec.knob not in seen:
            seen.add(rec.knob)
            recs.append(rec)
    mentioned = seen | {i.knob for i in issues}
    for name in sorted(knobs - mentioned):
        issues.append(EntryIssue(name, None, "missing_value", f"{name}: no value given"))
    if trail is not None:
        trail.issues.extend(issues)
    return recs


# ---------------------------------------------------------------------------
# end to end


@dataclass
class ReasonerConfig:
    registry: KnobRegistry
    documents: Mapping[str, Document]
    backend: ChatBackend
    embedder: Embedder = field(default_factory=HashingEmbedder)
    catalog: MetricCatalog | None = None
    model: str = "mock"
    k: int = DEFAULT_TOP_DOCS
    top_k: int = DEFAULT_TOP_K
    alpha: float = DEFAULT_ALPHA
    max_anomalies: int | None = None
    period: int | None = None
    temperature: float = DEFAULT_TEMPERATURE
    seed: int = DEFAULT_SEED
    workers: int = 1


@dataclass(frozen=True)
class DiagnosisResult:
    question_id: str
    predicted_knobs: frozenset[str]
    recommendations: tuple[Recommendation, ...]
    retrieved_doc_ids: tuple[str, ...]
    narratives: tuple[str, ...]
    responses: dict
    failure: bool
    strategy: PromptStrategy = PromptStrategy.RAG
    error: str | None = None
    hallucinated: tuple[str, ...] = ()
    issues: tuple[EntryIssue, ...] = ()
    latencies_ms: dict = field(default_factory=dict)

    def to_record(self) -> dict:
        return {
            "question_id": self.question_id,
            "strategy": self.strategy.value,
            "predicted_knobs": sorted(self.predicted_knobs),
            "recommendations": {r.knob: r.value.raw for r in self.recommendations},
            "retrieved_doc_ids": list(self.retrieved_doc_ids),
            "narratives": list(self.narratives),
            "responses": dict(self.responses),
            "failure": self.failure,
            "error": self.error,
            "hallucinated": list(self.hallucinated),
            "issues": [{"knob": i.knob, "error": i.error, "detail": i.detail} for i in self.issues],
            "latencies_ms": dict(self.latencies_ms),
        }


def embed_documents(docs: Sequence[Document], embedder: Embedder, net: AlignmentNetwork | None) -> np.ndarray:
    """Base vectors for ``docs``, passed through the per-source stack when a net is given."""
    if not docs:
        return np.zeros((0, embedder.dim))
    base = embedder.embed_many([d.text for d in docs])
    if net is None:
        return base
    out = np.empty_like(base)
    for src in {source_of(d.kind) for d in docs}:
        rows = [i for i, d in enumerate(docs) if source_of(d.kind) == src]
        out[rows] = net.forward(base[rows], src)
    return out


def build_document_index(docs: Sequence[Document], embedder: Embedder, net: AlignmentNetwork | None = None,
                         normalized: bool = True) -> FlatIndex:
    vecs = embed_documents(docs, embedder, net)
    dim = net.dim if net is not None else embedder.dim
    return build_index((IndexEntry(d.id, v, d.kind) for d, v in zip(docs, vecs)), dim=dim, normalized=normalized)


def retrieve(question, index: FlatIndex, net: AlignmentNetwork | None, config: ReasonerConfig) -> list[Document]:
    text = getattr(question, "text", question)
    own = getattr(question, "id", None)
    q = config.embedder.embed_many([text])[0]
    if net is not None:
        q = net.forward(q, "question")
    # one spare slot so the question itself can be skipped if it is indexed
    hits = index.search(q, config.k + 1)
    docs = [config.documents[h.doc_id] for h in hits if h.doc_id != own and h.doc_id in config.documents]
    return docs[:config.k]


def _telemetry_series(telemetry, period) -> list[TelemetrySeries]:
    if telemetry is None:
        return []
    if isinstance(telemetry, (str, Path)):
        return load_telemetry_dir(telemetry, period=period)
    return list(telemetry)


def diagnose(question, index: FlatIndex | None, net: AlignmentNetwork | None, telemetry=None,
             strategy: PromptStrategy = PromptStrategy.RAG, config: ReasonerConfig | None = None) -> DiagnosisResult:
    """Retrieve, analyze telemetry, assemble the prompt and run both phases.

    ``telemetry`` is a directory of CSV series, a list of series or None.
    Format failures and unreachable backends set the failure flag; the
    predictions of a failed case are empty.
    """
    if config is None:
        raise ValueError("diagnose needs a ReasonerConfig")
    strategy = PromptStrategy(strategy)
    qid = getattr(question, "id", "")
    lat = {"retrieval": 0.0, "telemetry": 0.0, "reasoning": 0.0}

    hits: list[Document] = []
    narratives = []
    if strategy.uses_context:
        t0 = time.perf_counter()
        if index is not None and len(index):
            hits = retrieve(question, index, net, config)
        t1 = time.perf_counter()
        series = _telemetry_series(telemetry, config.period)
        if series:
            reports = analyze_telemetry(series, config.catalog if config.catalog is not None else MetricCatalog(),
                                        config.alpha, config.max_anomalies, workers=config.workers)
            narratives = select_relevant(narratives_of(reports), question, config.top_k, config.embedder)
        t2 = time.perf_counter()
        lat["retrieval"] = (t1 - t0) * 1000.0
        lat["telemetry"] = (t2 - t1) * 1000.0

    bundle = assemble_prompt(question, hits, narratives, strategy, config.registry, limit=config.k)
    trail = Trail()
    chat = dict(model=config.model, temperature=config.temperature, seed=config.seed, trail=trail)
    knobs: frozenset[str] = frozenset()
    recs: list[Recommendation] = []
    error = None
    t3 = time.perf_counter()
    try:
        knobs = phase1_identify_knobs(bundle, config.registry, config.backend, **chat)
        if knobs:
            recs = phase2_recommend_values(bundle, knobs, config.registry, config.backend, **chat)
    except (FormatFailure, BackendUnavailable) as exc:
        error = f"{type(exc).__name__}: {exc}"
        knobs, recs = frozenset(), []
    lat["reasoning"] = (time.perf_counter() - t3) * 1000.0
    lat["total"] = lat["retrieval"] + lat["telemetry"] + lat["reasoning"]

    return DiagnosisResult(
        question_id=qid,
        predicted_knobs=knobs,
        recommendations=tuple(recs),
        retrieved_doc_ids=tuple(d.id for d in hits),
        narratives=tuple(n.text for n in narratives),
        responses=dict(trail.responses),
        failure=error is not None,
        strategy=strategy,
        error=error,
        hallucinated=tuple(trail.hallucinated),
        issues=tuple(trail.issues),
        latencies_ms=lat,
    )
