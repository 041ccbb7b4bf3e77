"""Knob-set metrics, retrieval recall, batch evaluation and verdict bookkeeping."""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from knobrag.errors import EmptyGold, EmptyInput, KnobragError, UnmatchedVerdict

RECALL_KS = (1, 3, 5, 10)
STAGES = ("retrieval", "telemetry", "reasoning", "total")


def precision_recall_f1(predicted: Iterable[str], gold: Iterable[str]) -> tuple[float, float, float]:
    pred, gold = set(predicted), set(gold)
    if not gold:
        raise EmptyGold("gold knob set is empty")
    tp = len(pred & gold)
    p = tp / len(pred) if pred else 0.0
    r = tp / len(gold)
    f1 = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return p, r, f1


def doc_retrieval_recall(retrieved, gold: Iterable[str], k: int) -> float:
    """Share of gold knobs covered by the labels of the first ``k`` documents.

    ``retrieved`` holds label sets or objects with a ``knobs`` attribute, in
    rank order.
    """
    gold = set(gold)
    if not gold:
        raise EmptyGold("gold knob set is empty")
    if k < 0:
        raise ValueError("k must be nonnegative")
    covered: set[str] = set()
    for item in list(retrieved)[:k]:
        covered.update(getattr(item, "knobs", item))
    return len(covered & gold) / len(gold)


@dataclass(frozen=True)
class SuccessVerdict:
    question_id: str
    solved: bool
    note: str = ""


def success_rate(verdicts: Sequence[SuccessVerdict]) -> float:
    if not verdicts:
        raise EmptyInput("no verdicts")
    return sum(bool(v.solved) for v in verdicts) / len(verdicts)


@dataclass(frozen=True)
class EvalRecord:
    question_id: str
    predicted_knobs: frozenset[str]
    gold_knobs: frozenset[str]
    retrieved_doc_ids: tuple[str, ...] = ()
    failure: bool = False
    latencies_ms: Mapping[str, float] = field(default_factory=dict)
    retrieval_recall: Mapping[int, float] = field(default_factory=dict)
    recommended: int = 0
    error: str | None = None

    def __post_init__(self):
        if self.failure and self.predicted_knobs:
            raise ValueError("a failed record has no predicted knobs")

    def scores(self) -> tuple[float, float, float]:
        return precision_recall_f1(self.predicted_knobs, self.gold_knobs)

    def to_record(self) -> dict:
        p, r, f1 = self.scores()
        return {
            "question_id": self.question_id,
            "predicted_knobs": sorted(self.predicted_knobs),
            "gold_knobs": sorted(self.gold_knobs),
            "retrieved_doc_ids": list(self.retrieved_doc_ids),
            "failure": self.failure,
            "error": self.error,
            "precision": p, "recall": r, "f1": f1,
            "retrieval_recall": {str(k): v for k, v in sorted(self.retrieval_recall.items())},
            "latencies_ms": dict(self.latencies_ms),
        }


@dataclass(frozen=True)
class MetricsReport:
    n: int
    failures: int
    precision: float
    recall: float
    f1: float
    recall_at_k: dict[int, float]
    latencies_ms: dict[str, float]
    mean_recommended: float = 0.0

    def to_record(self) -> dict:
        return {
            "n": self.n, "failures": self.failures,
            "precision": self.precision, "recall": self.recall, "f1": self.f1,
            "recall_at_k": {str(k): v for k, v in sorted(self.recall_at_k.items())},
            "latencies_ms": dict(self.latencies_ms),
            "mean_recommended": self.mean_recommended,
        }

    def lines(self) -> list[str]:
        out = [f"questions {self.n}  failures {self.failures}",
               f"precision {self.precision:.4f}  recall {self.recall:.4f}  f1 {self.f1:.4f}"]
        if self.recall_at_k:
            out.append("doc recall " + "  ".join(f"@{k} {v:.4f}" for k, v in sorted(self.recall_at_k.items())))
        out.append("latency ms " + "  ".join(f"{s} {self.latencies_ms.get(s, 0.0):.1f}" for s in STAGES))
        return out


def aggregate(records: Sequence[EvalRecord]) -> MetricsReport:
    """Unweighted means over questions; failures score zero everywhere."""
    if not records:
        raise EmptyInput("no evaluation records")
    scores = np.array([r.scores() for r in records])
    ks = sorted({k for r in records for k in r.retrieval_recall})
    at_k = {k: float(np.mean([r.retrieval_recall.get(k, 0.0) for r in records])) for k in ks}
    lat = {s: float(np.mean([r.latencies_ms.get(s, 0.0) for r in records])) for s in STAGES}
    return MetricsReport(
        n=len(records),
        failures=sum(r.failure for r in records),
        precision=float(scores[:, 0].mean()),
        recall=float(scores[:, 1].mean()),
        f1=float(scores[:, 2].mean()),
        recall_at_k=at_k,
        latencies_ms=lat,
        mean_recommended=float(np.mean([r.recommended for r in records])),
    )


def ranked_labels(question, index, net, config, k_max: int) -> list[frozenset[str]]:
    """Knob labels of the top ``k_max`` retrieved documents, in rank order."""
    from dataclasses import replace

    from knobrag.reasoner.pipeline import retrieve
    if index is None or not len(index):
        return []
    return [d.knobs for d in retrieve(question, index, net, replace(config, k=k_max))]


def evaluate_question(question, index, net, config, strategy, ks=RECALL_KS) -> EvalRecord:
    from knobrag.reasoner.pipeline import diagnose
    gold = frozenset(question.gold_knobs)
    try:
        result = diagnose(question, index, net, None, strategy, config)
    except KnobragError as exc:
        return EvalRecord(question.id, frozenset(), gold, failure=True, error=f"{type(exc).__name__}: {exc}")
    recall = {}
    if ks:
        labels = ranked_labels(question, index, net, config, max(ks))
        recall = {k: doc_retrieval_recall(labels, gold, k) for k in ks}
    return EvalRecord(question.id, result.predicted_knobs, gold, result.retrieved_doc_ids, result.failure,
                      dict(result.latencies_ms), recall, len(result.recommendations), result.error)


def run_nl_eval(test_set, index, net, config, strategy=None, ks=RECALL_KS,
                parallelism: int = 1) -> tuple[MetricsReport, list[EvalRecord]]:
    """diagnose every question without telemetry and aggregate the scores.

    Errors on one question become failure records. Records come back in
    input order for any ``parallelism``.
    """
    from knobrag.reasoner.prompts import PromptStrategy
    strategy = PromptStrategy.RAG if strategy is None else PromptStrategy(strategy)
    questions = list(test_set)
    if not questions:
        raise EmptyInput("empty test set")

    def one(q):
        return evaluate_question(q, index, net, config, strategy, ks)

    if parallelism > 1:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            records = list(pool.map(one, questions))
    else:
        records = [one(q) for q in questions]
    return aggregate(records), records


# ---------------------------------------------------------------------------
# runnable setting


def load_verdicts(path: str | Path) -> list[SuccessVerdict]:
    out, seen = [], set()
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                v = SuccessVerdict(str(rec["question_id"]), bool(rec["solved"]), str(rec.get("note", "")))
            except (ValueError, KeyError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: bad verdict record ({exc})") from None
            if v.question_id in seen:
                raise ValueError(f"{path}:{lineno}: second verdict for {v.question_id}")
            seen.add(v.question_id)
            out.append(v)
    return out


@dataclass(frozen=True)
class RunnableReport:
    success_rate: float
    solved: int
    n: int
    mean_recommended: float
    verdicts: tuple[SuccessVerdict, ...]

    def to_record(self) -> dict:
        return {"success_rate": self.success_rate, "solved": self.solved, "n": self.n,
                "mean_recommended": self.mean_recommended}


def record_runnable(verdict_path: str | Path, results) -> RunnableReport:
    """Join external verdicts to diagnosis results by question id.

    ``results`` holds DiagnosisResult objects or their record dicts.
    """
    verdicts = load_verdicts(verdict_path)
    if not verdicts:
        raise EmptyInput(f"{verdict_path}: no verdicts")
    by_id = {}
    for r in results:
        rec = r if isinstance(r, Mapping) else r.to_record()
        by_id[rec["question_id"]] = rec
    for v in verdicts:
        if v.question_id not in by_id:
            raise UnmatchedVerdict(f"verdict for unknown question {v.question_id!r}")
    counts = [len(by_id[v.question_id].get("recommendations", {})) for v in verdicts]
    solved = sum(v.solved for v in verdicts)
    return RunnableReport(success_rate(verdicts), solved, len(verdicts), float(np.mean(counts)), tuple(verdicts))
