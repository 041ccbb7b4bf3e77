"""Logic-chain question synthesis: knob -> function -> issue -> behavior -> question."""

from __future__ import annotations

import json
import random
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from knobrag.corpus import DocKind, Document, atomic_write_text
from knobrag.errors import BackendUnavailable, FormatFailure, NoSnippets
from knobrag.knobspace import KnobRegistry, KnobSpec
from knobrag.reasoner.backends import DEFAULT_SEED, ChatBackend, ChatRequest
from knobrag.reasoner.prompts import fill

DEFAULT_FANOUT = 3
_BULLET = re.compile(r"^\s*-\s+(.*\S)\s*$")


@dataclass
class LogicChain:
    knob: str
    function: str = ""
    issue: str = ""
    behavior: str = ""
    composed_question: str | None = None

    @property
    def complete(self) -> bool:
        return bool(self.function and self.issue and self.behavior)


@dataclass(frozen=True)
class ChatSettings:
    model: str = "mock"
    temperature: float = 0.0
    seed: int = DEFAULT_SEED


def _ask(backend: ChatBackend, prompt: str, settings: ChatSettings | None) -> str:
    s = settings or ChatSettings()
    req = ChatRequest(s.model, ({"role": "user", "content": prompt},), s.temperature, s.seed)
    return backend.complete(req).text


def _paragraph(text: str, what: str) -> str:
    first = re.split(r"\n\s*\n", text.strip(), maxsplit=1)[0]
    out = " ".join(first.split())
    if not out:
        raise FormatFailure(f"empty {what} response")
    return out


def _name(knob) -> str:
    return knob.name if isinstance(knob, KnobSpec) else str(knob)


def derive_functions(knob, manual_snippets: Sequence[Document], backend: ChatBackend,
                     settings: ChatSettings | None = None) -> list[str]:
    """One call with the knob's snippets inlined; the reply is a ``- item`` list."""
    name = _name(knob)
    mine = [d for d in manual_snippets if name in d.knobs]
    if not mine:
        raise NoSnippets(f"no manual snippet is labelled with {name}")
    snippets = "\n".join(f"- {d.text}" for d in mine)
    reply = _ask(backend, fill("synth_functions", knob=name, snippets=snippets), settings)
    functions = [m.group(1) for m in map(_BULLET.match, reply.splitlines()) if m]
    if not functions:
        raise FormatFailure(f"no bulleted functions in the reply for {name}")
    return functions


def derive_issue(knob, function: str, backend: ChatBackend, settings: ChatSettings | None = None) -> str:
    if not function.strip():
        raise ValueError("function must be nonempty")
    return _paragraph(_ask(backend, fill("synth_issue", knob=_name(knob), function=function), settings), "issue")


def derive_behavior(knob, issue: str, backend: ChatBackend, settings: ChatSettings | None = None) -> str:
    if not issue.strip():
        raise ValueError("issue must be nonempty")
    return _paragraph(_ask(backend, fill("synth_behavior", knob=_name(knob), issue=issue), settings), "behavior")


def compose_question(chain: LogicChain, backend: ChatBackend, doc_id: str | None = None,
                     settings: ChatSettings | None = None) -> Document:
    """The composed question is labelled with the chain's knob and nothing else."""
    if not chain.complete:
        raise ValueError("chain needs function, issue and behavior before composition")
    prompt = fill("synth_compose", behavior=chain.behavior, issue=chain.issue)
    try:
        text = _ask(backend, prompt, settings).strip()
    except BackendUnavailable as exc:
        raise FormatFailure(f"composition failed: {exc}") from None
    if not text:
        raise FormatFailure("empty composed question")
    chain.composed_question = text
    return Document(doc_id or f"syn-{chain.knob}", DocKind.SYNTHETIC, text, frozenset({chain.knob}))


def build_chain(knob, function: str, backend: ChatBackend, doc_id: str,
                settings: ChatSettings | None = None) -> tuple[LogicChain, Document]:
    chain = LogicChain(_name(knob), function)
    chain.issue = derive_issue(knob, function, backend, settings)
    chain.behavior = derive_behavior(knob, chain.issue, backend, settings)
    return chain, compose_question(chain, backend, doc_id, settings)


# ---------------------------------------------------------------------------
# dataset synthesis


@dataclass(frozen=True)
class ChainRecord:
    knob: str
    function_index: int | None
    status: str                 # "ok" | "failed" | "skipped"
    error: str | None = None

    def to_record(self) -> dict:
        out = {"knob": self.knob, "function_index": self.function_index, "status": self.status}
        if self.error:
            out["error"] = self.error
        return out


@dataclass
class SynthesisReport:
    documents: list[Document] = field(default_factory=list)
    records: list[ChainRecord] = field(default_factory=list)

    def __iter__(self):
        return iter(self.documents)

    def __len__(self):
        return len(self.documents)

    def count(self, status: str) -> int:
        return sum(r.status == status for r in self.records)

    @property
    def attempted(self) -> int:
        return self.count("ok") + self.count("failed")

    def save(self, corpus_path: str | Path, report_path: str | Path | None = None) -> None:
        from knobrag.corpus import save_corpus
        save_corpus(self.documents, corpus_path)
        if report_path is not None:
            lines = [json.dumps(r.to_record(), ensure_ascii=False) for r in self.records]
            atomic_write_text(report_path, "".join(line + "\n" for line in lines))


def _synthesize_knob(spec: KnobSpec, manuals, per_knob, backend, start, fanout, settings):
    docs, records = [], []
    try:
        functions = derive_functions(spec, manuals, backend, settings)[:fanout]
    except NoSnippets as exc:
        return docs, [ChainRecord(spec.name, None, "skipped", str(exc))]
    except (FormatFailure, BackendUnavailable) as exc:
        return docs, [ChainRecord(spec.name, None, "failed", str(exc)) for _ in range(per_knob)]
    for j in range(per_knob):
        fi = (start + j) % len(functions)
        try:
            _, doc = build_chain(spec, functions[fi], backend, f"syn-{spec.name}-{j:03d}", settings)
        except (FormatFailure, BackendUnavailable) as exc:
            records.append(ChainRecord(spec.name, fi, "failed", str(exc)))
            continue
        docs.append(doc)
        records.append(ChainRecord(spec.name, fi, "ok"))
    return docs, records


def synthesize_dataset(registry: KnobRegistry, manuals: Sequence[Document], per_knob: int, backend: ChatBackend,
                       seed: int = 0, *, fanout: int = DEFAULT_FANOUT, settings: ChatSettings | None = None,
                       workers: int = 1) -> SynthesisReport:
    """Up to ``per_knob`` chains per knob, cycling through its derived functions.

    The seed picks each knob's starting function; output follows registry
    order whatever the worker count.
    """
    report = SynthesisReport()
    if per_knob <= 0:
        return report
    manuals = [d for d in manuals if d.kind is DocKind.MANUAL]
    rng = random.Random(seed)
    starts = {spec.name: rng.randrange(fanout) for spec in registry}

    def one(spec):
        return _synthesize_knob(spec, manuals, per_knob, backend, starts[spec.name], fanout, settings)

    specs = list(registry)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, specs))
    else:
        results = [one(s) for s in specs]
    for docs, records in results:
        report.documents.extend(docs)
        report.records.extend(records)
    return report
