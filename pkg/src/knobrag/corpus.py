"""Retrieval sources: documents, manual segmentation and dataset splits."""

from __future__ import annotations

import json
import os
import random
import re
import tempfile
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

from knobrag.errors import EmptyInput, MalformedCorpus, UnknownKnobLabel
from knobrag.knobspace import KnobRegistry, Recommendation, extract_knobs


class DocKind(str, Enum):
    HISTORICAL = "HistoricalQuestion"
    MANUAL = "ManualSnippet"
    SYNTHETIC = "SyntheticQuestion"

    @property
    def is_question(self) -> bool:
        return self is not DocKind.MANUAL


@dataclass(frozen=True)
class Document:
    id: str
    kind: DocKind
    text: str
    knobs: frozenset[str]
    source: str = ""

    def __post_init__(self):
        if not self.id:
            raise MalformedCorpus("document id must be nonempty")
        if not self.text or not self.text.strip():
            raise MalformedCorpus(f"document {self.id!r} has empty text")
        if not isinstance(self.kind, DocKind):
            object.__setattr__(self, "kind", DocKind(self.kind))
        if not isinstance(self.knobs, frozenset):
            object.__setattr__(self, "knobs", frozenset(self.knobs))
        if self.kind is DocKind.MANUAL and not self.source:
            raise MalformedCorpus(f"manual snippet {self.id!r} has no source section")

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "kind": self.kind.value,
            "text": self.text,
            "knobs": sorted(self.knobs),
            "source": self.source,
        }


@dataclass(frozen=True)
class DebugQuestion:
    id: str
    text: str
    gold_knobs: frozenset[str]
    gold_values: tuple[Recommendation, ...] = ()

    def __post_init__(self):
        if not isinstance(self.gold_knobs, frozenset):
            object.__setattr__(self, "gold_knobs", frozenset(self.gold_knobs))
        object.__setattr__(self, "gold_values", tuple(self.gold_values))

    def as_document(self, kind: DocKind = DocKind.HISTORICAL, source: str = "") -> Document:
        return Document(self.id, kind, self.text, self.gold_knobs, source)

    @classmethod
    def from_document(cls, doc: Document) -> "DebugQuestion":
        return cls(doc.id, doc.text, doc.knobs)


@dataclass(frozen=True)
class DatasetSplit:
    historical: list[Document]
    train: list[DebugQuestion]
    test: list[DebugQuestion]
    ratios: tuple[float, float, float]

    def sizes(self) -> tuple[int, int, int]:
        return len(self.historical), len(self.train), len(self.test)


# ---------------------------------------------------------------------------
# corpus files (jsonl)


def parse_record(line: str, lineno: int, registry: KnobRegistry | None) -> Document:
    try:
        rec = json.loads(line)
    except json.JSONDecodeError as exc:
        raise MalformedCorpus(f"line {lineno}: {exc.msg}") from None
    if not isinstance(rec, dict):
        raise MalformedCorpus(f"line {lineno}: record is not an object")
    missing = [f for f in ("id", "kind", "text", "knobs") if f not in rec]
    if missing:
        raise MalformedCorpus(f"line {lineno}: missing field(s) {', '.join(missing)}")
    knobs = rec["knobs"]
    if not isinstance(knobs, list) or not all(isinstance(k, str) for k in knobs):
        raise MalformedCorpus(f"line {lineno}: knobs must be an array of strings")
    try:
        kind = DocKind(rec["kind"])
    except ValueError:
        raise MalformedCorpus(f"line {lineno}: unknown kind {rec['kind']!r}") from None
    if registry is not None:
        bad = [k for k in knobs if k not in registry]
        if bad:
            raise UnknownKnobLabel(f"line {lineno}: knob(s) not in registry: {', '.join(sorted(bad))}")
    try:
        return Document(str(rec["id"]), kind, rec["text"], frozenset(knobs), rec.get("source") or "")
    except MalformedCorpus as exc:
        raise MalformedCorpus(f"line {lineno}: {exc}") from None


def load_corpus(path: str | Path, registry: KnobRegistry | None = None, id_prefix: str = "") -> list[Document]:
    """Read a jsonl corpus in file order, validating labels when a registry is given."""
    docs = []
    seen = set()
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            doc = parse_record(line, lineno, registry)
            if id_prefix:
                doc = Document(id_prefix + doc.id, doc.kind, doc.text, doc.knobs, doc.source)
            if doc.id in seen:
                raise MalformedCorpus(f"line {lineno}: duplicate id {doc.id!r}")
            seen.add(doc.id)
            docs.append(doc)
    return docs


def load_corpora(paths: Sequence[str | Path], registry: KnobRegistry | None = None) -> list[Document]:
    """Concatenate several corpora, prefixing ids with ``<stem>:`` when needed.

    Prefixing only applies when more than one file is given, so a single
    corpus keeps its own ids.
    """
    if len(paths) == 1:
        return load_corpus(paths[0], registry)
    out: list[Document] = []
    for p in paths:
        out.extend(load_corpus(p, registry, id_prefix=f"{Path(p).stem}:"))
    return out


def dump_record(doc: Document) -> str:
    return json.dumps(doc.to_record(), ensure_ascii=False, sort_keys=False, separators=(",", ":"))


def _default_mode() -> int:
    umask = os.umask(0)
    os.umask(umask)
    return 0o666 & ~umask


def atomic_write_bytes(path: str | Path, data: bytes) -> None:
    """Write via a sibling temp file and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.chmod(tmp, _default_mode())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: str | Path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def save_corpus(docs: Iterable[Document], path: str | Path) -> None:
    atomic_write_text(path, "".join(dump_record(d) + "\n" for d in docs))


def load_questions(path: str | Path, registry: KnobRegistry | None = None) -> list[DebugQuestion]:
    """Question corpus -> DebugQuestions (gold knobs are the document labels)."""
    return [DebugQuestion.from_document(d) for d in load_corpus(path, registry)]


# ---------------------------------------------------------------------------
# manual segmentation

_TERMINATORS = ".?!"


def split_sentences(text: str) -> list[str]:
    """Split on ``.``/``?``/``!`` followed by whitespace or end of text.

    Backtick spans are atomic. Requiring whitespace after the terminator
    keeps ``5.7`` and ``a.b`` together outside code spans as well.
    """
    out, buf = [], []
    in_code = False
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        buf.append(ch)
        if ch == "`":
            in_code = not in_code
        elif not in_code and ch in _TERMINATORS:
            # swallow runs like "?!" or "..."
            while i + 1 < n and text[i + 1] in _TERMINATORS:
                i += 1
                buf.append(text[i])
            if i + 1 >= n or text[i + 1].isspace():
                sentence = "".join(buf).strip()
                if sentence:
                    out.append(sentence)
                buf = []
        i += 1
    tail = "".join(buf).strip()
    if tail:
        out.append(tail)
    return [re.sub(r"\s+", " ", s) for s in out]


def segment_manual(raw_manual_text: str, registry: KnobRegistry, source: str = "manual",
                   id_prefix: str = "m") -> list[Document]:
    """One ManualSnippet per sentence that mentions at least one registry knob."""
    docs = []
    for j, sentence in enumerate(split_sentences(raw_manual_text)):
        knobs = extract_knobs(sentence, registry)
        if knobs:
            docs.append(Document(f"{id_prefix}{j:05d}", DocKind.MANUAL, sentence, frozenset(knobs), source))
    return docs


def segment_manual_sections(sections: Iterable[tuple[str, str]], registry: KnobRegistry,
                            id_prefix: str = "m") -> list[Document]:
    """Segment ``(section title, body)`` pairs with ids unique across sections."""
    docs = []
    for s, (title, body) in enumerate(sections):
        docs.extend(segment_manual(body, registry, source=title, id_prefix=f"{id_prefix}{s:04d}-"))
    return docs


# ---------------------------------------------------------------------------
# dataset splits


def allocate(n: int, ratios: Sequence[float]) -> list[int]:
    """Largest-remainder integer allocation of ``n`` items to ``ratios``.

    Remainder ties go to the bucket with the larger ratio, then the earlier
    one, so a single item lands in the largest bucket.
    """
    total = float(sum(ratios))
    quotas = [n * r / total for r in ratios]
    sizes = [int(q) for q in quotas]
    order = sorted(range(len(ratios)), key=lambda i: (-(quotas[i] - sizes[i]), -ratios[i], i))
    for i in order[: n - sum(sizes)]:
        sizes[i] += 1
    return sizes


def split_dataset(questions: Sequence[DebugQuestion], ratios=(7, 2, 1), seed: int = 0) -> DatasetSplit:
    """Shuffle under ``seed`` and cut into historical / train / test parts."""
    if not questions:
        raise EmptyInput("no questions to split")
    if len(ratios) != 3 or any(r <= 0 for r in ratios):
        raise ValueError("ratios must be three positive numbers")
    ids = [q.id for q in questions]
    if len(set(ids)) != len(ids):
        raise ValueError("question ids must be unique")
    order = list(questions)
    random.Random(seed).shuffle(order)
    a, b, _ = allocate(len(order), ratios)
    total = float(sum(ratios))
    return DatasetSplit(
        historical=[q.as_document() for q in order[:a]],
        train=order[a:a + b],
        test=order[a + b:],
        ratios=tuple(r / total for r in ratios),
    )
