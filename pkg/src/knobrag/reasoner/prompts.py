"""Prompt strategies, bundle assembly and deterministic rendering."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from importlib import resources
from string import Template
from typing import Iterable, Sequence

from knobrag.corpus import DocKind, Document
from knobrag.knobspace import KnobRegistry

TEMPLATE_VERSION = "1"
DEFAULT_TOP_DOCS = 5


class PromptStrategy(str, Enum):
    RAG = "Rag"
    PLAIN = "Plain"
    ALL_KNOBS = "AllKnobs"
    CHAIN_OF_THOUGHT = "ChainOfThought"
    TASK_DECOMPOSITION = "TaskDecomposition"

    @property
    def uses_context(self) -> bool:
        """Only the retrieval strategy carries documents and telemetry."""
        return self is PromptStrategy.RAG

    @classmethod
    def parse(cls, text: str) -> "PromptStrategy":
        key = text.replace("-", "").replace("_", "").lower()
        for s in cls:
            if s.value.lower() == key or s.name.replace("_", "").lower() == key:
                return s
        raise ValueError(f"unknown prompt strategy {text!r}")


@lru_cache(maxsize=None)
def template(name: str) -> str:
    path = resources.files("knobrag.reasoner").joinpath("templates", f"{name}.txt")
    return path.read_text(encoding="utf-8").rstrip("\n")


def headers() -> dict[str, str]:
    out = {}
    for line in template("headers").splitlines():
        key, _, text = line.partition("=")
        out[key.strip()] = text.strip()
    return out


def fill(name: str, **values) -> str:
    return Template(template(name)).substitute(**values)


@dataclass(frozen=True)
class ContextEntry:
    text: str
    knobs: tuple[str, ...]

    def render(self) -> str:
        return f"- {self.text} [knobs: {', '.join(self.knobs)}]"

    @classmethod
    def of(cls, doc: Document) -> "ContextEntry":
        return cls(doc.text, tuple(sorted(doc.knobs)))


@dataclass(frozen=True)
class PromptBundle:
    instruction: str
    telemetry_block: tuple[str, ...] | None
    manual_block: tuple[ContextEntry, ...]
    question_block: tuple[ContextEntry, ...]
    user_question: str
    strategy: PromptStrategy
    system: str = ""

    def render(self) -> str:
        """Instruction, telemetry, manuals, historical questions, user question."""
        h = headers()
        parts = [self.instruction]
        if self.telemetry_block:
            parts.append("\n".join([h["telemetry"]] + [f"- {t}" for t in self.telemetry_block]))
        if self.manual_block:
            parts.append("\n".join([h["manuals"]] + [e.render() for e in self.manual_block]))
        if self.question_block:
            parts.append("\n".join([h["questions"]] + [e.render() for e in self.question_block]))
        parts.append(f"{h['user']}\n{self.user_question}")
        return "\n\n".join(parts)

    def doc_entry_count(self) -> int:
        return len(self.manual_block) + len(self.question_block)


def build_instruction(strategy: PromptStrategy, registry: KnobRegistry) -> str:
    lines = [template("instruction")]
    if strategy is PromptStrategy.RAG:
        lines.append(template("rag"))
    elif strategy is PromptStrategy.ALL_KNOBS:
        lines.append(fill("all_knobs", knobs=", ".join(registry.names())))
    elif strategy is PromptStrategy.CHAIN_OF_THOUGHT:
        lines.append(template("chain_of_thought"))
    elif strategy is PromptStrategy.TASK_DECOMPOSITION:
        lines.append(template("task_decomposition"))
    return "\n".join(lines)


def assemble_prompt(question, hits: Sequence[Document], narratives: Iterable, strategy: PromptStrategy,
                    registry: KnobRegistry, limit: int = DEFAULT_TOP_DOCS) -> PromptBundle:
    """Build the bundle for one question.

    ``hits`` are taken in rank order and cut to ``limit``; narratives may be
    strings or objects with a ``text`` attribute. Strategies other than
    retrieval get neither documents nor telemetry.
    """
    strategy = PromptStrategy(strategy)
    text = getattr(question, "text", question)
    manuals: list[ContextEntry] = []
    questions: list[ContextEntry] = []
    telemetry = None
    if strategy.uses_context:
        for doc in list(hits)[:limit]:
            (manuals if doc.kind is DocKind.MANUAL else questions).append(ContextEntry.of(doc))
        lines = tuple(getattr(n, "text", n) for n in narratives)
        telemetry = lines or None
    return PromptBundle(
        instruction=build_instruction(strategy, registry),
        telemetry_block=telemetry,
        manual_block=tuple(manuals),
        question_block=tuple(questions),
        user_question=text,
        strategy=strategy,
        system=fill("system", dbms=registry.dbms_label or "the DBMS"),
    )


def phase1_messages(bundle: PromptBundle) -> list[dict]:
    return _messages(bundle, template("phase1"))


def phase2_messages(bundle: PromptBundle, knobs: Iterable[str]) -> list[dict]:
    return _messages(bundle, fill("phase2", knobs=", ".join(sorted(knobs))))


def _messages(bundle: PromptBundle, tail: str) -> list[dict]:
    out = []
    if bundle.system:
        out.append({"role": "system", "content": bundle.system})
    out.append({"role": "user", "content": f"{bundle.render()}\n\n{tail}"})
    return out
