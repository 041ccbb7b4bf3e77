"""Prompt assembly, chat backends and the two-phase diagnosis."""

from knobrag.reasoner.backends import (
    BoundedBackend,
    ChatExchange,
    ChatRequest,
    ChatResponse,
    MockBackend,
    RecordingBackend,
    RemoteChatBackend,
    ScriptedBackend,
    call_llm,
    load_transcript,
    prompt_hash,
    save_transcript,
)
from knobrag.reasoner.pipeline import (
    DiagnosisResult,
    ReasonerConfig,
    Trail,
    build_document_index,
    diagnose,
    phase1_identify_knobs,
    phase2_recommend_values,
)
from knobrag.reasoner.prompts import PromptBundle, PromptStrategy, assemble_prompt

__all__ = [
    "BoundedBackend", "ChatExchange", "ChatRequest", "ChatResponse", "DiagnosisResult", "MockBackend",
    "PromptBundle", "PromptStrategy", "ReasonerConfig", "RecordingBackend", "RemoteChatBackend",
    "ScriptedBackend", "Trail", "assemble_prompt", "build_document_index", "call_llm", "diagnose",
    "load_transcript", "phase1_identify_knobs", "phase2_recommend_values", "prompt_hash", "save_transcript",
]
