"""Chat-completion backends: transcript mock, scripted, recording and HTTP."""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Protocol

import httpx

from knobrag.corpus import atomic_write_text
from knobrag.errors import BackendTimeout, BackendUnavailable, MissingTranscript

DEFAULT_TEMPERATURE = 0.0
DEFAULT_SEED = 42
DEFAULT_TIMEOUT = 60.0


@dataclass(frozen=True)
class ChatRequest:
    model: str
    messages: tuple[dict, ...]
    temperature: float = DEFAULT_TEMPERATURE
    seed: int = DEFAULT_SEED

    def __post_init__(self):
        object.__setattr__(self, "messages", tuple(dict(m) for m in self.messages))

    def payload(self) -> dict:
        return {"model": self.model, "messages": [dict(m) for m in self.messages],
                "temperature": self.temperature, "seed": self.seed}


@dataclass(frozen=True)
class ChatResponse:
    text: str
    usage: dict = field(default_factory=dict)
    latency_ms: float = 0.0


@dataclass(frozen=True)
class ChatExchange:
    request: ChatRequest
    response: ChatResponse


class ChatBackend(Protocol):
    def complete(self, request: ChatRequest) -> ChatResponse: ...


def prompt_hash(messages) -> str:
    """sha256 of the canonical JSON of the message list (model excluded)."""
    canon = json.dumps([dict(m) for m in messages], sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def _word_usage(request: ChatRequest, text: str) -> dict:
    prompt = sum(len(m.get("content", "").split()) for m in request.messages)
    return {"prompt_tokens": prompt, "completion_tokens": len(text.split())}


def call_llm(request: ChatRequest, backend: ChatBackend) -> str:
    return backend.complete(request).text


class MockBackend:
    """Canned responses keyed by :func:`prompt_hash`."""

    def __init__(self, transcripts: dict[str, str] | None = None):
        self.transcripts = dict(transcripts or {})

    @classmethod
    def from_file(cls, path: str | Path) -> "MockBackend":
        return cls(load_transcript(path))

    def register(self, messages, response: str) -> str:
        key = prompt_hash(messages)
        self.transcripts[key] = response
        return key

    def complete(self, request: ChatRequest) -> ChatResponse:
        key = prompt_hash(request.messages)
        try:
            text = self.transcripts[key]
        except KeyError:
            raise MissingTranscript(f"no transcript for prompt {key[:16]}") from None
        return ChatResponse(text, _word_usage(request, text), 0.0)


class ScriptedBackend:
    """Answers from a function of the message list; deterministic if it is."""

    def __init__(self, responder: Callable[[list[dict]], str]):
        self.responder = responder

    def complete(self, request: ChatRequest) -> ChatResponse:
        start = time.perf_counter()
        text = self.responder([dict(m) for m in request.messages])
        return ChatResponse(text, _word_usage(request, text), (time.perf_counter() - start) * 1000.0)


class RecordingBackend:
    """Forwards to another backend and keeps every prompt hash -> response."""

    def __init__(self, inner: ChatBackend):
        self.inner = inner
        self.records: dict[str, str] = {}
        self._lock = threading.Lock()

    def complete(self, request: ChatRequest) -> ChatResponse:
        resp = self.inner.complete(request)
        with self._lock:
            self.records[prompt_hash(request.messages)] = resp.text
        return resp

    def save(self, path: str | Path) -> None:
        save_transcript(self.records, path)


class RemoteChatBackend:
    """HTTP chat completion: POST ``{model, messages, temperature, seed}``.

    ``base_url`` is the full endpoint. The bearer token is read from the
    environment variable named by ``token_env`` at call time.
    """

    def __init__(self, base_url: str, token_env: str = "KNOBRAG_CHAT_TOKEN", timeout: float = DEFAULT_TIMEOUT,
                 transport: httpx.BaseTransport | None = None):
        self.base_url = base_url
        self.token_env = token_env
        self.timeout = timeout
        self._transport = transport

    def complete(self, request: ChatRequest) -> ChatResponse:
        token = os.environ.get(self.token_env)
        headers = {"Authorization": f"Bearer {token}"} if token else {}
        start = time.perf_counter()
        try:
            with httpx.Client(timeout=self.timeout, headers=headers, transport=self._transport) as client:
                resp = client.post(self.base_url, json=request.payload())
                resp.raise_for_status()
                body = resp.json()
        except httpx.TimeoutException as exc:
            raise BackendTimeout(f"chat request timed out after {self.timeout} s: {exc}") from None
        except (httpx.HTTPError, ValueError) as exc:
            raise BackendUnavailable(f"chat backend failed: {exc}") from None
        latency = (time.perf_counter() - start) * 1000.0
        try:
            text = body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise BackendUnavailable(f"unexpected chat response shape: {exc!r}") from None
        if not isinstance(text, str):
            raise BackendUnavailable("chat response content is not text")
        usage = body.get("usage") if isinstance(body.get("usage"), dict) else {}
        return ChatResponse(text, usage, latency)


class BoundedBackend:
    """Caps concurrent calls into a shared backend."""

    def __init__(self, inner: ChatBackend, parallelism: int = 4):
        self.inner = inner
        self._sem = threading.BoundedSemaphore(max(1, parallelism))

    def complete(self, request: ChatRequest) -> ChatResponse:
        with self._sem:
            return self.inner.complete(request)


def load_transcript(path: str | Path) -> dict[str, str]:
    out = {}
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                out[str(rec["prompt_hash"])] = str(rec["response"])
            except (ValueError, KeyError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: bad transcript record ({exc})") from None
    return out


def save_transcript(records: dict[str, str], path: str | Path) -> None:
    lines = [json.dumps({"prompt_hash": k, "response": v}, ensure_ascii=False) for k, v in sorted(records.items())]
    atomic_write_text(path, "".join(line + "\n" for line in lines))
