"""Base (frozen) embedding backends: a local hashing embedder and an HTTP client."""

from __future__ import annotations

import hashlib
import os
import re
from concurrent.futures import ThreadPoolExecutor
from typing import Protocol, Sequence

import httpx
import numpy as np

from knobrag.embed.vectors import DEFAULT_DIM, EmbeddingVector
from knobrag.errors import BackendTimeout, BackendUnavailable, DimensionMismatch

_WORD = re.compile(r"[a-z0-9_]+")


class Embedder(Protocol):
    dim: int

    def embed_many(self, texts: Sequence[str]) -> np.ndarray: ...


def ngrams(text: str) -> list[str]:
    """Lowercase word unigrams followed by adjacent-word bigrams."""
    words = _WORD.findall(text.lower())
    return words + [f"{a} {b}" for a, b in zip(words, words[1:])]


class HashingEmbedder:
    """Signed feature hashing of word 1- and 2-grams, L2-normalized.

    Each n-gram's blake2b digest picks a bucket (first 8 bytes mod dim) and a
    sign (low bit of the ninth byte). Empty text maps to the zero vector.
    """

    def __init__(self, dim: int = DEFAULT_DIM):
        if dim <= 0:
            raise ValueError("dim must be positive")
        self.dim = dim
        self._cache: dict[str, tuple[int, float]] = {}

    def feature(self, gram: str) -> tuple[int, float]:
        hit = self._cache.get(gram)
        if hit is None:
            digest = hashlib.blake2b(gram.encode("utf-8"), digest_size=9).digest()
            bucket = int.from_bytes(digest[:8], "little") % self.dim
            hit = (bucket, -1.0 if digest[8] & 1 else 1.0)
            self._cache[gram] = hit
        return hit

    def buckets(self, text: str) -> set[int]:
        return {self.feature(g)[0] for g in ngrams(text)}

    def embed_one(self, text: str) -> np.ndarray:
        v = np.zeros(self.dim)
        for gram in ngrams(text):
            bucket, sign = self.feature(gram)
            v[bucket] += sign
        n = np.linalg.norm(v)
        return v / n if n > 0 else v

    def embed_many(self, texts: Sequence[str]) -> np.ndarray:
        out = np.zeros((len(texts), self.dim))
        for i, t in enumerate(texts):
            out[i] = self.embed_one(t)
        return out


class RemoteEmbedder:
    """Embeddings over HTTP: POST ``{"input": [...], "model": name}``.

    Accepts the common ``{"data": [{"index", "embedding"}]}`` response shape.
    Batches run on a thread pool of ``parallelism`` workers.
    """

    def __init__(self, base_url: str, model: str, dim: int = DEFAULT_DIM, token_env: str = "KNOBRAG_EMBED_TOKEN",
                 timeout: float = 60.0, parallelism: int = 4, batch_size: int = 64,
                 transport: httpx.BaseTransport | None = None):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.dim = dim
        self.token_env = token_env
        self.timeout = timeout
        self.parallelism = max(1, parallelism)
        self.batch_size = max(1, batch_size)
        self._transport = transport

    def _headers(self) -> dict:
        token = os.environ.get(self.token_env)
        return {"Authorization": f"Bearer {token}"} if token else {}

    def _post(self, client: httpx.Client, texts: list[str]) -> np.ndarray:
        try:
            resp = client.post(self.base_url, json={"input": texts, "model": self.model})
            resp.raise_for_status()
            payload = resp.json()
        except httpx.TimeoutException as exc:
            raise BackendTimeout(f"embedding request timed out: {exc}") from None
        except (httpx.HTTPError, ValueError) as exc:
            raise BackendUnavailable(f"embedding backend failed: {exc}") from None
        try:
            rows = sorted(payload["data"], key=lambda r: r.get("index", 0))
            out = np.array([r["embedding"] for r in rows], dtype=np.float64)
        except (KeyError, TypeError, ValueError) as exc:
            raise BackendUnavailable(f"unexpected embedding response: {exc}") from None
        if out.shape != (len(texts), self.dim):
            raise DimensionMismatch(f"backend returned shape {out.shape}, expected ({len(texts)}, {self.dim})")
        return out

    def embed_many(self, texts: Sequence[str]) -> np.ndarray:
        texts = list(texts)
        if not texts:
            return np.zeros((0, self.dim))
        batches = [texts[i:i + self.batch_size] for i in range(0, len(texts), self.batch_size)]
        with httpx.Client(timeout=self.timeout, headers=self._headers(), transport=self._transport) as client:
            with ThreadPoolExecutor(max_workers=self.parallelism) as pool:
                parts = list(pool.map(lambda b: self._post(client, b), batches))
        return np.vstack(parts)


def embed_base(text: str, source_kind=None, backend: Embedder | None = None) -> EmbeddingVector:
    """Frozen base embedding of one text.

    ``source_kind`` is accepted for symmetry with :func:`align`; base
    embeddings do not depend on it.
    """
    backend = backend or HashingEmbedder()
    return EmbeddingVector(backend.embed_many([text])[0])
