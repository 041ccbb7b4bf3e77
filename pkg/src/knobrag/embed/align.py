"""Per-source residual alignment stacks and their binary checkpoint format."""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from knobrag.embed.vectors import DEFAULT_DIM, EmbeddingVector, as_array
from knobrag.errors import CorruptCheckpoint, DimensionMismatch, IoFailure

QUESTION = "question"
MANUAL = "manual"
SOURCES = (QUESTION, MANUAL)

CHECKPOINT_MAGIC = b"KRAN"
CHECKPOINT_VERSION = 1
_HEADER = struct.Struct("<4sIII")      # magic, version, d, layer count


def source_of(kind) -> str:
    """Map a document kind (or a plain source name) to its alignment stack."""
    value = getattr(kind, "value", kind)
    if value in (MANUAL, "ManualSnippet"):
        return MANUAL
    if value in (QUESTION, "HistoricalQuestion", "SyntheticQuestion", None):
        return QUESTION
    raise ValueError(f"unknown source kind {kind!r}")


@dataclass
class Layer:
    W: np.ndarray
    b: np.ndarray


class Stack:
    """y = x + W_L act(... act(W_1 x + b_1) ...) + b_L, act = tanh.

    The last layer starts at zero so the stack is the identity at init. The
    hidden layers start random, otherwise their gradients would vanish too.
    """

    def __init__(self, layers: list[Layer]):
        self.layers = layers

    @property
    def dim(self) -> int:
        return self.layers[0].W.shape[1]

    def forward(self, x: np.ndarray) -> np.ndarray:
        return self._forward(x)[0]

    def _forward(self, x: np.ndarray):
        acts = [x]
        h = x
        for layer in self.layers[:-1]:
            h = np.tanh(h @ layer.W.T + layer.b)
            acts.append(h)
        last = self.layers[-1]
        return x + h @ last.W.T + last.b, acts

    def backward(self, x: np.ndarray, grad_out: np.ndarray):
        """Gradients of a scalar w.r.t. (input, [(dW, db) per layer]).

        ``x`` and ``grad_out`` are (m, d) batches; parameter gradients are
        summed over the batch.
        """
        _, acts = self._forward(x)
        grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(self.layers)
        g = grad_out
        last = self.layers[-1]
        grads[-1] = (g.T @ acts[-1], g.sum(axis=0))
        g_h = g @ last.W
        for i in range(len(self.layers) - 2, -1, -1):
            layer = self.layers[i]
            pre = g_h * (1.0 - acts[i + 1] ** 2)
            grads[i] = (pre.T @ acts[i], pre.sum(axis=0))
            g_h = pre @ layer.W
        grad_x = grad_out + g_h
        return grad_x, grads

    def parameter_count(self) -> int:
        return sum(l.W.size + l.b.size for l in self.layers)


class AlignmentNetwork:
    """One residual stack per source ("question", "manual")."""

    def __init__(self, stacks: dict[str, Stack], seed: int | None = None):
        dims = {s.dim for s in stacks.values()}
        if len(dims) != 1 or set(stacks) != set(SOURCES):
            raise ValueError("need one stack per source with equal dimensions")
        self.stacks = stacks
        self.seed = seed

    @classmethod
    def initialize(cls, dim: int = DEFAULT_DIM, layers: int = 2, seed: int = 0) -> "AlignmentNetwork":
        if layers < 1:
            raise ValueError("need at least one layer")
        rng = np.random.default_rng(seed)
        limit = np.sqrt(6.0 / (2 * dim))
        stacks = {}
        for name in SOURCES:
            ls = [Layer(rng.uniform(-limit, limit, (dim, dim)), np.zeros(dim)) for _ in range(layers - 1)]
            ls.append(Layer(np.zeros((dim, dim)), np.zeros(dim)))
            stacks[name] = Stack(ls)
        return cls(stacks, seed)

    @property
    def dim(self) -> int:
        return self.stacks[QUESTION].dim

    @property
    def layer_count(self) -> int:
        return len(self.stacks[QUESTION].layers)

    def parameter_count(self) -> int:
        return sum(s.parameter_count() for s in self.stacks.values())

    def forward(self, x, source_kind) -> np.ndarray:
        a = as_array(x)
        if a.shape[-1] != self.dim:
            raise DimensionMismatch(f"expected dimension {self.dim}, got {a.shape[-1]}")
        return self.stacks[source_of(source_kind)].forward(a)

    def copy(self) -> "AlignmentNetwork":
        return AlignmentNetwork(
            {k: Stack([Layer(l.W.copy(), l.b.copy()) for l in s.layers]) for k, s in self.stacks.items()},
            self.seed,
        )

    def parameters(self):
        """Flat (source, layer, name, array) listing in checkpoint order."""
        for name in SOURCES:
            for i, layer in enumerate(self.stacks[name].layers):
                yield name, i, "W", layer.W
                yield name, i, "b", layer.b

    def same_parameters(self, other: "AlignmentNetwork") -> bool:
        return all(np.array_equal(a[3], b[3]) for a, b in zip(self.parameters(), other.parameters()))


def align(net: AlignmentNetwork, v, source_kind) -> EmbeddingVector:
    return EmbeddingVector(net.forward(as_array(v), source_kind))


# ---------------------------------------------------------------------------
# checkpoint: header, then per source, per layer: W (d*d f32) and b (d f32); CRC32 trailer


def checkpoint_bytes(net: AlignmentNetwork) -> bytes:
    parts = [_HEADER.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, net.dim, net.layer_count)]
    for _, _, _, arr in net.parameters():
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


def save_checkpoint(net: AlignmentNetwork, path: str | Path) -> None:
    from knobrag.corpus import atomic_write_bytes
    try:
        atomic_write_bytes(path, checkpoint_bytes(net))
    except OSError as exc:
        raise IoFailure(f"cannot write checkpoint {path}: {exc}") from None


def checkpoint_from_bytes(data: bytes) -> AlignmentNetwork:
    if len(data) < _HEADER.size + 4:
        raise CorruptCheckpoint("checkpoint truncated")
    magic, version, d, nlayers = _HEADER.unpack_from(data)
    if magic != CHECKPOINT_MAGIC:
        raise CorruptCheckpoint("bad checkpoint magic")
    if version != CHECKPOINT_VERSION:
        raise CorruptCheckpoint(f"unsupported checkpoint version {version}")
    expected = _HEADER.size + len(SOURCES) * nlayers * (d * d + d) * 4 + 4
    if len(data) != expected or d == 0 or nlayers == 0:
        raise CorruptCheckpoint(f"checkpoint size {len(data)} does not match header (expected {expected})")
    (crc,) = struct.unpack_from("<I", data, len(data) - 4)
    if zlib.crc32(data[:-4]) != crc:
        raise CorruptCheckpoint("checkpoint checksum mismatch")
    off = _HEADER.size
    stacks = {}
    for name in SOURCES:
        layers = []
        for _ in range(nlayers):
            W = np.frombuffer(data, "<f4", d * d, off).reshape(d, d).astype(np.float64)
            off += d * d * 4
            b = np.frombuffer(data, "<f4", d, off).astype(np.float64)
            off += d * 4
            layers.append(Layer(W, b))
        stacks[name] = Stack(layers)
    return AlignmentNetwork(stacks)


def load_checkpoint(path: str | Path) -> AlignmentNetwork:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read checkpoint {path}: {exc}") from None
    return checkpoint_from_bytes(data)
