"""Fixed-dimension embedding vectors."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from knobrag.errors import DimensionMismatch

DEFAULT_DIM = 768


@dataclass(frozen=True, eq=False)
class EmbeddingVector:
    values: np.ndarray
    norm: float = field(init=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64).ravel()
        if not np.all(np.isfinite(v)):
            raise ValueError("embedding entries must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "norm", float(np.linalg.norm(v)))

    @property
    def dim(self) -> int:
        return self.values.size

    def __len__(self) -> int:
        return self.values.size

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def __eq__(self, other):
        if not isinstance(other, EmbeddingVector):
            return NotImplemented
        return self.values.shape == other.values.shape and bool(np.array_equal(self.values, other.values))

    def __hash__(self):
        return hash(self.values.tobytes())


def as_array(v, dim: int | None = None) -> np.ndarray:
    a = v.values if isinstance(v, EmbeddingVector) else np.asarray(v, dtype=np.float64)
    if dim is not None and a.shape[-1] != dim:
        raise DimensionMismatch(f"expected dimension {dim}, got {a.shape[-1]}")
    return a


def cosine(a, b) -> float:
    a, b = as_array(a), as_array(b)
    if a.shape != b.shape:
        raise DimensionMismatch(f"dimensions {a.shape} and {b.shape} differ")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(a @ b / (na * nb))


def cosine_matrix(queries: np.ndarray, keys: np.ndarray) -> np.ndarray:
    """Row-wise cosine similarities; zero rows score 0 against everything."""
    def unit(x):
        n = np.linalg.norm(x, axis=-1, keepdims=True)
        return np.divide(x, n, out=np.zeros_like(x, dtype=np.float64), where=n > 0)
    return unit(np.atleast_2d(queries)) @ unit(np.atleast_2d(keys)).T
