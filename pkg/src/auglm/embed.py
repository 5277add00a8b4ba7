"""Base text embeddings: deterministic hashed bag-of-words provider, the
binary storage format, and 64-bit inner products.

Base embeddings are frozen inputs to the rest of the pipeline; nothing here
is trained. Real sentence embeddings can be produced by a remote service and
stored in the same file format.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from typing import Protocol

import numpy as np

from .errors import FormatError, ValidationError

__all__ = [
    "EmbeddingMatrix",
    "EmbeddingProvider",
    "HashEmbedder",
    "hash_embed",
    "save_embeddings",
    "load_embeddings",
    "inner_product",
]

_MAGIC = b"EMB1"


@dataclass
class EmbeddingMatrix:
    """Row-major float32 matrix; row index is the node/document index."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float32)
        if self.values.ndim != 2:
            raise ValidationError(f"embedding matrix must be 2-D, got shape {self.values.shape}")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]

    def row(self, i: int) -> np.ndarray:
        return self.values[i]


class EmbeddingProvider(Protocol):
    dim: int

    def embed(self, texts: list[str]) -> EmbeddingMatrix: ...


def _token_hash(token: str, key: bytes) -> int:
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8, key=key).digest()
    return int.from_bytes(digest, "little")


def hash_embed(texts: list[str], d: int = 384, seed: int = 0) -> EmbeddingMatrix:
    """Deterministic hashed bag-of-words embeddings.

    Each text is lowercased and split on whitespace; every token is hashed
    with a seeded 64-bit keyed hash to a bucket in [0, d) with a sign taken
    from the hash's top bit; contributions accumulate and nonzero rows are
    L2-normalized. Empty texts yield all-zero rows. Stable across processes
    and platforms.

    Parameters
    ----------
    texts : list of str
    d : int
        Output dimension, at least 8.
    seed : int
        Keys the hash; different seeds give independent embeddings.
    """
    if d < 8:
        raise ValidationError(f"embedding dimension must be >= 8, got {d}")
    key = (seed & 0xFFFFFFFFFFFFFFFF).to_bytes(8, "little")
    out = np.zeros((len(texts), d), dtype=np.float64)
    for i, text in enumerate(texts):
        row = out[i]
        for token in text.lower().split():
            h = _token_hash(token, key)
            sign = 1.0 if (h >> 63) & 1 == 0 else -1.0
            row[h % d] += sign
        norm = float(np.linalg.norm(row))
        if norm > 0.0:
            row /= norm
    return EmbeddingMatrix(out.astype(np.float32))


class HashEmbedder:
    """EmbeddingProvider backed by hash_embed; pure and thread-safe."""

    def __init__(self, d: int = 384, seed: int = 0):
        if d < 8:
            raise ValidationError(f"embedding dimension must be >= 8, got {d}")
        self.dim = d
        self.seed = seed

    def embed(self, texts: list[str]) -> EmbeddingMatrix:
        return hash_embed(texts, d=self.dim, seed=self.seed)


def save_embeddings(matrix: EmbeddingMatrix, path: str) -> None:
    values = matrix.values
    if not np.isfinite(values).all():
        raise ValidationError("refusing to save embeddings containing NaN or Inf")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sII", _MAGIC, matrix.n, matrix.d))
        fh.write(np.ascontiguousarray(values, dtype="<f4").tobytes())


def load_embeddings(path: str) -> EmbeddingMatrix:
    with open(path, "rb") as fh:
        header = fh.read(12)
        if len(header) < 12 or header[:4] != _MAGIC:
            raise FormatError(f"{path}: not an embedding file (bad magic)")
        _, n, d = struct.unpack("<4sII", header)
        body = fh.read()
    expected = n * d * 4
    if len(body) != expected:
        raise FormatError(
            f"{path}: size mismatch (expected {expected} payload bytes, got {len(body)})"
        )
    values = np.frombuffer(body, dtype="<f4").reshape(n, d).copy()
    if not np.isfinite(values).all():
        raise FormatError(f"{path}: NaN or Inf detected in stored embeddings")
    return EmbeddingMatrix(values)


def inner_product(a: np.ndarray, b: np.ndarray) -> float:
    """Dot product accumulated in 64-bit regardless of input dtype."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape or a.ndim != 1:
        raise ValidationError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(np.dot(a.astype(np.float64), b.astype(np.float64)))
