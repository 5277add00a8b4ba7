"""Personalized PageRank: exact power iteration, residual-push approximation,
top-K selection, and the per-node neighbor cache.

The fixed point solved is r = alpha * q + (1 - alpha) * A D^-1 r with q the
one-hot vector at the source node. A D^-1 is column-stochastic over the
undirected adjacency; a node of degree 0 is treated as having a self-loop
inside the normalization only, which keeps probability mass conserved.
"""

from __future__ import annotations

import math
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import ConvergenceError, FormatError, ValidationError
from .graph import TextAttributedGraph

__all__ = [
    "PprParams",
    "PprVector",
    "ppr_power_iteration",
    "ppr_push",
    "top_k",
    "PprCache",
    "build_cache",
    "CACHE_FILE",
]

CACHE_FILE = "ppr_cache.bin"
_MAGIC = b"PPR1"
_ABSENT = 0xFFFFFFFF


def default_max_iter(alpha: float, tol: float) -> int:
    """Iteration cap from the geometric contraction bound (factor 1 - alpha)."""
    return 10 * math.ceil(math.log(tol) / math.log(1.0 - alpha))


@dataclass(frozen=True)
class PprParams:
    alpha: float = 0.1
    tol: float = 1e-10
    max_iter: int | None = None
    epsilon: float = 1e-6

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValidationError(f"alpha must be in (0, 1), got {self.alpha}")
        if self.tol <= 0.0:
            raise ValidationError(f"tol must be positive, got {self.tol}")
        if self.epsilon <= 0.0:
            raise ValidationError(f"epsilon must be positive, got {self.epsilon}")

    @property
    def iteration_cap(self) -> int:
        return self.max_iter if self.max_iter is not None else default_max_iter(self.alpha, self.tol)


@dataclass
class PprVector:
    """Sparse non-negative relevance scores for one source node."""

    source: int
    scores: dict[int, float] = field(default_factory=dict)

    @classmethod
    def from_dense(cls, source: int, dense: np.ndarray) -> "PprVector":
        idx = np.nonzero(dense)[0]
        return cls(source=source, scores={int(i): float(dense[i]) for i in idx})

    def to_dense(self, n: int) -> np.ndarray:
        out = np.zeros(n, dtype=np.float64)
        for i, s in self.scores.items():
            out[i] = s
        return out

    def total(self) -> float:
        return float(sum(self.scores.values()))


def _check_source(graph: TextAttributedGraph, source: int) -> None:
    if not 0 <= source < graph.n:
        raise ValidationError(f"source {source} out of range [0, {graph.n})")


def ppr_power_iteration(
    graph: TextAttributedGraph, source: int, params: PprParams
) -> PprVector:
    """Solve the fixed point by power iteration to within params.tol in L1.

    Raises
    ------
    ConvergenceError
        If the L1 step difference is still above tol at the iteration cap;
        the final residual is attached to the exception.
    """
    _check_source(graph, source)
    dense, iters, residual = _kernels.ppr_power(
        graph.csr_offsets, graph.csr_targets, source, params.alpha, params.tol, params.iteration_cap
    )
    if residual > params.tol:
        raise ConvergenceError(
            f"power iteration did not converge after {iters} iterations "
            f"(L1 residual {residual:.3e} > tol {params.tol:.3e})",
            residual=residual,
        )
    return PprVector.from_dense(source, dense)


def ppr_push(
    graph: TextAttributedGraph, source: int, alpha: float, epsilon: float
) -> tuple[PprVector, PprVector]:
    """Residual-push approximation.

    Returns (estimate, residual) where the estimate underestimates the exact
    scores entrywise and the residual satisfies
    max_u residual(u) / max(degree(u), 1) < epsilon. The exact solution is
    recoverable: estimate + ppr(residual) = ppr(one-hot at source).
    """
    _check_source(graph, source)
    if not 0.0 < alpha < 1.0:
        raise ValidationError(f"alpha must be in (0, 1), got {alpha}")
    if epsilon <= 0.0:
        raise ValidationError(f"epsilon must be positive, got {epsilon}")
    p, res = _kernels.ppr_push(graph.csr_offsets, graph.csr_targets, source, alpha, epsilon)
    return PprVector.from_dense(source, p), PprVector.from_dense(source, res)


def _ordered_entries(ppr: PprVector) -> list[tuple[int, float]]:
    return sorted(ppr.scores.items(), key=lambda kv: (-kv[1], kv[0]))


def top_k(ppr: PprVector, k: int, include_self: bool = True) -> list[int]:
    """Up to k node indices by descending score, ties broken by ascending index.

    The source node competes for its slot when include_self is true and is
    filtered out entirely otherwise. Fewer than k nonzero entries yield a
    shorter list.
    """
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    out = []
    for node, _ in _ordered_entries(ppr):
        if not include_self and node == ppr.source:
            continue
        out.append(node)
        if len(out) == k:
            break
    return out


@dataclass
class PprCache:
    """Per-node top-scoring neighbor lists, padded with an absent sentinel.

    Each node stores ``entries_per_node`` (neighbor, score) pairs with the
    source itself competing for a slot. Callers derive both self-inclusive
    and self-exclusive top-K lists, which is why builders store one entry
    more than the largest K they intend to serve.
    """

    n: int
    entries_per_node: int
    neighbors: np.ndarray  # int64 (n, e), -1 where absent
    scores: np.ndarray  # float32 (n, e)

    def _entries(self, v: int) -> list[tuple[int, float]]:
        row_n = self.neighbors[v]
        row_s = self.scores[v]
        return [(int(u), float(s)) for u, s in zip(row_n, row_s) if u >= 0]

    def top_with_self(self, v: int, k: int) -> list[tuple[int, float]]:
        self._check_k(k)
        return self._entries(v)[:k]

    def top_without_self(self, v: int, k: int) -> list[tuple[int, float]]:
        self._check_k(k)
        return [e for e in self._entries(v) if e[0] != v][:k]

    def _check_k(self, k: int) -> None:
        if k < 1:
            raise ValidationError(f"k must be >= 1, got {k}")
        if k + 1 > self.entries_per_node:
            raise ValidationError(
                f"cache holds {self.entries_per_node} entries per node; "
                f"rebuild with --k >= {k} to serve k={k}"
            )

    def save(self, path: str) -> None:
        with open(path, "wb") as fh:
            fh.write(struct.pack("<4sII", _MAGIC, self.n, self.entries_per_node))
            packed = np.empty(
                (self.n, self.entries_per_node),
                dtype=np.dtype([("neighbor", "<u4"), ("score", "<f4")]),
            )
            nb = self.neighbors.astype(np.int64, copy=True)
            nb[nb < 0] = _ABSENT
            packed["neighbor"] = nb.astype(np.uint32)
            sc = self.scores.astype(np.float32, copy=True)
            sc[self.neighbors < 0] = 0.0
            packed["score"] = sc
            fh.write(packed.tobytes())

    @classmethod
    def load(cls, path: str) -> "PprCache":
        with open(path, "rb") as fh:
            header = fh.read(12)
            if len(header) < 12 or header[:4] != _MAGIC:
                raise FormatError(f"{path}: not a PPR cache (bad magic)")
            _, n, entries = struct.unpack("<4sII", header)
            body = fh.read()
        expected = n * entries * 8
        if len(body) != expected:
            raise FormatError(
                f"{path}: size mismatch (expected {expected} payload bytes, got {len(body)})"
            )
        packed = np.frombuffer(
            body, dtype=np.dtype([("neighbor", "<u4"), ("score", "<f4")])
        ).reshape(n, entries)
        neighbors = packed["neighbor"].astype(np.int64)
        neighbors[packed["neighbor"] == _ABSENT] = -1
        return cls(
            n=n,
            entries_per_node=entries,
            neighbors=neighbors,
            scores=packed["score"].astype(np.float32),
        )


def build_cache(
    graph: TextAttributedGraph,
    k: int,
    params: PprParams,
    method: str = "power",
) -> PprCache:
    """Compute per-node top-(k+1) lists with the source competing for a slot.

    The extra entry lets consumers derive exact top-k lists both with and
    without the source node. method is "power" (exact to params.tol) or
    "push" (approximate, residual threshold params.epsilon).
    """
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    if method not in ("power", "push"):
        raise ValidationError(f"method must be 'power' or 'push', got {method!r}")
    entries = k + 1
    neighbors = np.full((graph.n, entries), -1, dtype=np.int64)
    scores = np.zeros((graph.n, entries), dtype=np.float32)
    for v in range(graph.n):
        if method == "power":
            vec = ppr_power_iteration(graph, v, params)
        else:
            vec, _ = ppr_push(graph, v, params.alpha, params.epsilon)
        top = _ordered_entries(vec)[:entries]
        for slot, (node, score) in enumerate(top):
            neighbors[v, slot] = node
            scores[v, slot] = np.float32(score)
    return PprCache(n=graph.n, entries_per_node=entries, neighbors=neighbors, scores=scores)


def save_cache(cache: PprCache, out_dir: str) -> str:
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, CACHE_FILE)
    cache.save(path)
    return path


def load_cache(artifacts_dir: str) -> PprCache:
    path = os.path.join(artifacts_dir, CACHE_FILE)
    if not os.path.exists(path):
        raise ValidationError(f"{artifacts_dir} has no {CACHE_FILE}; run the ppr step first")
    return PprCache.load(path)
