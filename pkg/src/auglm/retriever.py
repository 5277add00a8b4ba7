"""Trainable dual-encoder retriever over a prototype corpus.

One linear projection P (shape d_out x d_in, applied as P @ e) encodes both
queries and documents; the score of a pair is the inner product of the two
projections, computed in 64-bit. Training matches the retriever's softmax
distribution over a document minibatch to an LM-derived target distribution
under a KL objective whose analytic gradient is

    dL/dP = P @ (outer(w, e_q) + outer(e_q, w)),
    w     = sum_j (p_phi[j] - p_lm[j]) * e_doc[j]

with the LM-side distribution treated as a constant (only the projection is
ever updated here).
"""

from __future__ import annotations

import json
import os
import struct
import warnings
from dataclasses import dataclass

import numpy as np

from .embed import EmbeddingMatrix, EmbeddingProvider, load_embeddings, save_embeddings
from .errors import FormatError, ValidationError
from .lm import LmScore

__all__ = [
    "CorpusDoc",
    "Corpus",
    "RetrieverState",
    "init_retriever",
    "score",
    "retrieve_argmax",
    "retrieve_top_m",
    "retrieval_distribution",
    "lm_supervised_distribution",
    "kl_loss",
    "kl_gradient",
    "train_step_retriever",
    "save_retriever",
    "load_retriever",
    "RETRIEVER_FILE",
    "CORPUS_FILE",
    "CORPUS_EMB_FILE",
]

RETRIEVER_FILE = "retriever.bin"
CORPUS_FILE = "corpus.jsonl"
CORPUS_EMB_FILE = "corpus.emb"
_MAGIC = b"RETR"
_PROB_FLOOR = 1e-30


@dataclass
class CorpusDoc:
    text: str
    titles: list[str]
    prototype: str  # string id of the prototype node
    prototype_index: int
    class_index: int


@dataclass
class Corpus:
    """Ordered retrieval documents, optionally with cached base embeddings."""

    documents: list[CorpusDoc]
    embeddings: EmbeddingMatrix | None = None

    def __len__(self) -> int:
        return len(self.documents)

    def texts(self) -> list[str]:
        return [d.text for d in self.documents]

    def attach_embeddings(self, provider: EmbeddingProvider) -> "Corpus":
        self.embeddings = provider.embed(self.texts())
        return self

    def require_embeddings(self) -> EmbeddingMatrix:
        if self.embeddings is None:
            raise ValidationError("corpus has no embeddings attached")
        if self.embeddings.n != len(self.documents):
            raise ValidationError(
                f"corpus has {len(self.documents)} documents but "
                f"{self.embeddings.n} embedding rows"
            )
        return self.embeddings

    def save(self, jsonl_path: str, emb_path: str | None = None) -> None:
        with open(jsonl_path, "w", encoding="utf-8") as fh:
            for doc in self.documents:
                rec = {
                    "text": doc.text,
                    "prototype": doc.prototype,
                    "class": doc.class_index,
                    "titles": doc.titles,
                    "prototype_index": doc.prototype_index,
                }
                fh.write(json.dumps(rec, ensure_ascii=False) + "\n")
        if emb_path is not None:
            save_embeddings(self.require_embeddings(), emb_path)

    @classmethod
    def load(cls, jsonl_path: str, emb_path: str | None = None) -> "Corpus":
        docs: list[CorpusDoc] = []
        with open(jsonl_path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise FormatError(f"{jsonl_path}:{lineno}: malformed JSON: {exc}") from exc
                try:
                    docs.append(
                        CorpusDoc(
                            text=rec["text"],
                            titles=list(rec.get("titles", [rec["text"]])),
                            prototype=rec["prototype"],
                            prototype_index=int(rec.get("prototype_index", -1)),
                            class_index=int(rec["class"]),
                        )
                    )
                except KeyError as exc:
                    raise FormatError(f"{jsonl_path}:{lineno}: missing key {exc}") from None
        corpus = cls(documents=docs)
        if emb_path is not None:
            corpus.embeddings = load_embeddings(emb_path)
            corpus.require_embeddings()
        return corpus


@dataclass
class RetrieverState:
    """Trainable projection, shape (d_out, d_in), applied as P @ e."""

    projection: np.ndarray
    seed: int = 0

    def __post_init__(self):
        self.projection = np.ascontiguousarray(self.projection, dtype=np.float64)
        if self.projection.ndim != 2:
            raise ValidationError("projection must be a matrix")
        if not np.isfinite(self.projection).all():
            raise ValidationError("projection contains NaN or Inf")

    @property
    def d_in(self) -> int:
        return self.projection.shape[1]

    @property
    def d_out(self) -> int:
        return self.projection.shape[0]


def init_retriever(d: int, d_out: int = 128, seed: int = 0) -> RetrieverState:
    """Uniform(-a, a) init, a = sqrt(6 / (d + d_out))."""
    if d < 1 or d_out < 1:
        raise ValidationError(f"dimensions must be positive, got d={d}, d_out={d_out}")
    rng = np.random.default_rng(seed)
    a = np.sqrt(6.0 / (d + d_out))
    return RetrieverState(projection=rng.uniform(-a, a, size=(d_out, d)), seed=seed)


def _as_f64_vector(state: RetrieverState, e: np.ndarray, name: str) -> np.ndarray:
    e = np.asarray(e, dtype=np.float64)
    if e.ndim != 1 or e.shape[0] != state.d_in:
        raise ValidationError(
            f"{name} has shape {e.shape}; expected ({state.d_in},) to match the projection"
        )
    return e


def score(state: RetrieverState, query_embedding: np.ndarray, doc_embedding: np.ndarray) -> float:
    """Inner product of the two projections; symmetric in its arguments."""
    q = _as_f64_vector(state, query_embedding, "query embedding")
    d = _as_f64_vector(state, doc_embedding, "document embedding")
    return float(np.dot(state.projection @ d, state.projection @ q))


def _doc_matrix(corpus: Corpus) -> np.ndarray:
    return np.asarray(corpus.require_embeddings().values, dtype=np.float64)


def _scores_against(state: RetrieverState, docs_f64: np.ndarray, query: np.ndarray) -> np.ndarray:
    if docs_f64.shape[1] != state.d_in:
        raise ValidationError(
            f"document embeddings have width {docs_f64.shape[1]}, projection expects {state.d_in}"
        )
    projected_docs = docs_f64 @ state.projection.T
    projected_q = state.projection @ query
    return projected_docs @ projected_q


def retrieve_argmax(state: RetrieverState, corpus: Corpus, query_embedding: np.ndarray) -> int:
    """Index of the highest-scoring document; ties go to the lowest index."""
    if len(corpus) == 0:
        raise ValidationError("cannot retrieve from an empty corpus")
    q = _as_f64_vector(state, query_embedding, "query embedding")
    scores = _scores_against(state, _doc_matrix(corpus), q)
    return int(np.argmax(scores))


def retrieve_top_m(
    state: RetrieverState, corpus: Corpus, query_embedding: np.ndarray, m: int
) -> list[int]:
    """Top-m document indices by descending score, ties by ascending index.

    m larger than the corpus returns the whole corpus in score order.
    """
    if m < 1:
        raise ValidationError(f"m must be >= 1, got {m}")
    if len(corpus) == 0:
        raise ValidationError("cannot retrieve from an empty corpus")
    q = _as_f64_vector(state, query_embedding, "query embedding")
    scores = _scores_against(state, _doc_matrix(corpus), q)
    order = np.argsort(-scores, kind="stable")
    return [int(i) for i in order[: min(m, len(corpus))]]


def _stable_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max()
    e = np.exp(shifted)
    return e / e.sum()


def retrieval_distribution(
    state: RetrieverState, doc_embeddings: np.ndarray, query_embedding: np.ndarray
) -> np.ndarray:
    """Softmax over the retriever scores of the given documents."""
    docs = np.asarray(doc_embeddings, dtype=np.float64)
    if docs.ndim != 2 or docs.shape[0] == 0:
        raise ValidationError("doc_embeddings must be a nonempty (m, d) matrix")
    q = _as_f64_vector(state, query_embedding, "query embedding")
    return _stable_softmax(_scores_against(state, docs, q))


def lm_supervised_distribution(lm_scores: list[LmScore], temperature: float = 1.0) -> np.ndarray:
    """Softmax over length-normalized LM log-likelihoods.

    The logit for each document is (log_likelihood / n_target_tokens) divided
    by the temperature; higher temperature flattens toward uniform.
    """
    if not lm_scores:
        raise ValidationError("need at least one LM score")
    if temperature <= 0.0:
        raise ValidationError(f"temperature must be positive, got {temperature}")
    logits = np.array(
        [s.log_likelihood / max(s.n_target_tokens, 1) for s in lm_scores], dtype=np.float64
    )
    if not np.isfinite(logits).all():
        raise ValidationError("non-finite LM score")
    return _stable_softmax(logits / temperature)


def kl_loss(p_lm: np.ndarray, p_phi: np.ndarray) -> float:
    """KL divergence sum(p_lm * ln(p_lm / p_phi)); zero iff the two agree.

    p_phi entries are floored at 1e-30 where p_lm is positive (a warning is
    emitted, since that indicates a collapsed retrieval distribution).
    """
    p_lm = np.asarray(p_lm, dtype=np.float64)
    p_phi = np.asarray(p_phi, dtype=np.float64)
    if p_lm.shape != p_phi.shape:
        raise ValidationError(f"distribution shapes differ: {p_lm.shape} vs {p_phi.shape}")
    mask = p_lm > 0.0
    phi = p_phi[mask]
    if np.any(phi < _PROB_FLOOR):
        warnings.warn("retrieval probability underflow; flooring at 1e-30", RuntimeWarning)
        phi = np.maximum(phi, _PROB_FLOOR)
    lm = p_lm[mask]
    return float(np.sum(lm * (np.log(lm) - np.log(phi))))


def kl_gradient(
    state: RetrieverState,
    doc_embeddings: np.ndarray,
    query_embedding: np.ndarray,
    p_lm: np.ndarray,
) -> np.ndarray:
    """Gradient of kl_loss wrt the projection, with p_lm held constant.

    Expanding sum_j (p_phi[j] - p_lm[j]) * d score_j / dP with
    d<P e_d, P e_q>/dP = P (e_d e_q^T + e_q e_d^T) collapses the sum into a
    single rank-2 expression through w = (p_phi - p_lm) @ docs.
    """
    docs = np.asarray(doc_embeddings, dtype=np.float64)
    q = _as_f64_vector(state, query_embedding, "query embedding")
    p_lm = np.asarray(p_lm, dtype=np.float64)
    if p_lm.shape != (docs.shape[0],):
        raise ValidationError(f"p_lm has shape {p_lm.shape}, expected ({docs.shape[0]},)")
    p_phi = retrieval_distribution(state, docs, q)
    w = (p_phi - p_lm) @ docs
    return np.outer(state.projection @ w, q) + np.outer(state.projection @ q, w)


def train_step_retriever(
    state: RetrieverState,
    query_embedding: np.ndarray,
    doc_embeddings: np.ndarray,
    p_lm: np.ndarray,
    lr: float,
) -> RetrieverState:
    """One gradient step on the projection; lr=0 is bitwise a no-op.

    Only the projection changes; the LM supplying p_lm is never touched.
    """
    if lr != 0.0:
        grad = kl_gradient(state, doc_embeddings, query_embedding, p_lm)
        state.projection -= lr * grad
    return state


def save_retriever(state: RetrieverState, path: str) -> None:
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sII", _MAGIC, state.d_in, state.d_out))
        fh.write(np.ascontiguousarray(state.projection, dtype="<f4").tobytes())


def load_retriever(path: str) -> RetrieverState:
    with open(path, "rb") as fh:
        header = fh.read(12)
        if len(header) < 12 or header[:4] != _MAGIC:
            raise FormatError(f"{path}: not a retriever file (bad magic)")
        _, d_in, d_out = struct.unpack("<4sII", header)
        body = fh.read()
    expected = d_in * d_out * 4
    if len(body) != expected:
        raise FormatError(
            f"{path}: size mismatch (expected {expected} payload bytes, got {len(body)})"
        )
    projection = np.frombuffer(body, dtype="<f4").reshape(d_out, d_in).astype(np.float64)
    return RetrieverState(projection=projection)


def corpus_paths(artifacts_dir: str) -> tuple[str, str]:
    return (
        os.path.join(artifacts_dir, CORPUS_FILE),
        os.path.join(artifacts_dir, CORPUS_EMB_FILE),
    )
