"""Mean-aggregation graph network with hand-derived gradients.

Each layer computes h^(l) = act(MEAN({h^(l-1) of self} union {neighbors}) @ W^(l))
with ReLU on hidden layers and a row softmax on the final layer. Training is
full-batch gradient descent on the mean negative log-likelihood over the
training split. The aggregation operator M = D_hat^-1 (I + A), with
D_hat = diag(degree + 1), is linear; its adjoint (I + A) D_hat^-1 reuses the
same neighbor-sum kernel, which keeps the backward pass exact.

Also houses the consumers of the trained model's predictions: confidence-based
prototype selection per predicted class, top-I candidate label pruning, and
prototype corpus construction from cached PPR neighborhoods.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .embed import EmbeddingMatrix
from .errors import ConvergenceError, FormatError, ValidationError
from .graph import TextAttributedGraph
from .ppr import PprCache
from .retriever import Corpus, CorpusDoc

__all__ = [
    "SageModel",
    "Predictions",
    "PrototypeSet",
    "CandidateLabels",
    "TrainConfig",
    "init_model",
    "forward",
    "train",
    "select_prototypes",
    "top_i_candidates",
    "build_prototype_corpus",
    "save_model",
    "load_model",
    "MODEL_FILE",
]

MODEL_FILE = "sage_model.bin"
_MAGIC = b"SAGE"


@dataclass
class SageModel:
    """Dense layer weights; weights[l] has shape (dims[l], dims[l+1])."""

    weights: list[np.ndarray]
    seed: int = 0

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple([self.weights[0].shape[0]] + [w.shape[1] for w in self.weights])

    def validate(self) -> None:
        for l in range(1, self.n_layers):
            if self.weights[l - 1].shape[1] != self.weights[l].shape[0]:
                raise ValidationError(
                    f"layer {l} weight shapes do not chain: "
                    f"{self.weights[l - 1].shape} -> {self.weights[l].shape}"
                )
        if any(not np.isfinite(w).all() for w in self.weights):
            raise ValidationError("model weights contain NaN or Inf")


@dataclass
class Predictions:
    probs: np.ndarray  # (n, C) float64, rows on the simplex
    predicted_class: np.ndarray  # (n,) int64, ties broken by smallest class
    confidence: np.ndarray  # (n,) float64, max of each row

    @property
    def n_classes(self) -> int:
        return self.probs.shape[1]


@dataclass
class PrototypeSet:
    """Per-class prototype node lists, each ordered by descending confidence
    then ascending node index; classes with fewer predicted members than N
    contribute all of them."""

    per_class: list[list[int]]
    n_per_class: int

    def all_nodes(self) -> list[int]:
        return [v for members in self.per_class for v in members]


@dataclass
class CandidateLabels:
    """candidates[v] holds I class indices by descending predicted probability,
    ties broken by ascending class index; always contains predicted_class."""

    candidates: np.ndarray  # (n, I) int64

    @property
    def i(self) -> int:
        return self.candidates.shape[1]


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.05
    epochs: int = 200
    weight_decay: float = 0.0


def init_model(
    input_dim: int, hidden: int, layers: int, n_classes: int, seed: int = 0
) -> SageModel:
    """Uniform(-a, a) init with a = sqrt(6 / (fan_in + fan_out)) per layer."""
    if layers < 1:
        raise ValidationError(f"layers must be >= 1, got {layers}")
    if n_classes < 2:
        raise ValidationError(f"need at least 2 classes, got {n_classes}")
    dims = [input_dim] + [hidden] * (layers - 1) + [n_classes]
    rng = np.random.default_rng(seed)
    weights = []
    for l in range(layers):
        fan_in, fan_out = dims[l], dims[l + 1]
        a = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-a, a, size=(fan_in, fan_out)))
    return SageModel(weights=weights, seed=seed)


def _mean_aggregate(graph: TextAttributedGraph, h: np.ndarray) -> np.ndarray:
    inv = 1.0 / (np.diff(graph.csr_offsets).astype(np.float64) + 1.0)
    summed = h + _kernels.gather_sum(graph.csr_offsets, graph.csr_targets, h)
    return summed * inv[:, None]


def _mean_aggregate_adjoint(graph: TextAttributedGraph, g: np.ndarray) -> np.ndarray:
    inv = 1.0 / (np.diff(graph.csr_offsets).astype(np.float64) + 1.0)
    scaled = g * inv[:, None]
    return scaled + _kernels.gather_sum(graph.csr_offsets, graph.csr_targets, scaled)


def _softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _forward_trace(model: SageModel, graph: TextAttributedGraph, base: np.ndarray):
    """Returns (probs, aggregated inputs per layer, pre-activations per layer)."""
    h = base
    aggs, zs = [], []
    for l, w in enumerate(model.weights):
        agg = _mean_aggregate(graph, h)
        z = agg @ w
        aggs.append(agg)
        zs.append(z)
        h = np.maximum(z, 0.0) if l < model.n_layers - 1 else _softmax(z)
    return h, aggs, zs


def forward(
    model: SageModel, graph: TextAttributedGraph, base_embeddings: EmbeddingMatrix
) -> Predictions:
    """Full-graph inference; deterministic given model and inputs."""
    base = np.ascontiguousarray(base_embeddings.values, dtype=np.float64)
    if base.shape[0] != graph.n:
        raise ValidationError(
            f"embeddings have {base.shape[0]} rows but the graph has {graph.n} nodes"
        )
    if base.shape[1] != model.weights[0].shape[0]:
        raise ValidationError(
            f"embedding width {base.shape[1]} does not match model input "
            f"dim {model.weights[0].shape[0]}"
        )
    probs, _, _ = _forward_trace(model, graph, base)
    predicted = np.argmax(probs, axis=1).astype(np.int64)
    confidence = probs[np.arange(graph.n), predicted]
    return Predictions(probs=probs, predicted_class=predicted, confidence=confidence)


def _loss_and_grads(
    model: SageModel,
    graph: TextAttributedGraph,
    base: np.ndarray,
    train_idx: np.ndarray,
    labels: np.ndarray,
):
    probs, aggs, zs = _forward_trace(model, graph, base)
    z_last = zs[-1]
    log_probs = z_last - z_last.max(axis=1, keepdims=True)
    log_probs = log_probs - np.log(np.exp(log_probs).sum(axis=1, keepdims=True))
    loss = -float(log_probs[train_idx, labels[train_idx]].mean())

    n, c = probs.shape
    d_z = np.zeros((n, c), dtype=np.float64)
    d_z[train_idx] = probs[train_idx]
    d_z[train_idx, labels[train_idx]] -= 1.0
    d_z /= train_idx.shape[0]

    grads: list[np.ndarray] = [np.empty(0)] * model.n_layers
    for l in range(model.n_layers - 1, -1, -1):
        grads[l] = aggs[l].T @ d_z
        if l == 0:
            break
        d_agg = d_z @ model.weights[l].T
        d_h = _mean_aggregate_adjoint(graph, d_agg)
        d_z = d_h * (zs[l - 1] > 0.0)
    return loss, grads


def train(
    model: SageModel,
    graph: TextAttributedGraph,
    base_embeddings: EmbeddingMatrix,
    config: TrainConfig,
) -> tuple[SageModel, list[float]]:
    """Full-batch gradient descent on mean NLL over the training split.

    Returns the trained model (updated in place) and the per-epoch loss
    trace. A zero learning rate leaves the weights bitwise unchanged.

    Raises
    ------
    ValidationError
        No training nodes, or a training node without a label.
    ConvergenceError
        Loss became NaN/Inf (reports the offending epoch).
    """
    model.validate()
    base = np.ascontiguousarray(base_embeddings.values, dtype=np.float64)
    train_idx = graph.split_indices("train")
    if train_idx.size == 0:
        raise ValidationError("no nodes in the train split")
    labels = graph.labels
    if np.any(labels[train_idx] < 0):
        raise ValidationError("every training node must have a label")
    losses: list[float] = []
    for epoch in range(config.epochs):
        loss, grads = _loss_and_grads(model, graph, base, train_idx, labels)
        if not np.isfinite(loss):
            raise ConvergenceError(f"training diverged (loss {loss}) at epoch {epoch}")
        losses.append(loss)
        if config.lr != 0.0:
            for w, g in zip(model.weights, grads):
                if config.weight_decay != 0.0:
                    g = g + config.weight_decay * w
                w -= config.lr * g
    return model, losses


def select_prototypes(preds: Predictions, n: int) -> PrototypeSet:
    """Top-n most confident nodes of each predicted class.

    Classes with no predicted members yield empty lists.
    """
    if n < 1:
        raise ValidationError(f"n must be >= 1, got {n}")
    per_class: list[list[int]] = []
    for c in range(preds.n_classes):
        members = np.nonzero(preds.predicted_class == c)[0]
        ranked = sorted(members, key=lambda v: (-preds.confidence[v], v))
        per_class.append([int(v) for v in ranked[:n]])
    return PrototypeSet(per_class=per_class, n_per_class=n)


def top_i_candidates(preds: Predictions, i: int) -> CandidateLabels:
    """Top-i classes per node by predicted probability.

    i = C keeps every class (pruning degenerates to an ordering); the
    candidate hit-rate is then 1 by construction.
    """
    c = preds.n_classes
    if not 1 <= i <= c:
        raise ValidationError(f"i must satisfy 1 <= i <= {c}, got {i}")
    # Stable sort on negated probabilities: equal entries keep ascending
    # class order, matching the smallest-index tie-break.
    order = np.argsort(-preds.probs, axis=1, kind="stable")
    return CandidateLabels(candidates=order[:, :i].astype(np.int64))


def build_prototype_corpus(
    protos: PrototypeSet,
    ppr_cache: PprCache,
    graph: TextAttributedGraph,
    k: int,
) -> Corpus:
    """One document per prototype: the "title" texts of its top-k PPR nodes
    (the prototype itself competing for a slot), descending score, joined
    with "; ". Documents are ordered by class then by prototype rank."""
    docs: list[CorpusDoc] = []
    for c, members in enumerate(protos.per_class):
        for v in members:
            entries = ppr_cache.top_with_self(v, k)
            titles = [graph.title_of(u) for u, _ in entries]
            docs.append(
                CorpusDoc(
                    text="; ".join(titles),
                    titles=titles,
                    prototype=graph.ids[v],
                    prototype_index=v,
                    class_index=c,
                )
            )
    return Corpus(documents=docs)


def save_model(model: SageModel, path: str) -> None:
    model.validate()
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sI", _MAGIC, model.n_layers))
        for w in model.weights:
            fh.write(struct.pack("<II", w.shape[0], w.shape[1]))
            fh.write(np.ascontiguousarray(w, dtype="<f4").tobytes())


def load_model(path: str) -> SageModel:
    with open(path, "rb") as fh:
        header = fh.read(8)
        if len(header) < 8 or header[:4] != _MAGIC:
            raise FormatError(f"{path}: not a model file (bad magic)")
        _, n_layers = struct.unpack("<4sI", header)
        weights = []
        for l in range(n_layers):
            shape_bytes = fh.read(8)
            if len(shape_bytes) < 8:
                raise FormatError(f"{path}: truncated at layer {l} header")
            rows, cols = struct.unpack("<II", shape_bytes)
            body = fh.read(rows * cols * 4)
            if len(body) != rows * cols * 4:
                raise FormatError(f"{path}: truncated at layer {l} weights")
            weights.append(
                np.frombuffer(body, dtype="<f4").reshape(rows, cols).astype(np.float64)
            )
        if fh.read(1):
            raise FormatError(f"{path}: trailing bytes after layer {n_layers - 1}")
    model = SageModel(weights=weights)
    model.validate()
    return model


def write_predictions(
    preds: Predictions,
    cands: CandidateLabels,
    graph: TextAttributedGraph,
    path: str,
) -> None:
    """JSONL export: {"id", "probs", "candidates"} per node."""
    with open(path, "w", encoding="utf-8") as fh:
        for v in range(graph.n):
            rec = {
                "id": graph.ids[v],
                "probs": [float(x) for x in preds.probs[v]],
                "candidates": [int(x) for x in cands.candidates[v]],
            }
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


def load_predictions(path: str, graph: TextAttributedGraph) -> tuple[Predictions, CandidateLabels]:
    probs_rows = []
    cand_rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}:{lineno}: malformed JSON: {exc}") from exc
            probs_rows.append(rec["probs"])
            cand_rows.append(rec["candidates"])
    if len(probs_rows) != graph.n:
        raise FormatError(f"{path}: {len(probs_rows)} records for a graph of {graph.n} nodes")
    probs = np.asarray(probs_rows, dtype=np.float64)
    predicted = np.argmax(probs, axis=1).astype(np.int64)
    confidence = probs[np.arange(probs.shape[0]), predicted]
    preds = Predictions(probs=probs, predicted_class=predicted, confidence=confidence)
    return preds, CandidateLabels(candidates=np.asarray(cand_rows, dtype=np.int64))
