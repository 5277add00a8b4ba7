"""End-to-end orchestration: preprocessing, dataset emission, the joint
LM/retriever training loop, evaluation, and multi-dataset mixing.

The training loop, per step, renders the sampled node's input with the
currently best-scoring corpus document, updates the LM on that (input,
target) pair, forms the retrieval minibatch of the top-M documents, scores
the M input variants with the LM in one batched call, and takes one KL
matching step on the retriever projection. Node order is an epoch-wise
seeded shuffle. The LM and retriever updates touch disjoint state; the loop
can verify that invariant per step when asked.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .embed import EmbeddingMatrix, EmbeddingProvider, save_embeddings
from .errors import AuglmError, ConvergenceError, ValidationError
from .gnn import (
    CandidateLabels,
    Predictions,
    PrototypeSet,
    SageModel,
    TrainConfig,
    build_prototype_corpus,
    forward,
    init_model,
    load_predictions,
    save_model,
    select_prototypes,
    top_i_candidates,
    train,
    write_predictions,
)
from .graph import TextAttributedGraph
from .lm import LmInterface
from .ppr import PprCache, PprParams, build_cache, save_cache
from .retriever import (
    Corpus,
    RetrieverState,
    init_retriever,
    kl_loss,
    lm_supervised_distribution,
    retrieval_distribution,
    retrieve_argmax,
    retrieve_top_m,
    save_retriever,
    train_step_retriever,
)
from .templates import (
    RETRIEVAL_MODES,
    RenderInput,
    RenderedExample,
    TemplateKind,
    assemble_retrieved,
    render,
)

__all__ = [
    "RunConfig",
    "ArtifactPaths",
    "PreprocessResult",
    "EvalReport",
    "preprocess",
    "emit_dataset",
    "train_loop",
    "evaluate",
    "mix_joint",
]

EMBEDDINGS_FILE = "embeddings.emb"
PREDICTIONS_FILE = "predictions.jsonl"
PROTOTYPES_FILE = "prototypes.json"
TRACE_FILE = "training_trace.json"


@dataclass(frozen=True)
class RunConfig:
    """Knobs for the whole pipeline; defaults follow the package's tuned
    citation-graph setup."""

    alpha: float = 0.1
    k: int = 5
    k_sem: int = 5
    n_prototypes: int = 10
    i_candidates: int = 3
    m: int = 8
    template: TemplateKind = TemplateKind.CITATION
    retrieval_mode: str = "both"
    lm_lr: float = 1e-4
    retriever_lr: float = 1e-5
    lm_temperature: float = 1.0
    epochs: int = 1
    seed: int = 0
    truncation_limit: int = 4096
    d_out: int = 128
    gnn_hidden: int = 256
    gnn_layers: int = 3
    gnn_lr: float = 0.05
    gnn_epochs: int = 200
    gnn_weight_decay: float = 0.0
    ppr_tol: float = 1e-10
    ppr_epsilon: float = 1e-6
    ppr_method: str = "power"
    score_before_update: bool = False
    free_form_eval: bool = False

    def __post_init__(self):
        if self.retrieval_mode not in RETRIEVAL_MODES:
            raise ValidationError(
                f"retrieval_mode must be one of {RETRIEVAL_MODES}, got {self.retrieval_mode!r}"
            )
        for name in ("k", "k_sem", "n_prototypes", "i_candidates", "m", "epochs", "d_out"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be >= 1, got {getattr(self, name)}")

    def ppr_params(self) -> PprParams:
        return PprParams(alpha=self.alpha, tol=self.ppr_tol, epsilon=self.ppr_epsilon)


@dataclass(frozen=True)
class ArtifactPaths:
    root: str

    def _p(self, name: str) -> str:
        return os.path.join(self.root, name)

    @property
    def embeddings(self) -> str:
        return self._p(EMBEDDINGS_FILE)

    @property
    def model(self) -> str:
        return self._p("sage_model.bin")

    @property
    def predictions(self) -> str:
        return self._p(PREDICTIONS_FILE)

    @property
    def prototypes(self) -> str:
        return self._p(PROTOTYPES_FILE)

    @property
    def ppr_cache(self) -> str:
        return self._p("ppr_cache.bin")

    @property
    def corpus(self) -> str:
        return self._p("corpus.jsonl")

    @property
    def corpus_emb(self) -> str:
        return self._p("corpus.emb")

    @property
    def retriever(self) -> str:
        return self._p("retriever.bin")

    @property
    def trace(self) -> str:
        return self._p(TRACE_FILE)


@dataclass
class PreprocessResult:
    model: SageModel
    predictions: Predictions
    prototypes: PrototypeSet
    candidates: CandidateLabels
    cache: PprCache
    corpus: Corpus
    gnn_losses: list[float] = field(default_factory=list)


@dataclass(frozen=True)
class EvalReport:
    accuracy: float
    per_class: dict[str, float]
    n_evaluated: int
    split: str

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "per_class": self.per_class,
            "n_evaluated": self.n_evaluated,
            "split": self.split,
        }


def save_prototypes(protos: PrototypeSet, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(
            {"n_per_class": protos.n_per_class, "per_class": protos.per_class},
            fh,
            ensure_ascii=False,
            sort_keys=True,
        )


def load_prototypes(path: str) -> PrototypeSet:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    return PrototypeSet(
        per_class=[[int(v) for v in members] for members in data["per_class"]],
        n_per_class=int(data["n_per_class"]),
    )


def preprocess(
    graph: TextAttributedGraph,
    base: EmbeddingMatrix,
    config: RunConfig,
    artifacts_dir: str,
    corpus_embedder: EmbeddingProvider,
) -> PreprocessResult:
    """Run the three preprocessing stages and cache every artifact.

    Stage 1 trains the candidate-pruning model, stage 2 selects per-class
    prototypes and builds the retrieval corpus from cached PPR
    neighborhoods, stage 3 saves top-I candidate labels. Idempotent: a rerun
    with identical inputs rewrites bitwise-identical files.
    """
    if graph.label_space is None:
        raise ValidationError("preprocessing requires a label space")
    os.makedirs(artifacts_dir, exist_ok=True)
    paths = ArtifactPaths(artifacts_dir)

    cache = build_cache(graph, config.k, config.ppr_params(), method=config.ppr_method)
    model = init_model(
        base.d, config.gnn_hidden, config.gnn_layers, graph.label_space.n_classes, config.seed
    )
    model, losses = train(
        model,
        graph,
        base,
        TrainConfig(lr=config.gnn_lr, epochs=config.gnn_epochs, weight_decay=config.gnn_weight_decay),
    )
    preds = forward(model, graph, base)
    protos = select_prototypes(preds, config.n_prototypes)
    cands = top_i_candidates(preds, config.i_candidates)
    corpus = build_prototype_corpus(protos, cache, graph, config.k)
    corpus.attach_embeddings(corpus_embedder)

    save_cache(cache, artifacts_dir)
    save_model(model, paths.model)
    write_predictions(preds, cands, graph, paths.predictions)
    save_prototypes(protos, paths.prototypes)
    corpus.save(paths.corpus, paths.corpus_emb)
    save_embeddings(base, paths.embeddings)
    return PreprocessResult(
        model=model,
        predictions=preds,
        prototypes=protos,
        candidates=cands,
        cache=cache,
        corpus=corpus,
        gnn_losses=losses,
    )


class _ExampleBuilder:
    """Renders one node's (input, target) pair under a fixed configuration.

    Uses the live retriever state, so inputs built after a training step see
    the updated projection.
    """

    def __init__(
        self,
        graph: TextAttributedGraph,
        config: RunConfig,
        cache: PprCache,
        corpus: Corpus | None,
        candidates: CandidateLabels,
        base: EmbeddingMatrix,
        state: RetrieverState | None,
    ):
        if graph.label_space is None:
            raise ValidationError("rendering requires a label space")
        needs_retriever = config.retrieval_mode in ("proto", "both")
        if needs_retriever and (corpus is None or state is None):
            raise ValidationError(
                f"retrieval mode {config.retrieval_mode!r} needs a corpus and retriever state"
            )
        self.graph = graph
        self.config = config
        self.cache = cache
        self.corpus = corpus
        self.candidates = candidates
        self.base = base
        self.state = state
        self.label_space = graph.label_space
        self._queries = np.asarray(base.values, dtype=np.float64)

    def query(self, v: int) -> np.ndarray:
        return self._queries[v]

    def ppr_titles(self, v: int) -> list[str]:
        entries = self.cache.top_without_self(v, self.config.k)
        return [self.graph.title_of(u) for u, _ in entries]

    def proto_titles(self, doc_index: int) -> list[str]:
        assert self.corpus is not None
        return self.corpus.documents[doc_index].titles[: self.config.k_sem]

    def candidate_texts(self, v: int) -> list[str]:
        return [self.label_space.text(c) for c in self.candidates.candidates[v]]

    def target_text(self, v: int) -> str:
        label = int(self.graph.labels[v])
        return self.label_space.text(label) if label >= 0 else ""

    def argmax_doc(self, v: int) -> int:
        assert self.corpus is not None and self.state is not None
        return retrieve_argmax(self.state, self.corpus, self.query(v))

    def build(self, v: int, doc_index: int | None = None) -> RenderedExample:
        mode = self.config.retrieval_mode
        ppr_titles = self.ppr_titles(v) if mode in ("ppr", "both") else []
        proto_titles: list[str] = []
        if mode in ("proto", "both"):
            if doc_index is None:
                doc_index = self.argmax_doc(v)
            proto_titles = self.proto_titles(doc_index)
        retrieved = assemble_retrieved(ppr_titles, proto_titles, mode)
        r = RenderInput(
            target_title=self.graph.title_of(v),
            target_body=self.graph.node_texts[v].get(self.config.template.body_field, ""),
            retrieved_titles=retrieved,
            candidate_labels=self.candidate_texts(v),
            truncation_limit=self.config.truncation_limit,
        )
        return render(self.config.template, r, target=self.target_text(v))


def emit_dataset(
    graph: TextAttributedGraph,
    config: RunConfig,
    cache: PprCache,
    corpus: Corpus | None,
    candidates: CandidateLabels,
    base: EmbeddingMatrix,
    state: RetrieverState | None,
    split: str,
    out_path: str,
) -> int:
    """Write one JSONL line {"id", "input", "target", "split"} per node in
    the split; returns the number of lines written."""
    builder = _ExampleBuilder(graph, config, cache, corpus, candidates, base, state)
    nodes = graph.split_indices(split)
    with open(out_path, "w", encoding="utf-8") as fh:
        for v in nodes:
            ex = builder.build(int(v))
            rec = {"id": graph.ids[v], "input": ex.input, "target": ex.target, "split": split}
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")
    return int(nodes.size)


def train_loop(
    graph: TextAttributedGraph,
    config: RunConfig,
    cache: PprCache,
    corpus: Corpus,
    candidates: CandidateLabels,
    base: EmbeddingMatrix,
    state: RetrieverState,
    lm: LmInterface,
    verify_stop_gradient: bool = False,
) -> tuple[RetrieverState, dict]:
    """Joint LM/retriever training over seeded epoch shuffles of the train
    split.

    Returns the updated retriever state and loss traces
    {"lm_loss": [...], "kl_loss": [...]}. With verify_stop_gradient, every
    step asserts that the LM update left the retriever parameters bitwise
    unchanged and the retriever update left the LM's behavioral fingerprint
    unchanged.
    """
    if config.retrieval_mode == "ppr":
        raise ValidationError(
            "retriever training needs a semantic retrieval mode ('proto' or 'both')"
        )
    builder = _ExampleBuilder(graph, config, cache, corpus, candidates, base, state)
    train_nodes = graph.split_indices("train")
    if train_nodes.size == 0:
        raise ValidationError("no nodes in the train split")
    if np.any(graph.labels[train_nodes] < 0):
        raise ValidationError("every training node must have a label")
    docs_f64 = np.asarray(corpus.require_embeddings().values, dtype=np.float64)

    lm_losses: list[float] = []
    kl_losses: list[float] = []
    checked_steps = 0
    for epoch in range(config.epochs):
        order = np.random.default_rng([config.seed, epoch]).permutation(train_nodes)
        for v in order:
            v = int(v)
            q = builder.query(v)
            example = builder.build(v)
            pairs_input: str = example.input
            target = example.target

            def lm_update() -> float:
                if verify_stop_gradient:
                    before = state.projection.tobytes()
                    loss = lm.train_step(pairs_input, target, lr=config.lm_lr)
                    if state.projection.tobytes() != before:
                        raise AuglmError("LM update modified retriever parameters")
                    return loss
                return lm.train_step(pairs_input, target, lr=config.lm_lr)

            if not config.score_before_update:
                lm_loss = lm_update()

            top_idx = retrieve_top_m(state, corpus, q, config.m)
            sub = docs_f64[top_idx]
            variants = [builder.build(v, doc_index=j).input for j in top_idx]
            scores = lm.score_batch([(text, target) for text in variants])
            p_lm = lm_supervised_distribution(scores, temperature=config.lm_temperature)

            if config.score_before_update:
                lm_loss = lm_update()

            p_phi = retrieval_distribution(state, sub, q)
            step_kl = kl_loss(p_lm, p_phi)
            if not (np.isfinite(lm_loss) and np.isfinite(step_kl)):
                raise ConvergenceError(
                    f"non-finite loss at epoch {epoch} (lm={lm_loss}, kl={step_kl})"
                )
            if verify_stop_gradient:
                fp_before = lm.fingerprint()
                train_step_retriever(state, q, sub, p_lm, config.retriever_lr)
                if lm.fingerprint() != fp_before:
                    raise AuglmError("retriever update modified LM state")
                checked_steps += 1
            else:
                train_step_retriever(state, q, sub, p_lm, config.retriever_lr)
            lm_losses.append(float(lm_loss))
            kl_losses.append(float(step_kl))
    traces = {"lm_loss": lm_losses, "kl_loss": kl_losses}
    if verify_stop_gradient:
        traces["stop_gradient_checked_steps"] = checked_steps
    return state, traces


def evaluate(
    graph: TextAttributedGraph,
    config: RunConfig,
    cache: PprCache,
    corpus: Corpus | None,
    candidates: CandidateLabels,
    base: EmbeddingMatrix,
    state: RetrieverState | None,
    lm: LmInterface,
    split: str,
) -> EvalReport:
    """Exact-match evaluation over a split.

    Generation is constrained to each node's candidate label texts unless
    config.free_form_eval is set; a prediction counts as correct when it
    equals the ground-truth label text exactly after trimming trailing
    whitespace.
    """
    builder = _ExampleBuilder(graph, config, cache, corpus, candidates, base, state)
    nodes = graph.split_indices(split)
    if np.any(graph.labels[nodes] < 0):
        raise ValidationError(f"split {split!r} contains unlabeled nodes; cannot evaluate")
    label_space = builder.label_space
    correct_total = 0
    per_class_total: dict[int, int] = {}
    per_class_correct: dict[int, int] = {}
    for v in nodes:
        v = int(v)
        ex = builder.build(v)
        if config.free_form_eval:
            generated = lm.generate(ex.input, candidates=None)
        else:
            generated = lm.generate(ex.input, candidates=builder.candidate_texts(v))
        truth = ex.target
        label = int(graph.labels[v])
        hit = generated.rstrip() == truth.rstrip()
        correct_total += hit
        per_class_total[label] = per_class_total.get(label, 0) + 1
        per_class_correct[label] = per_class_correct.get(label, 0) + hit
    n = int(nodes.size)
    per_class = {
        label_space.text(c): per_class_correct[c] / per_class_total[c]
        for c in sorted(per_class_total)
    }
    return EvalReport(
        accuracy=correct_total / n if n else 0.0,
        per_class=per_class,
        n_evaluated=n,
        split=split,
    )


def write_report(report: EvalReport, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, ensure_ascii=False, sort_keys=True, indent=2)
        fh.write("\n")


def mix_joint(input_paths: list[str], seed: int, out_path: str) -> int:
    """Concatenate emitted datasets, tag each line with its source path, and
    write a seeded shuffle of the union."""
    if len(input_paths) < 2:
        raise ValidationError(f"joint mixing needs at least 2 datasets, got {len(input_paths)}")
    records: list[dict] = []
    for path in input_paths:
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise ValidationError(f"{path}:{lineno}: malformed JSON: {exc}") from exc
                rec["source"] = path
                records.append(rec)
    order = np.random.default_rng(seed).permutation(len(records))
    with open(out_path, "w", encoding="utf-8") as fh:
        for i in order:
            fh.write(json.dumps(records[int(i)], ensure_ascii=False) + "\n")
    return len(records)


def load_candidates_from_predictions(
    path: str, graph: TextAttributedGraph, i: int
) -> tuple[Predictions, CandidateLabels]:
    """Re-derive top-i candidates from a stored predictions export, so i can
    change without retraining."""
    preds, _ = load_predictions(path, graph)
    return preds, top_i_candidates(preds, i)


def init_or_load_retriever(path: str, d: int, config: RunConfig) -> RetrieverState:
    from .retriever import load_retriever

    if os.path.exists(path):
        state = load_retriever(path)
        if state.d_in != d:
            raise ValidationError(
                f"{path}: retriever expects {state.d_in}-d embeddings, got {d}"
            )
        return state
    return init_retriever(d, config.d_out, config.seed)
