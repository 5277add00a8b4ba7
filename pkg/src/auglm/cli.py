"""Command-line interface.

Exit codes: 0 on success, 1 on validation errors (bad flags, malformed
inputs), 2 on runtime failures. The AUGLM_LM_ENDPOINT environment variable,
when set, overrides any --lm value with that service URL.
"""

from __future__ import annotations

import json
import os
import shutil
import sys

import click
import numpy as np

from . import embed as embed_mod
from . import gnn, pipeline, ppr
from .errors import AuglmError, ValidationError
from .graph import ingest as ingest_op
from .graph import load_graph, save_graph, stats
from .lm import LmInterface, RemoteLm, ToyLm
from .pipeline import ArtifactPaths, RunConfig
from .retriever import Corpus, save_retriever
from .templates import TemplateKind

ENDPOINT_ENV = "AUGLM_LM_ENDPOINT"


def _resolve_lm(lm_value: str) -> LmInterface:
    override = os.environ.get(ENDPOINT_ENV)
    if override:
        return RemoteLm(override)
    if lm_value == "toy":
        return ToyLm()
    if lm_value.startswith("http://") or lm_value.startswith("https://"):
        return RemoteLm(lm_value)
    raise ValidationError(f"--lm must be 'toy' or an http(s) URL, got {lm_value!r}")


def _node_embedder(d: int, seed: int, lm_url: str | None):
    if lm_url:
        client = RemoteLm(lm_url)
        if client.dim != d:
            raise ValidationError(
                f"service embeds into {client.dim} dimensions, expected {d}"
            )
        return client
    return embed_mod.HashEmbedder(d=d, seed=seed)


@click.group()
def cli():
    """Turn a text-attributed graph into instruction-tuning data and train a
    semantic retriever with model feedback."""


@cli.command("ingest")
@click.option("--nodes", "nodes_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--edges", "edges_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--labels", "labels_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
def ingest_cmd(nodes_path, edges_path, labels_path, out_dir):
    """Read JSONL node/edge/label files into a validated graph cache."""
    graph = ingest_op(nodes_path, edges_path, labels_path)
    save_graph(graph, out_dir)
    s = stats(graph)
    click.echo(
        json.dumps(
            {
                "n_nodes": s.n_nodes,
                "n_edges": s.n_edges,
                "n_directed_entries": s.n_directed_entries,
                "n_classes": s.n_classes,
                "split_sizes": s.split_sizes,
            },
            sort_keys=True,
        )
    )


@cli.command("ppr")
@click.option("--graph", "graph_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--alpha", default=0.1, show_default=True)
@click.option("--k", default=5, show_default=True)
@click.option("--push", is_flag=True, help="Use the residual-push approximation.")
@click.option("--epsilon", default=1e-6, show_default=True, help="Push residual threshold.")
@click.option("--tol", default=1e-10, show_default=True, help="Power-iteration L1 tolerance.")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
def ppr_cmd(graph_dir, alpha, k, push, epsilon, tol, out_dir):
    """Precompute the per-node top-K neighbor cache."""
    graph = load_graph(graph_dir)
    params = ppr.PprParams(alpha=alpha, tol=tol, epsilon=epsilon)
    cache = ppr.build_cache(graph, k, params, method="push" if push else "power")
    os.makedirs(out_dir, exist_ok=True)
    path = ppr.save_cache(cache, out_dir)
    click.echo(f"wrote {path} ({'push' if push else 'power'}, k={k}, alpha={alpha})")


@cli.command("embed")
@click.option("--graph", "graph_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--d", default=384, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--fields", default=None, help="Comma-separated text fields (default: all).")
@click.option("--lm", "lm_url", default=None, help="Embed via a service instead of hashing.")
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
def embed_cmd(graph_dir, d, seed, fields, lm_url, out_path):
    """Produce node base embeddings (hashed bag-of-words, or remote)."""
    graph = load_graph(graph_dir)
    use_fields = tuple(f.strip() for f in fields.split(",")) if fields else None
    texts = [graph.text_of(v, use_fields) for v in range(graph.n)]
    provider = _node_embedder(d, seed, lm_url)
    matrix = provider.embed(texts)
    embed_mod.save_embeddings(matrix, out_path)
    click.echo(f"wrote {out_path} ({matrix.n} x {matrix.d})")


@cli.command("train-gnn")
@click.option("--graph", "graph_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--embeddings", "emb_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--hidden", default=256, show_default=True)
@click.option("--layers", default=3, show_default=True)
@click.option("--epochs", default=200, show_default=True)
@click.option("--lr", default=0.05, show_default=True)
@click.option("--weight-decay", default=0.0, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
def train_gnn_cmd(graph_dir, emb_path, hidden, layers, epochs, lr, weight_decay, seed, out_dir):
    """Train the candidate-pruning network on the train split."""
    graph = load_graph(graph_dir)
    base = embed_mod.load_embeddings(emb_path)
    if graph.label_space is None:
        raise ValidationError("graph has no label space; ingest with a labels file")
    model = gnn.init_model(base.d, hidden, layers, graph.label_space.n_classes, seed)
    model, losses = gnn.train(
        model, graph, base, gnn.TrainConfig(lr=lr, epochs=epochs, weight_decay=weight_decay)
    )
    os.makedirs(out_dir, exist_ok=True)
    paths = ArtifactPaths(out_dir)
    gnn.save_model(model, paths.model)
    if os.path.abspath(emb_path) != os.path.abspath(paths.embeddings):
        shutil.copyfile(emb_path, paths.embeddings)
    click.echo(f"wrote {paths.model} (final loss {losses[-1]:.6f})" if losses else paths.model)


@cli.command("prototypes")
@click.option("--graph", "graph_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--model", "model_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--n", default=10, show_default=True, help="Prototypes per class.")
@click.option("--k", default=5, show_default=True, help="Neighbors per corpus document.")
@click.option("--i", default=3, show_default=True, help="Candidate labels per node.")
@click.option("--embed-seed", default=0, show_default=True)
@click.option("--lm", "lm_url", default=None, help="Embed corpus texts via a service.")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
def prototypes_cmd(graph_dir, model_dir, n, k, i, embed_seed, lm_url, out_dir):
    """Select prototypes, prune candidate labels, and build the corpus."""
    graph = load_graph(graph_dir)
    model_paths = ArtifactPaths(model_dir)
    out_paths = ArtifactPaths(out_dir)
    model = gnn.load_model(model_paths.model)
    base = embed_mod.load_embeddings(model_paths.embeddings)
    cache_path = out_paths.ppr_cache if os.path.exists(out_paths.ppr_cache) else model_paths.ppr_cache
    if not os.path.exists(cache_path):
        raise ValidationError(
            f"no ppr_cache.bin under {out_dir} or {model_dir}; run the ppr step first"
        )
    cache = ppr.PprCache.load(cache_path)
    preds = gnn.forward(model, graph, base)
    protos = gnn.select_prototypes(preds, n)
    cands = gnn.top_i_candidates(preds, i)
    corpus = gnn.build_prototype_corpus(protos, cache, graph, k)
    corpus.attach_embeddings(_node_embedder(base.d, embed_seed, lm_url))
    os.makedirs(out_dir, exist_ok=True)
    gnn.write_predictions(preds, cands, graph, out_paths.predictions)
    pipeline.save_prototypes(protos, out_paths.prototypes)
    corpus.save(out_paths.corpus, out_paths.corpus_emb)
    click.echo(f"wrote {len(corpus)} corpus documents to {out_dir}")


def _config_options(fn):
    decorators = [
        click.option(
            "--template",
            default="citation",
            show_default=True,
            type=click.Choice([kind.value for kind in TemplateKind]),
        ),
        click.option(
            "--mode",
            default="both",
            show_default=True,
            type=click.Choice(["ppr", "proto", "both"]),
        ),
        click.option("--i", default=3, show_default=True),
        click.option("--k", default=5, show_default=True),
        click.option("--k-sem", default=5, show_default=True),
        click.option("--d-out", default=128, show_default=True),
        click.option("--truncation", default=4096, show_default=True),
        click.option("--seed", default=0, show_default=True),
    ]
    for dec in reversed(decorators):
        fn = dec(fn)
    return fn


def _load_pipeline_inputs(graph_dir: str, artifacts_dir: str, config: RunConfig):
    graph = load_graph(graph_dir)
    paths = ArtifactPaths(artifacts_dir)
    cache = ppr.load_cache(artifacts_dir)
    base = embed_mod.load_embeddings(paths.embeddings)
    _, cands = pipeline.load_candidates_from_predictions(
        paths.predictions, graph, config.i_candidates
    )
    corpus = Corpus.load(paths.corpus, paths.corpus_emb)
    state = pipeline.init_or_load_retriever(paths.retriever, base.d, config)
    return graph, paths, cache, base, cands, corpus, state


@cli.command("emit-dataset")
@click.option("--graph", "graph_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--artifacts", "artifacts_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--split", default="train", show_default=True, type=click.Choice(["train", "valid", "test"]))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@_config_options
def emit_dataset_cmd(graph_dir, artifacts_dir, split, out_path, template, mode, i, k, k_sem, d_out, truncation, seed):
    """Render one instruction-tuning example per node in a split."""
    config = RunConfig(
        template=TemplateKind.from_string(template),
        retrieval_mode=mode,
        i_candidates=i,
        k=k,
        k_sem=k_sem,
        d_out=d_out,
        truncation_limit=truncation,
        seed=seed,
    )
    graph, _, cache, base, cands, corpus, state = _load_pipeline_inputs(
        graph_dir, artifacts_dir, config
    )
    count = pipeline.emit_dataset(
        graph, config, cache, corpus, cands, base, state, split, out_path
    )
    click.echo(f"wrote {count} examples to {out_path}")


@cli.command("train-retriever")
@click.option("--artifacts", "artifacts_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--graph", "graph_dir", default=None, type=click.Path(exists=True, file_okay=False),
              help="Graph cache directory (default: the artifacts directory).")
@click.option("--lm", "lm_value", default="toy", show_default=True, help="'toy' or a service URL.")
@click.option("--m", default=8, show_default=True)
@click.option("--lr", default=1e-5, show_default=True, help="Retriever learning rate.")
@click.option("--lm-lr", default=1e-4, show_default=True, help="LM learning rate per step.")
@click.option("--epochs", default=1, show_default=True)
@click.option("--temperature", default=1.0, show_default=True)
@click.option("--score-before-update", is_flag=True,
              help="Score the feedback distribution before the LM update instead of after.")
@_config_options
def train_retriever_cmd(artifacts_dir, graph_dir, lm_value, m, lr, lm_lr, epochs, temperature,
                        score_before_update, template, mode, i, k, k_sem, d_out, truncation, seed):
    """Run the joint LM/retriever training loop over the train split."""
    config = RunConfig(
        template=TemplateKind.from_string(template),
        retrieval_mode=mode,
        i_candidates=i,
        k=k,
        k_sem=k_sem,
        d_out=d_out,
        truncation_limit=truncation,
        seed=seed,
        m=m,
        retriever_lr=lr,
        lm_lr=lm_lr,
        epochs=epochs,
        lm_temperature=temperature,
        score_before_update=score_before_update,
    )
    graph, paths, cache, base, cands, corpus, state = _load_pipeline_inputs(
        graph_dir or artifacts_dir, artifacts_dir, config
    )
    lm = _resolve_lm(lm_value)
    state, traces = pipeline.train_loop(
        graph, config, cache, corpus, cands, base, state, lm
    )
    save_retriever(state, paths.retriever)
    with open(paths.trace, "w", encoding="utf-8") as fh:
        json.dump(traces, fh, sort_keys=True)
    kl = traces["kl_loss"]
    click.echo(
        f"wrote {paths.retriever} ({len(kl)} steps, "
        f"mean KL {float(np.mean(kl)):.6f})" if kl else f"wrote {paths.retriever}"
    )


@cli.command("evaluate")
@click.option("--artifacts", "artifacts_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--graph", "graph_dir", default=None, type=click.Path(exists=True, file_okay=False),
              help="Graph cache directory (default: the artifacts directory).")
@click.option("--lm", "lm_value", default="toy", show_default=True)
@click.option("--split", default="test", show_default=True, type=click.Choice(["train", "valid", "test"]))
@click.option("--free-form", is_flag=True, help="Unconstrained generation (service backends).")
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@_config_options
def evaluate_cmd(artifacts_dir, graph_dir, lm_value, split, free_form, out_path,
                 template, mode, i, k, k_sem, d_out, truncation, seed):
    """Exact-match evaluation of generated labels on a split."""
    config = RunConfig(
        template=TemplateKind.from_string(template),
        retrieval_mode=mode,
        i_candidates=i,
        k=k,
        k_sem=k_sem,
        d_out=d_out,
        truncation_limit=truncation,
        seed=seed,
        free_form_eval=free_form,
    )
    graph, _, cache, base, cands, corpus, state = _load_pipeline_inputs(
        graph_dir or artifacts_dir, artifacts_dir, config
    )
    lm = _resolve_lm(lm_value)
    report = pipeline.evaluate(graph, config, cache, corpus, cands, base, state, lm, split)
    pipeline.write_report(report, out_path)
    click.echo(f"{split} accuracy {report.accuracy:.4f} over {report.n_evaluated} nodes")


@cli.command("joint")
@click.option("--inputs", "inputs", multiple=True, required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="Emitted dataset files; pass several after one flag or repeat the flag.")
@click.option("--seed", default=0, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
def joint_cmd(inputs, seed, out_path):
    """Shuffle several emitted datasets into one joint dataset."""
    count = pipeline.mix_joint(list(inputs), seed, out_path)
    click.echo(f"wrote {count} examples to {out_path}")


def _expand_inputs_flag(argv: list[str]) -> list[str]:
    """Allow `--inputs F1 F2 F3` by rewriting it to repeated flags."""
    out: list[str] = []
    idx = 0
    while idx < len(argv):
        token = argv[idx]
        out.append(token)
        idx += 1
        if token == "--inputs":
            if idx < len(argv):
                out.append(argv[idx])
                idx += 1
            while idx < len(argv) and not argv[idx].startswith("--"):
                out.extend(["--inputs", argv[idx]])
                idx += 1
    return out


def main(argv: list[str] | None = None) -> int:
    args = list(sys.argv[1:] if argv is None else argv)
    args = _expand_inputs_flag(args)
    try:
        cli.main(args=args, standalone_mode=False)
    except click.ClickException as exc:
        exc.show()
        return 1
    except click.Abort:
        click.echo("aborted", err=True)
        return 1
    except ValidationError as exc:
        click.echo(f"error: {exc}", err=True)
        return 1
    except AuglmError as exc:
        click.echo(f"error: {exc}", err=True)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        click.echo(f"unexpected error: {exc}", err=True)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
