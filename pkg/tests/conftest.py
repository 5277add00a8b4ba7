"""Shared fixtures and independent oracles used across the test suite."""

from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np
import pytest

from auglm.graph import SPLIT_NAMES, LabelSpace, TextAttributedGraph


def build_graph(
    n: int,
    edges: list[tuple[int, int]],
    *,
    labels: list[int] | None = None,
    classes: tuple[str, ...] | None = None,
    splits: list[int] | None = None,
    texts: list[dict[str, str]] | None = None,
    text_fields: tuple[str, ...] = ("title", "abstract"),
) -> TextAttributedGraph:
    """Construct a graph in memory from an undirected edge list.

    Self-loops and duplicate pairs are dropped, mirroring ingestion.
    """
    pairs = {(min(u, v), max(u, v)) for u, v in edges if u != v}
    heads: list[int] = []
    tails: list[int] = []
    for u, v in pairs:
        heads.extend((u, v))
        tails.extend((v, u))
    offsets = np.zeros(n + 1, dtype=np.int64)
    targets = np.zeros(len(heads), dtype=np.int64)
    if heads:
        h = np.asarray(heads)
        t = np.asarray(tails)
        order = np.lexsort((t, h))
        h, t = h[order], t[order]
        counts = np.zeros(n, dtype=np.int64)
        np.add.at(counts, h, 1)
        offsets[1:] = np.cumsum(counts)
        targets = t.astype(np.int64)
    if texts is None:
        texts = [{"title": f"node {i}", "abstract": f"text of node {i}"} for i in range(n)]
    if classes is None:
        classes = ("alpha", "beta", "gamma")
    if labels is None:
        labels = [i % len(classes) for i in range(n)]
    if splits is None:
        splits = [0] * n
    return TextAttributedGraph(
        n=n,
        csr_offsets=offsets,
        csr_targets=targets,
        node_texts=texts,
        labels=np.asarray(labels, dtype=np.int64),
        split=np.asarray(splits, dtype=np.int8),
        ids=[f"id{i}" for i in range(n)],
        label_space=LabelSpace(classes),
        text_fields=text_fields,
    )


def random_connected_edges(rng: np.random.Generator, n: int) -> list[tuple[int, int]]:
    """Random spanning tree plus extra edges; connected by construction."""
    edges = []
    for v in range(1, n):
        edges.append((int(rng.integers(0, v)), v))
    extra = int(rng.integers(0, max(1, n)))
    for _ in range(extra):
        u = int(rng.integers(0, n))
        v = int(rng.integers(0, n))
        if u != v:
            edges.append((min(u, v), max(u, v)))
    return edges


def dense_ppr(graph: TextAttributedGraph, source: int, alpha: float) -> np.ndarray:
    """Independent oracle: solve (I - (1 - alpha) * A_hat) r = alpha * q directly.

    A_hat is the column-normalized adjacency; degree-zero columns get a
    self-loop so every column remains stochastic.
    """
    n = graph.n
    a_hat = np.zeros((n, n))
    for v in range(n):
        nbrs = graph.neighbors(v)
        if len(nbrs) == 0:
            a_hat[v, v] = 1.0
        else:
            a_hat[nbrs, v] = 1.0 / len(nbrs)
    q = np.zeros(n)
    q[source] = 1.0
    return np.linalg.solve(np.eye(n) - (1.0 - alpha) * a_hat, alpha * q)


def dense_ppr_of(graph: TextAttributedGraph, dist: np.ndarray, alpha: float) -> np.ndarray:
    """Dense solve for an arbitrary (non-negative) teleport distribution."""
    n = graph.n
    a_hat = np.zeros((n, n))
    for v in range(n):
        nbrs = graph.neighbors(v)
        if len(nbrs) == 0:
            a_hat[v, v] = 1.0
        else:
            a_hat[nbrs, v] = 1.0 / len(nbrs)
    return np.linalg.solve(np.eye(n) - (1.0 - alpha) * a_hat, alpha * dist)


def write_graph_files(
    root: Path,
    nodes: list[dict],
    edges: list[dict],
    classes: list[str],
    labels: list[dict],
) -> tuple[Path, Path, Path]:
    """Write the three ingestion input files and return their paths.

    Node records carry {"id", "text", "split"}; the labels file starts with
    a {"classes": [...]} header followed by {"id", "label"} records.
    """
    nodes_path = root / "nodes.jsonl"
    edges_path = root / "edges.jsonl"
    labels_path = root / "labels.jsonl"
    with open(nodes_path, "w", encoding="utf-8") as fh:
        for rec in nodes:
            fh.write(json.dumps(rec) + "\n")
    with open(edges_path, "w", encoding="utf-8") as fh:
        for rec in edges:
            fh.write(json.dumps(rec) + "\n")
    with open(labels_path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"classes": classes}) + "\n")
        for rec in labels:
            fh.write(json.dumps(rec) + "\n")
    return nodes_path, edges_path, labels_path


def synthetic_classification_graph(
    n: int,
    n_classes: int,
    seed: int,
    *,
    intra: int = 4,
    inter: int = 1,
    n_test: int | None = None,
) -> TextAttributedGraph:
    """Synthetic task: class-correlated texts and mostly intra-class edges.

    Titles and abstracts repeat class keywords so that both the hash
    embeddings and the toy language model can separate the classes.
    """
    rng = np.random.default_rng(seed)
    words = [f"topic{c}" for c in range(n_classes)]
    labels = [i % n_classes for i in range(n)]
    texts = []
    for i, c in enumerate(labels):
        w = words[c]
        texts.append(
            {
                "title": f"{w} study {i}",
                "abstract": f"this paper is about {w} and more {w} methods for {w}",
            }
        )
    edges: list[tuple[int, int]] = []
    by_class: dict[int, list[int]] = {c: [] for c in range(n_classes)}
    for i, c in enumerate(labels):
        by_class[c].append(i)
    for i, c in enumerate(labels):
        own = by_class[c]
        for _ in range(intra):
            j = int(own[rng.integers(0, len(own))])
            if j != i:
                edges.append((i, j))
        for _ in range(inter):
            j = int(rng.integers(0, n))
            if j != i:
                edges.append((i, j))
    if n_test is None:
        n_test = max(n // 5, n_classes)
    splits = [0] * n
    test_ids = rng.permutation(n)[:n_test]
    for t in test_ids:
        splits[int(t)] = 2
    classes = tuple(f"class {words[c]}" for c in range(n_classes))
    return build_graph(
        n,
        edges,
        labels=labels,
        classes=classes,
        splits=splits,
        texts=texts,
    )


@pytest.fixture()
def k2_graph() -> TextAttributedGraph:
    return build_graph(2, [(0, 1)], classes=("alpha", "beta"), labels=[0, 1])


@pytest.fixture()
def clean_lm_env(monkeypatch):
    """Remove the endpoint override so --lm flags resolve as written."""
    monkeypatch.delenv("AUGLM_LM_ENDPOINT", raising=False)


@pytest.fixture()
def small_graph() -> TextAttributedGraph:
    edges = [(0, 1), (1, 2), (2, 3), (3, 0), (1, 3), (4, 5)]
    return build_graph(
        7,
        edges,
        labels=[0, 1, 2, 0, 1, 2, 0],
        splits=[0, 0, 0, 1, 0, 2, 0],
    )


def assert_same_bytes(a: Path, b: Path) -> None:
    assert a.read_bytes() == b.read_bytes(), f"{a} and {b} differ"


def file_sha(path: Path | str) -> str:
    import hashlib

    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


collect_ignore_glob: list[str] = []
if os.environ.get("AUGLM_SKIP_SLOW"):
    collect_ignore_glob.append("test_acceptance.py")
