"""Text-attributed graph: data model, JSONL ingestion, validation, statistics.

A graph is a set of nodes carrying named text fields, an undirected adjacency
stored in CSR form, optional class labels, and a train/valid/test split tag
per node. Input edges are symmetrized and deduplicated; self-loops are
dropped. Node ids in the input files are arbitrary strings; dense indices are
assigned in first-appearance order over the nodes file.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

__all__ = [
    "SPLIT_NAMES",
    "LabelSpace",
    "TextAttributedGraph",
    "GraphStats",
    "ingest",
    "stats",
    "degree",
    "save_graph",
    "load_graph",
]

SPLIT_NAMES = ("train", "valid", "test")
_SPLIT_CODE = {name: i for i, name in enumerate(SPLIT_NAMES)}

_META_FILE = "graph_meta.json"
_TEXTS_FILE = "graph_texts.json"
_OFFSETS_FILE = "graph_csr_offsets.npy"
_TARGETS_FILE = "graph_csr_targets.npy"
_LABELS_FILE = "graph_labels.npy"
_SPLITS_FILE = "graph_splits.npy"


@dataclass(frozen=True)
class LabelSpace:
    """Ordered class-label strings; index in the tuple is the class index."""

    index_to_label: tuple[str, ...]

    def __post_init__(self):
        if len(set(self.index_to_label)) != len(self.index_to_label):
            raise ValidationError("label strings must be unique")
        if any(not s for s in self.index_to_label):
            raise ValidationError("label strings must be non-empty")

    @property
    def n_classes(self) -> int:
        return len(self.index_to_label)

    def text(self, class_index: int) -> str:
        if not 0 <= class_index < len(self.index_to_label):
            raise ValidationError(
                f"class index {class_index} out of range [0, {len(self.index_to_label)})"
            )
        return self.index_to_label[class_index]


@dataclass
class TextAttributedGraph:
    """Immutable-by-convention graph container.

    Attributes
    ----------
    n : int
        Node count.
    csr_offsets : ndarray of int64, shape (n + 1,)
        Row pointer array; non-decreasing, csr_offsets[n] == len(csr_targets).
    csr_targets : ndarray of int64
        Neighbor indices, sorted ascending within each row.
    node_texts : list of dict
        Per-node map from field name (e.g. "title", "abstract") to text.
    labels : ndarray of int64, shape (n,)
        Class index per node, -1 where unlabeled.
    split : ndarray of int8, shape (n,)
        Split code per node; see SPLIT_NAMES.
    ids : list of str
        Original string id per dense index.
    label_space : LabelSpace or None
    text_fields : tuple of str
        Field names in first-appearance order.
    """

    n: int
    csr_offsets: np.ndarray
    csr_targets: np.ndarray
    node_texts: list[dict[str, str]]
    labels: np.ndarray
    split: np.ndarray
    ids: list[str]
    label_space: LabelSpace | None = None
    text_fields: tuple[str, ...] = ()
    id_to_index: dict[str, int] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not self.id_to_index:
            self.id_to_index = {s: i for i, s in enumerate(self.ids)}

    def neighbors(self, v: int) -> np.ndarray:
        return self.csr_targets[self.csr_offsets[v] : self.csr_offsets[v + 1]]

    def degree(self, v: int) -> int:
        return int(self.csr_offsets[v + 1] - self.csr_offsets[v])

    def text_of(self, v: int, fields: tuple[str, ...] | None = None, sep: str = "\n") -> str:
        """Join the node's text fields (missing fields render empty)."""
        use = fields if fields is not None else self.text_fields
        return sep.join(self.node_texts[v].get(f, "") for f in use)

    def title_of(self, v: int) -> str:
        return self.node_texts[v].get("title", "")

    def split_indices(self, split_name: str) -> np.ndarray:
        if split_name not in _SPLIT_CODE:
            raise ValidationError(f"unknown split {split_name!r}; expected one of {SPLIT_NAMES}")
        return np.nonzero(self.split == _SPLIT_CODE[split_name])[0]


@dataclass(frozen=True)
class GraphStats:
    n_nodes: int
    n_edges: int
    n_directed_entries: int
    n_classes: int
    split_sizes: dict[str, int]


def _iter_jsonl(path: str):
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise ValidationError(f"cannot open {path}: {exc}") from exc
    with fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"{path}:{lineno}: malformed JSON: {exc}") from exc
            if not isinstance(obj, dict):
                raise ValidationError(f"{path}:{lineno}: expected a JSON object")
            yield lineno, obj


def _read_nodes(nodes_path: str):
    ids: list[str] = []
    id_to_index: dict[str, int] = {}
    texts: list[dict[str, str]] = []
    split_codes: list[int] = []
    field_order: list[str] = []
    seen_fields: set[str] = set()
    for lineno, obj in _iter_jsonl(nodes_path):
        node_id = obj.get("id")
        if not isinstance(node_id, str):
            raise ValidationError(f"{nodes_path}:{lineno}: node 'id' must be a string")
        if node_id in id_to_index:
            raise ValidationError(f"{nodes_path}:{lineno}: duplicate node id {node_id!r}")
        split_name = obj.get("split")
        if split_name not in _SPLIT_CODE:
            raise ValidationError(
                f"{nodes_path}:{lineno}: 'split' must be one of {SPLIT_NAMES}, got {split_name!r}"
            )
        text = obj.get("text", {})
        if not isinstance(text, dict) or any(
            not isinstance(k, str) or not isinstance(v, str) for k, v in text.items()
        ):
            raise ValidationError(f"{nodes_path}:{lineno}: 'text' must map field names to strings")
        for fname in text:
            if fname not in seen_fields:
                seen_fields.add(fname)
                field_order.append(fname)
        id_to_index[node_id] = len(ids)
        ids.append(node_id)
        texts.append(dict(text))
        split_codes.append(_SPLIT_CODE[split_name])
    return ids, id_to_index, texts, split_codes, tuple(field_order)


def _read_edges(edges_path: str, id_to_index: dict[str, int]) -> np.ndarray:
    pairs: set[tuple[int, int]] = set()
    for lineno, obj in _iter_jsonl(edges_path):
        for key in ("src", "dst"):
            if key not in obj:
                raise ValidationError(f"{edges_path}:{lineno}: missing {key!r}")
        src, dst = obj["src"], obj["dst"]
        try:
            u = id_to_index[src]
            v = id_to_index[dst]
        except (KeyError, TypeError):
            bad = src if not isinstance(src, str) or src not in id_to_index else dst
            raise ValidationError(
                f"{edges_path}:{lineno}: edge endpoint {bad!r} is not a known node id"
            ) from None
        if u == v:
            continue
        pairs.add((u, v) if u < v else (v, u))
    if not pairs:
        return np.empty((0, 2), dtype=np.int64)
    return np.array(sorted(pairs), dtype=np.int64)


def _read_labels(labels_path: str, id_to_index: dict[str, int], n: int):
    labels = np.full(n, -1, dtype=np.int64)
    label_space: LabelSpace | None = None
    assigned: set[int] = set()
    for lineno, obj in _iter_jsonl(labels_path):
        if label_space is None:
            classes = obj.get("classes")
            if not isinstance(classes, list) or not all(isinstance(c, str) for c in classes):
                raise ValidationError(
                    f"{labels_path}:{lineno}: first line must be a header "
                    '{"classes": [string, ...]}'
                )
            label_space = LabelSpace(tuple(classes))
            continue
        node_id = obj.get("id")
        if not isinstance(node_id, str) or node_id not in id_to_index:
            raise ValidationError(f"{labels_path}:{lineno}: unknown node id {node_id!r}")
        label = obj.get("label")
        if not isinstance(label, int) or isinstance(label, bool):
            raise ValidationError(f"{labels_path}:{lineno}: 'label' must be an integer")
        if not 0 <= label < label_space.n_classes:
            raise ValidationError(
                f"{labels_path}:{lineno}: label {label} out of range "
                f"[0, {label_space.n_classes})"
            )
        idx = id_to_index[node_id]
        if idx in assigned:
            raise ValidationError(f"{labels_path}:{lineno}: duplicate label for node {node_id!r}")
        assigned.add(idx)
        labels[idx] = label
    if label_space is None:
        raise ValidationError(f"{labels_path}: empty labels file; a header line is required")
    return labels, label_space


def _build_csr(n: int, undirected_pairs: np.ndarray):
    """CSR from unique (u < v) pairs, both directions, rows sorted ascending."""
    if undirected_pairs.size == 0:
        return np.zeros(n + 1, dtype=np.int64), np.empty(0, dtype=np.int64)
    src = np.concatenate([undirected_pairs[:, 0], undirected_pairs[:, 1]])
    dst = np.concatenate([undirected_pairs[:, 1], undirected_pairs[:, 0]])
    order = np.lexsort((dst, src))
    src, dst = src[order], dst[order]
    offsets = np.zeros(n + 1, dtype=np.int64)
    np.add.at(offsets, src + 1, 1)
    np.cumsum(offsets, out=offsets)
    return offsets, dst.astype(np.int64, copy=False)


def ingest(nodes_path: str, edges_path: str, labels_path: str) -> TextAttributedGraph:
    """Read the three JSONL files and return a validated graph.

    Parameters
    ----------
    nodes_path : str
        JSONL, one object per line:
        {"id": str, "text": {field: str, ...}, "split": "train"|"valid"|"test"}.
    edges_path : str
        JSONL: {"src": str, "dst": str}. Edges are symmetrized, deduplicated,
        and self-loops dropped.
    labels_path : str
        JSONL whose first line is {"classes": [str, ...]} followed by
        {"id": str, "label": int} entries.

    Raises
    ------
    ValidationError
        On any malformed line (reported with its line number), unknown edge
        endpoint, duplicate node id, or out-of-range label.
    """
    ids, id_to_index, texts, split_codes, field_order = _read_nodes(nodes_path)
    n = len(ids)
    pairs = _read_edges(edges_path, id_to_index)
    labels, label_space = _read_labels(labels_path, id_to_index, n)
    offsets, targets = _build_csr(n, pairs)
    return TextAttributedGraph(
        n=n,
        csr_offsets=offsets,
        csr_targets=targets,
        node_texts=texts,
        labels=labels,
        split=np.array(split_codes, dtype=np.int8),
        ids=ids,
        label_space=label_space,
        text_fields=field_order,
        id_to_index=id_to_index,
    )


def stats(graph: TextAttributedGraph) -> GraphStats:
    """Node/edge/class counts and split sizes."""
    entries = int(graph.csr_targets.shape[0])
    sizes = {
        name: int(np.count_nonzero(graph.split == code)) for name, code in _SPLIT_CODE.items()
    }
    return GraphStats(
        n_nodes=graph.n,
        n_edges=entries // 2,
        n_directed_entries=entries,
        n_classes=graph.label_space.n_classes if graph.label_space else 0,
        split_sizes=sizes,
    )


def degree(graph: TextAttributedGraph, v: int) -> int:
    if not 0 <= v < graph.n:
        raise ValidationError(f"node index {v} out of range [0, {graph.n})")
    return graph.degree(v)


def save_graph(graph: TextAttributedGraph, out_dir: str) -> None:
    """Write the graph cache into a directory (deterministic bytes)."""
    os.makedirs(out_dir, exist_ok=True)
    np.save(os.path.join(out_dir, _OFFSETS_FILE), graph.csr_offsets)
    np.save(os.path.join(out_dir, _TARGETS_FILE), graph.csr_targets)
    np.save(os.path.join(out_dir, _LABELS_FILE), graph.labels)
    np.save(os.path.join(out_dir, _SPLITS_FILE), graph.split)
    meta = {
        "n": graph.n,
        "ids": graph.ids,
        "classes": list(graph.label_space.index_to_label) if graph.label_space else None,
        "text_fields": list(graph.text_fields),
    }
    with open(os.path.join(out_dir, _META_FILE), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, ensure_ascii=False, sort_keys=True)
    with open(os.path.join(out_dir, _TEXTS_FILE), "w", encoding="utf-8") as fh:
        json.dump(graph.node_texts, fh, ensure_ascii=False, sort_keys=True)


def load_graph(graph_dir: str) -> TextAttributedGraph:
    meta_path = os.path.join(graph_dir, _META_FILE)
    if not os.path.exists(meta_path):
        raise ValidationError(f"{graph_dir} does not contain a graph cache ({_META_FILE} missing)")
    with open(meta_path, encoding="utf-8") as fh:
        meta = json.load(fh)
    with open(os.path.join(graph_dir, _TEXTS_FILE), encoding="utf-8") as fh:
        texts = json.load(fh)
    offsets = np.load(os.path.join(graph_dir, _OFFSETS_FILE))
    targets = np.load(os.path.join(graph_dir, _TARGETS_FILE))
    labels = np.load(os.path.join(graph_dir, _LABELS_FILE))
    splits = np.load(os.path.join(graph_dir, _SPLITS_FILE))
    classes = meta.get("classes")
    return TextAttributedGraph(
        n=int(meta["n"]),
        csr_offsets=offsets,
        csr_targets=targets,
        node_texts=texts,
        labels=labels,
        split=splits,
        ids=list(meta["ids"]),
        label_space=LabelSpace(tuple(classes)) if classes is not None else None,
        text_fields=tuple(meta.get("text_fields", ())),
    )
