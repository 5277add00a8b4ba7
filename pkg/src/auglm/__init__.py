"""Instruction-tuning data generation and retriever training for
text-attributed graphs.

The pipeline: relevance-ranked neighborhoods via Personalized PageRank, a
mean-aggregation graph network for confidence estimates and candidate-label
pruning, a prototype corpus for semantic retrieval, bit-exact prompt
rendering, and a dual-encoder retriever trained to match language-model
feedback under a KL objective.
"""

from ._kernels import BACKEND as KERNEL_BACKEND
from .errors import AuglmError, ValidationError
from .graph import TextAttributedGraph, ingest, load_graph, save_graph, stats

__version__ = "0.1.0"

__all__ = [
    "KERNEL_BACKEND",
    "AuglmError",
    "ValidationError",
    "TextAttributedGraph",
    "ingest",
    "load_graph",
    "save_graph",
    "stats",
    "__version__",
]
