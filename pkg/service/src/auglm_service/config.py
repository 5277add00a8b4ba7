"""Service configuration and model-spec parsing."""

from __future__ import annotations

from dataclasses import dataclass

PROTOCOL_VERSION = "auglm/1"

DEFAULT_HF_EMBEDDER = "sentence-transformers/all-MiniLM-L6-v2"


@dataclass(frozen=True)
class ServiceConfig:
    """Everything the server needs besides the models themselves.

    lr_min/lr_max bound the per-request learning rate of /v1/train_step;
    requests outside the range are rejected rather than clamped so a
    misconfigured client fails loudly. max_batch caps the number of texts
    or pairs in a single request.
    """

    lm_model: str = "tiny"
    embed_model: str = "hash-384"
    device: str = "cpu"
    max_batch: int = 256
    lr_min: float = 1e-7
    lr_max: float = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.max_batch < 1:
            raise ValueError(f"max_batch must be >= 1, got {self.max_batch}")
        if not 0 < self.lr_min <= self.lr_max:
            raise ValueError(f"need 0 < lr_min <= lr_max, got [{self.lr_min}, {self.lr_max}]")


def parse_models_spec(spec: str) -> tuple[str, str]:
    """Turn a --models flag value into (lm_model, embed_model).

    "tiny"                      -> from-scratch byte model + hashing embedder
    "tiny-64x1"                 -> same with a 64-wide single-layer recurrence
    "tiny,hash-512"             -> default size, 512-wide embedder
    "hf:google/flan-t5-small"   -> pretrained LM + default sentence embedder
    "hf:NAME,EMBEDDER"          -> both named explicitly
    """
    spec = spec.strip()
    if not spec:
        raise ValueError("empty --models spec")
    lm_part, _, embed_part = spec.partition(",")
    lm_part = lm_part.strip()
    embed_part = embed_part.strip()
    if lm_part == "tiny" or lm_part.startswith("tiny-"):
        return lm_part, embed_part or "hash-384"
    if lm_part.startswith("hf:"):
        name = lm_part[3:].strip()
        if not name:
            raise ValueError("hf: spec needs a model name, e.g. hf:google/flan-t5-small")
        return lm_part, embed_part or DEFAULT_HF_EMBEDDER
    raise ValueError(f"unknown model spec {spec!r}; expected 'tiny' or 'hf:<model-name>'")
