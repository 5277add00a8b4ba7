"""Backend registry: model-spec strings to loaded backends."""

from __future__ import annotations

from ..config import ServiceConfig
from .base import LmBackend

__all__ = ["LmBackend", "load_backend"]


def load_backend(config: ServiceConfig) -> LmBackend:
    if config.lm_model == "tiny" or config.lm_model.startswith("tiny-"):
        from .tiny import TinyBackend

        return TinyBackend(config)
    if config.lm_model.startswith("hf:"):
        from .hf import HfBackend

        return HfBackend(config)
    raise ValueError(f"no backend for model spec {config.lm_model!r}")
