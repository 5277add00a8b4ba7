"""HTTP model server speaking the auglm/1 protocol.

Endpoints (all bodies UTF-8 JSON; errors are {"error": str} with a
non-2xx status):

    GET  /v1/info        -> {"protocol": "auglm/1", "model": str, "embed_dim": int}
    POST /v1/embed       {"texts": [str]}                 -> {"dim": int, "embeddings": [[float]]}
    POST /v1/score       {"pairs": [{"input", "target"}]} -> {"scores": [{"log_likelihood", "n_target_tokens"}]}
    POST /v1/generate    {"input", "candidates"|null, "max_new_tokens"} -> {"text": str}
    POST /v1/train_step  {"pairs": [...], "lr": float}    -> {"loss": float}

Two backends: "tiny", a self-contained byte-level model that trains from
scratch (no downloads), and "hf:<model>", which serves pretrained
sequence-to-sequence models through the same protocol.
"""

from .app import create_app
from .config import ServiceConfig, parse_models_spec

__all__ = ["create_app", "ServiceConfig", "parse_models_spec"]

__version__ = "0.1.0"
