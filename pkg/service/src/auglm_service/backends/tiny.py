"""Self-contained byte-level backend that trains from scratch.

No pretrained weights and no downloads: the LM is a small GRU over UTF-8
bytes and the embedder is feature hashing over whitespace tokens. The
point is faithful protocol semantics (true token-level log-likelihoods,
real gradient steps) at desk scale, not language quality.
"""

from __future__ import annotations

import hashlib
import math

import numpy as np
import torch
from torch import nn

from ..config import ServiceConfig
from .base import LmBackend

BOS = 256
SEP = 257
EOS = 258
PAD = 259
VOCAB_SIZE = 260

# Inputs longer than this keep their trailing bytes; prompts put the
# question and candidate labels at the end, so the tail is what matters.
MAX_INPUT_BYTES = 1024


class ByteSeqModel(nn.Module):
    """Next-byte predictor: embedding -> GRU -> logits over the vocab."""

    def __init__(self, d_model: int, layers: int):
        super().__init__()
        self.embed = nn.Embedding(VOCAB_SIZE, d_model, padding_idx=PAD)
        self.rnn = nn.GRU(d_model, d_model, num_layers=layers, batch_first=True)
        self.out = nn.Linear(d_model, VOCAB_SIZE)

    def forward(self, tokens: torch.Tensor) -> torch.Tensor:
        hidden, _ = self.rnn(self.embed(tokens))
        return self.out(hidden)


class HashingEmbedder:
    """Signed feature hashing of lowercase whitespace tokens, L2-normalized.

    Deterministic across processes (blake2b, not the builtin hash) and
    order-independent, so equal bags of words embed identically.
    """

    def __init__(self, dim: int):
        if dim < 1:
            raise ValueError(f"embedding dim must be >= 1, got {dim}")
        self.dim = dim

    def embed_one(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dim, dtype=np.float64)
        for token in text.lower().split():
            digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
            index = int.from_bytes(digest[:4], "little") % self.dim
            sign = 1.0 if digest[4] & 1 else -1.0
            vec[index] += sign
        norm = float(np.linalg.norm(vec))
        return vec / norm if norm > 0.0 else vec

    def embed(self, texts: list[str]) -> list[list[float]]:
        return [self.embed_one(t).tolist() for t in texts]


def _embed_dim_from_name(name: str) -> int:
    if not name.startswith("hash-"):
        raise ValueError(f"tiny backend expects an embedder named hash-<dim>, got {name!r}")
    try:
        return int(name[5:])
    except ValueError as exc:
        raise ValueError(f"bad embedder spec {name!r}") from exc


def _parse_tiny_spec(name: str) -> tuple[int, int]:
    """Model width and depth from "tiny" or "tiny-<d_model>x<layers>"."""
    if name == "tiny":
        return 128, 2
    body = name.removeprefix("tiny-")
    width, sep, depth = body.partition("x")
    if name.startswith("tiny-") and sep:
        try:
            d_model, layers = int(width), int(depth)
        except ValueError:
            d_model, layers = 0, 0
        if d_model >= 1 and layers >= 1:
            return d_model, layers
    raise ValueError(f"bad tiny model spec {name!r}; expected tiny or tiny-<d>x<layers>")


def _encode_pair(input_text: str, target_text: str) -> tuple[list[int], int]:
    """Token sequence BOS input SEP target EOS, plus the target length.

    The end marker counts as a target token: the model must learn where
    the target stops, and its probability is part of the sequence
    likelihood.
    """
    input_bytes = input_text.encode("utf-8")[-MAX_INPUT_BYTES:]
    target_bytes = target_text.encode("utf-8")
    seq = [BOS, *input_bytes, SEP, *target_bytes, EOS]
    return seq, len(target_bytes) + 1


class TinyBackend(LmBackend):
    def __init__(self, config: ServiceConfig):
        d_model, layers = _parse_tiny_spec(config.lm_model)
        torch.manual_seed(config.seed)
        self.device = torch.device(config.device)
        self.model = ByteSeqModel(d_model, layers).to(self.device)
        self.optimizer = torch.optim.Adam(self.model.parameters(), lr=1e-4)
        self.embedder = HashingEmbedder(_embed_dim_from_name(config.embed_model))
        self.embed_dim = self.embedder.dim
        self.name = config.lm_model

    def embed(self, texts: list[str]) -> list[list[float]]:
        return self.embedder.embed(texts)

    def _batch_log_likelihoods(self, pairs: list[tuple[str, str]]) -> list[tuple[torch.Tensor, int]]:
        """Per-pair (summed target log-likelihood, n_target_tokens).

        Keeps the graph attached so train_step can backpropagate through
        the same path score uses; score wraps this in no_grad.
        """
        encoded = [_encode_pair(i, t) for i, t in pairs]
        max_len = max(len(seq) for seq, _ in encoded)
        tokens = torch.full((len(encoded), max_len), PAD, dtype=torch.long)
        for row, (seq, _) in enumerate(encoded):
            tokens[row, : len(seq)] = torch.tensor(seq, dtype=torch.long)
        logits = self.model(tokens.to(self.device))
        log_probs = torch.log_softmax(logits, dim=-1)
        out: list[tuple[torch.Tensor, int]] = []
        for row, (seq, n_target) in enumerate(encoded):
            # logits at position p predict token p+1; the target region is
            # the last n_target tokens of the sequence.
            start = len(seq) - n_target - 1
            positions = torch.arange(start, len(seq) - 1, device=self.device)
            next_tokens = torch.tensor(seq[start + 1 :], dtype=torch.long, device=self.device)
            ll = log_probs[row, positions, next_tokens].sum()
            out.append((ll, n_target))
        return out

    def score(self, pairs: list[tuple[str, str]]) -> list[tuple[float, int]]:
        if not pairs:
            return []
        self.model.eval()
        with torch.no_grad():
            scored = self._batch_log_likelihoods(pairs)
        return [(float(ll.item()), n) for ll, n in scored]

    def generate(
        self, input_text: str, candidates: list[str] | None, max_new_tokens: int
    ) -> str:
        if candidates is not None:
            return self.pick_candidate(input_text, candidates)
        self.model.eval()
        input_bytes = input_text.encode("utf-8")[-MAX_INPUT_BYTES:]
        prefix = torch.tensor([[BOS, *input_bytes, SEP]], dtype=torch.long, device=self.device)
        produced: list[int] = []
        with torch.no_grad():
            hidden_seq, state = self.model.rnn(self.model.embed(prefix))
            logits = self.model.out(hidden_seq[:, -1])
            for _ in range(max_new_tokens):
                token = int(logits.argmax(dim=-1).item())
                if token >= 256:
                    break
                produced.append(token)
                step = torch.tensor([[token]], dtype=torch.long, device=self.device)
                hidden_seq, state = self.model.rnn(self.model.embed(step), state)
                logits = self.model.out(hidden_seq[:, -1])
        return bytes(produced).decode("utf-8", errors="replace")

    def train_step(self, pairs: list[tuple[str, str]], lr: float) -> float:
        self.model.train()
        scored = self._batch_log_likelihoods(pairs)
        per_pair = torch.stack([-ll / max(n, 1) for ll, n in scored])
        loss = per_pair.mean()
        if not math.isfinite(float(loss.item())):
            raise RuntimeError("non-finite training loss")
        self.optimizer.zero_grad()
        loss.backward()
        for group in self.optimizer.param_groups:
            group["lr"] = lr
        self.optimizer.step()
        return float(loss.item())
