"""Language-model backends: the deterministic offline toy scorer and the
HTTP client for a model service.

Both expose the same small surface: score (natural-log likelihood of a
target given an input, with the target's token count), generate (optionally
constrained to a candidate list), and train_step (average token-wise negative
log-likelihood; a no-op update for the parameter-free toy model). Length-
normalized log-likelihood, log_likelihood / n_target_tokens, is the
comparison quantity everywhere so that label texts of different lengths
compete fairly.

The wire protocol spoken by the remote client (version "auglm/1"):

    POST /v1/embed      {"texts": [str]}                    -> {"dim": int, "embeddings": [[float]]}
    POST /v1/score      {"pairs": [{"input", "target"}]}    -> {"scores": [{"log_likelihood", "n_target_tokens"}]}
    POST /v1/generate   {"input", "candidates"|null, "max_new_tokens"} -> {"text": str}
    POST /v1/train_step {"pairs": [...], "lr": float}       -> {"loss": float}
    GET  /v1/info                                           -> {"protocol": "auglm/1", "model": str, "embed_dim": int}

Errors are {"error": str} with a non-2xx status.
"""

from __future__ import annotations

import hashlib
import json
import math
import time
from abc import ABC, abstractmethod
from collections import Counter
from dataclasses import dataclass

import numpy as np
import requests

from .embed import EmbeddingMatrix
from .errors import (
    LmProtocolError,
    LmServiceError,
    LmTransportError,
    ValidationError,
)

__all__ = [
    "LmScore",
    "LmInterface",
    "ToyLm",
    "RemoteLm",
    "PROTOCOL_VERSION",
]

PROTOCOL_VERSION = "auglm/1"
_FINGERPRINT_PROBE = ("fingerprint probe input", "fingerprint probe target")


@dataclass(frozen=True)
class LmScore:
    log_likelihood: float
    n_target_tokens: int

    @property
    def normalized(self) -> float:
        return self.log_likelihood / max(self.n_target_tokens, 1)


class LmInterface(ABC):
    """Scoring, generation, and one-step training behind one contract."""

    @abstractmethod
    def score(self, input_text: str, target_text: str) -> LmScore: ...

    @abstractmethod
    def generate(
        self, input_text: str, candidates: list[str] | None = None, max_new_tokens: int = 32
    ) -> str: ...

    @abstractmethod
    def train_step(self, input_text: str, target_text: str, lr: float | None = None) -> float: ...

    def score_batch(self, pairs: list[tuple[str, str]]) -> list[LmScore]:
        return [self.score(i, t) for i, t in pairs]

    def train_step_batch(self, pairs: list[tuple[str, str]], lr: float | None = None) -> float:
        losses = [self.train_step(i, t, lr) for i, t in pairs]
        return float(sum(losses) / len(losses)) if losses else 0.0

    def fingerprint(self) -> str:
        """Behavioral hash: the score of a fixed probe pair.

        Deterministic scoring makes this a fingerprint of the model state;
        any weight change that affects the probe changes the digest.
        """
        s = self.score(*_FINGERPRINT_PROBE)
        payload = json.dumps([s.log_likelihood, s.n_target_tokens]).encode()
        return hashlib.blake2b(payload, digest_size=16).hexdigest()


def _tokens(text: str) -> list[str]:
    return text.lower().split()


class ToyLm(LmInterface):
    """Additively smoothed unigram overlap scorer; stateless and pure.

    The probability of each target token w given the input is
    (count(w in input) + 1) / (len(input tokens) + V) with V the number of
    distinct tokens in input union target. No parameters exist, so
    train_step only reports the loss.
    """

    def score(self, input_text: str, target_text: str) -> LmScore:
        tgt = _tokens(target_text)
        if not tgt:
            return LmScore(log_likelihood=0.0, n_target_tokens=0)
        inp = _tokens(input_text)
        counts = Counter(inp)
        v = len(set(inp) | set(tgt))
        denom = len(inp) + v
        ll = sum(math.log((counts[w] + 1) / denom) for w in tgt)
        return LmScore(log_likelihood=ll, n_target_tokens=len(tgt))

    def generate(
        self, input_text: str, candidates: list[str] | None = None, max_new_tokens: int = 32
    ) -> str:
        if not candidates:
            raise ValidationError("the toy model only generates from a candidate list")
        best = candidates[0]
        best_score = self.score(input_text, best).normalized
        for cand in candidates[1:]:
            s = self.score(input_text, cand).normalized
            if s > best_score:
                best, best_score = cand, s
        return best

    def train_step(self, input_text: str, target_text: str, lr: float | None = None) -> float:
        s = self.score(input_text, target_text)
        return -s.log_likelihood / s.n_target_tokens if s.n_target_tokens else 0.0


class RemoteLm(LmInterface):
    """Client for a service speaking the auglm/1 protocol.

    Transport failures are retried with exponential backoff, then surfaced
    as LmTransportError. Service-reported errors and protocol violations
    raise LmServiceError / LmProtocolError respectively. Scoring and
    training requests are batched into single calls.
    """

    def __init__(
        self,
        endpoint: str,
        timeout: float = 60.0,
        retries: int = 3,
        backoff: float = 0.5,
    ):
        self.endpoint = endpoint.rstrip("/")
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff
        self._session = requests.Session()
        self._dim: int | None = None

    def _request(self, method: str, path: str, payload: dict | None = None) -> dict:
        url = f"{self.endpoint}{path}"
        last_exc: Exception | None = None
        for attempt in range(self.retries + 1):
            try:
                if method == "GET":
                    resp = self._session.get(url, timeout=self.timeout)
                else:
                    resp = self._session.post(url, json=payload, timeout=self.timeout)
            except (requests.ConnectionError, requests.Timeout) as exc:
                last_exc = exc
                if attempt < self.retries:
                    time.sleep(self.backoff * (2**attempt))
                continue
            if not resp.ok:
                try:
                    message = resp.json().get("error", resp.text)
                except ValueError:
                    message = resp.text
                raise LmServiceError(f"{method} {path} -> {resp.status_code}: {message}")
            try:
                body = resp.json()
            except ValueError as exc:
                raise LmProtocolError(f"{method} {path}: response is not JSON") from exc
            if not isinstance(body, dict):
                raise LmProtocolError(f"{method} {path}: expected a JSON object")
            return body
        raise LmTransportError(
            f"{method} {path} unreachable after {self.retries + 1} attempts: {last_exc}"
        )

    def info(self) -> dict:
        body = self._request("GET", "/v1/info")
        if body.get("protocol") != PROTOCOL_VERSION:
            raise LmProtocolError(
                f"service speaks {body.get('protocol')!r}, expected {PROTOCOL_VERSION!r}"
            )
        return body

    @property
    def dim(self) -> int:
        if self._dim is None:
            info = self.info()
            dim = info.get("embed_dim")
            if not isinstance(dim, int) or dim < 1:
                raise LmProtocolError(f"bad embed_dim in /v1/info: {dim!r}")
            self._dim = dim
        return self._dim

    def embed(self, texts: list[str]) -> EmbeddingMatrix:
        body = self._request("POST", "/v1/embed", {"texts": list(texts)})
        rows = body.get("embeddings")
        dim = body.get("dim")
        if not isinstance(dim, int) or not isinstance(rows, list) or len(rows) != len(texts):
            raise LmProtocolError("/v1/embed: malformed response")
        values = np.asarray(rows, dtype=np.float64)
        if values.ndim != 2 or values.shape != (len(texts), dim):
            raise LmProtocolError(
                f"/v1/embed: got shape {values.shape}, expected ({len(texts)}, {dim})"
            )
        self._dim = dim
        return EmbeddingMatrix(values.astype(np.float32))

    def score_batch(self, pairs: list[tuple[str, str]]) -> list[LmScore]:
        payload = {"pairs": [{"input": i, "target": t} for i, t in pairs]}
        body = self._request("POST", "/v1/score", payload)
        scores = body.get("scores")
        if not isinstance(scores, list) or len(scores) != len(pairs):
            raise LmProtocolError(
                f"/v1/score: expected {len(pairs)} scores, got "
                f"{len(scores) if isinstance(scores, list) else type(scores).__name__}"
            )
        out = []
        for rec in scores:
            try:
                out.append(
                    LmScore(
                        log_likelihood=float(rec["log_likelihood"]),
                        n_target_tokens=int(rec["n_target_tokens"]),
                    )
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise LmProtocolError(f"/v1/score: malformed score record {rec!r}") from exc
        return out

    def score(self, input_text: str, target_text: str) -> LmScore:
        return self.score_batch([(input_text, target_text)])[0]

    def generate(
        self, input_text: str, candidates: list[str] | None = None, max_new_tokens: int = 32
    ) -> str:
        payload = {
            "input": input_text,
            "candidates": list(candidates) if candidates is not None else None,
            "max_new_tokens": max_new_tokens,
        }
        body = self._request("POST", "/v1/generate", payload)
        text = body.get("text")
        if not isinstance(text, str):
            raise LmProtocolError("/v1/generate: missing 'text'")
        if candidates is not None and text not in candidates:
            raise LmProtocolError(
                f"/v1/generate: returned text {text!r} is not one of the candidates"
            )
        return text

    def train_step_batch(self, pairs: list[tuple[str, str]], lr: float | None = None) -> float:
        payload = {
            "pairs": [{"input": i, "target": t} for i, t in pairs],
            "lr": lr if lr is not None else 1e-4,
        }
        body = self._request("POST", "/v1/train_step", payload)
        loss = body.get("loss")
        if not isinstance(loss, (int, float)):
            raise LmProtocolError("/v1/train_step: missing 'loss'")
        return float(loss)

    def train_step(self, input_text: str, target_text: str, lr: float | None = None) -> float:
        return self.train_step_batch([(input_text, target_text)], lr)
