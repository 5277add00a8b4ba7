"""Backend contract shared by the tiny and pretrained model servers."""

from __future__ import annotations

from abc import ABC, abstractmethod


class LmBackend(ABC):
    """Model operations behind the HTTP layer.

    Implementations return plain Python types ready for JSON encoding.
    score log-likelihoods are natural-log sums over target tokens; the
    token count is reported alongside so clients can length-normalize.
    """

    name: str
    embed_dim: int

    @abstractmethod
    def embed(self, texts: list[str]) -> list[list[float]]:
        """One embedding row per text, each of width embed_dim."""

    @abstractmethod
    def score(self, pairs: list[tuple[str, str]]) -> list[tuple[float, int]]:
        """(log_likelihood, n_target_tokens) per (input, target) pair."""

    @abstractmethod
    def generate(
        self, input_text: str, candidates: list[str] | None, max_new_tokens: int
    ) -> str:
        """Greedy decode; with candidates, return the best-scoring one."""

    @abstractmethod
    def train_step(self, pairs: list[tuple[str, str]], lr: float) -> float:
        """One optimizer step; returns the pre-step mean token-level NLL."""

    def pick_candidate(self, input_text: str, candidates: list[str]) -> str:
        """Length-normalized argmax over candidate scores, first on ties."""
        scores = self.score([(input_text, c) for c in candidates])
        best_idx = 0
        best = scores[0][0] / max(scores[0][1], 1)
        for idx, (ll, n) in enumerate(scores[1:], start=1):
            value = ll / max(n, 1)
            if value > best:
                best_idx, best = idx, value
        return candidates[best_idx]
