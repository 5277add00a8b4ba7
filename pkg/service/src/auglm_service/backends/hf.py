"""Pretrained sequence-to-sequence backend (e.g. flan-t5-small).

Imports transformers and sentence-transformers lazily so the rest of the
package works without them installed. Model names come from the config;
weights load from the local cache or the hub.
"""

from __future__ import annotations

import math

import torch

from ..config import ServiceConfig
from .base import LmBackend

# Forward/encode chunk size, independent of the request-level batch cap.
CHUNK = 16


class HfBackend(LmBackend):
    def __init__(self, config: ServiceConfig):
        from sentence_transformers import SentenceTransformer
        from transformers import AutoModelForSeq2SeqLM, AutoTokenizer

        lm_name = config.lm_model.removeprefix("hf:")
        self.device = torch.device(config.device)
        self.tokenizer = AutoTokenizer.from_pretrained(lm_name)
        self.model = AutoModelForSeq2SeqLM.from_pretrained(lm_name).to(self.device)
        self.optimizer = torch.optim.AdamW(self.model.parameters(), lr=1e-4)
        self.encoder = SentenceTransformer(config.embed_model, device=config.device)
        self.embed_dim = int(self.encoder.get_sentence_embedding_dimension())
        self.name = lm_name

    def embed(self, texts: list[str]) -> list[list[float]]:
        rows: list[list[float]] = []
        for start in range(0, len(texts), CHUNK):
            chunk = texts[start : start + CHUNK]
            vecs = self.encoder.encode(chunk, convert_to_numpy=True, show_progress_bar=False)
            rows.extend(v.astype(float).tolist() for v in vecs)
        return rows

    def _log_likelihoods(
        self, pairs: list[tuple[str, str]]
    ) -> list[tuple[torch.Tensor, int]]:
        inputs = self.tokenizer(
            [i for i, _ in pairs], return_tensors="pt", padding=True, truncation=True
        ).to(self.device)
        targets = self.tokenizer(
            [t for _, t in pairs], return_tensors="pt", padding=True
        ).to(self.device)
        labels = targets.input_ids.masked_fill(
            targets.input_ids == self.tokenizer.pad_token_id, -100
        )
        logits = self.model(
            input_ids=inputs.input_ids, attention_mask=inputs.attention_mask, labels=labels
        ).logits
        log_probs = torch.log_softmax(logits, dim=-1)
        out: list[tuple[torch.Tensor, int]] = []
        for row in range(len(pairs)):
            keep = labels[row] != -100
            token_ids = targets.input_ids[row][keep]
            positions = keep.nonzero(as_tuple=True)[0]
            ll = log_probs[row, positions, token_ids].sum()
            out.append((ll, int(keep.sum().item())))
        return out

    def score(self, pairs: list[tuple[str, str]]) -> list[tuple[float, int]]:
        if not pairs:
            return []
        self.model.eval()
        out: list[tuple[float, int]] = []
        with torch.no_grad():
            for start in range(0, len(pairs), CHUNK):
                scored = self._log_likelihoods(pairs[start : start + CHUNK])
                out.extend((float(ll.item()), n) for ll, n in scored)
        return out

    def generate(
        self, input_text: str, candidates: list[str] | None, max_new_tokens: int
    ) -> str:
        if candidates is not None:
            return self.pick_candidate(input_text, candidates)
        self.model.eval()
        encoded = self.tokenizer(
            [input_text], return_tensors="pt", truncation=True
        ).to(self.device)
        with torch.no_grad():
            generated = self.model.generate(
                input_ids=encoded.input_ids,
                attention_mask=encoded.attention_mask,
                max_new_tokens=max_new_tokens,
                do_sample=False,
                num_beams=1,
            )
        return self.tokenizer.decode(generated[0], skip_special_tokens=True)

    def train_step(self, pairs: list[tuple[str, str]], lr: float) -> float:
        self.model.train()
        scored = self._log_likelihoods(pairs)
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
