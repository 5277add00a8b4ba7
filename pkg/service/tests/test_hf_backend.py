"""Offline tests for the pretrained-model backend.

A randomly initialized byte-level seq2seq model saved to a local
directory stands in for downloaded weights, so the scoring, masking,
generation, and optimizer paths run for real without network access.
The sentence encoder is stubbed: its behavior belongs to an external
library, and the LM paths are what this module owns.
"""

from __future__ import annotations

import numpy as np
import pytest

transformers = pytest.importorskip("transformers")

import torch  # noqa: E402

from auglm_service import ServiceConfig  # noqa: E402
from auglm_service.backends.hf import CHUNK, HfBackend  # noqa: E402


class _StubEncoder:
    """Minimal sentence-encoder double with a fixed dimension."""

    DIM = 8

    def __init__(self, name: str, device: str | None = None):
        self.name = name

    def get_sentence_embedding_dimension(self) -> int:
        return self.DIM

    def encode(self, texts, convert_to_numpy=True, show_progress_bar=False):
        return np.stack(
            [np.full(self.DIM, fill_value=float(len(t) + 1)) for t in texts]
        )


@pytest.fixture(scope="module")
def model_dir(tmp_path_factory) -> str:
    from transformers import ByT5Tokenizer, T5Config, T5ForConditionalGeneration

    path = tmp_path_factory.mktemp("hf") / "random-byte-t5"
    torch.manual_seed(0)
    tokenizer = ByT5Tokenizer()
    config = T5Config(
        vocab_size=len(tokenizer),
        d_model=32,
        d_ff=64,
        num_layers=1,
        num_heads=2,
        d_kv=16,
        dropout_rate=0.0,  # keeps train-mode forwards deterministic
        decoder_start_token_id=0,
        pad_token_id=tokenizer.pad_token_id,
        eos_token_id=tokenizer.eos_token_id,
    )
    tokenizer.save_pretrained(path)
    T5ForConditionalGeneration(config).save_pretrained(path)
    return str(path)


@pytest.fixture
def backend(model_dir, monkeypatch) -> HfBackend:
    monkeypatch.setattr("sentence_transformers.SentenceTransformer", _StubEncoder)
    return HfBackend(ServiceConfig(lm_model=f"hf:{model_dir}", embed_model="stub"))


class TestEmbed:
    def test_dim_comes_from_the_encoder(self, backend):
        assert backend.embed_dim == _StubEncoder.DIM

    def test_chunked_batch_keeps_order_and_shape(self, backend):
        texts = [f"t{'x' * i}" for i in range(CHUNK + 4)]
        rows = backend.embed(texts)
        assert len(rows) == len(texts)
        assert all(len(r) == _StubEncoder.DIM for r in rows)
        assert rows[3][0] == float(len(texts[3]) + 1)


class TestScore:
    def test_token_count_includes_the_end_marker(self, backend):
        (_, n), = backend.score([("input", "yes")])
        assert n == 4  # three bytes plus </s>

    def test_batch_matches_singles_despite_padding(self, backend):
        pairs = [("short", "a"), ("a much longer input text", "target words")]
        batched = backend.score(pairs)
        singles = [backend.score([p])[0] for p in pairs]
        for (ll_b, n_b), (ll_s, n_s) in zip(batched, singles):
            assert n_b == n_s
            assert ll_b == pytest.approx(ll_s, abs=1e-3)

    def test_chunking_is_invisible(self, backend):
        pairs = [(f"input {i}", f"out {i}") for i in range(CHUNK + 3)]
        lls = [ll for ll, _ in backend.score(pairs)]
        assert len(lls) == CHUNK + 3
        assert all(np.isfinite(lls))

    def test_deterministic(self, backend):
        assert backend.score([("a", "b")]) == backend.score([("a", "b")])


class TestGenerate:
    def test_constrained_membership(self, backend):
        assert backend.generate("q", ["yes", "no"], 8) in {"yes", "no"}

    def test_free_form_returns_text(self, backend):
        assert isinstance(backend.generate("q", None, 6), str)


class TestTrainStep:
    def test_loss_is_mean_token_nll(self, backend):
        pairs = [("i1", "t1"), ("i2", "second target")]
        scored = backend.score(pairs)
        expected = float(np.mean([-ll / n for ll, n in scored]))
        assert backend.train_step(pairs, 1e-7) == pytest.approx(expected, rel=1e-4)

    def test_overfitting_one_example_cuts_the_loss(self, backend):
        losses = [backend.train_step([("2+2=", "four")], 5e-3) for _ in range(30)]
        assert losses[-1] < 0.5 * losses[0]

    def test_training_improves_the_trained_candidate(self, backend):
        for _ in range(30):
            backend.train_step([("color:", "red")], 5e-3)
        assert backend.generate("color:", ["blue", "red"], 4) == "red"
