from __future__ import annotations

import pytest

from auglm_service import ServiceConfig, parse_models_spec
from auglm_service.backends import load_backend
from auglm_service.backends.tiny import _parse_tiny_spec


class TestParseModelsSpec:
    def test_tiny_default_embedder(self):
        assert parse_models_spec("tiny") == ("tiny", "hash-384")

    def test_tiny_with_size(self):
        assert parse_models_spec("tiny-64x1") == ("tiny-64x1", "hash-384")

    def test_tiny_with_embedder(self):
        assert parse_models_spec("tiny,hash-512") == ("tiny", "hash-512")

    def test_hf_default_embedder(self):
        lm, emb = parse_models_spec("hf:google/flan-t5-small")
        assert lm == "hf:google/flan-t5-small"
        assert emb == "sentence-transformers/all-MiniLM-L6-v2"

    def test_hf_explicit_embedder(self):
        lm, emb = parse_models_spec("hf:flan,my-encoder")
        assert (lm, emb) == ("hf:flan", "my-encoder")

    @pytest.mark.parametrize("bad", ["", "gpt4", "hf:", "  "])
    def test_rejects_unknown_specs(self, bad):
        with pytest.raises(ValueError):
            parse_models_spec(bad)


class TestTinySpec:
    def test_default_size(self):
        assert _parse_tiny_spec("tiny") == (128, 2)

    def test_explicit_size(self):
        assert _parse_tiny_spec("tiny-64x1") == (64, 1)

    @pytest.mark.parametrize("bad", ["tiny-", "tiny-x", "tiny-0x1", "tiny-8x0", "tiny-8", "tiny-axb"])
    def test_rejects_malformed_sizes(self, bad):
        with pytest.raises(ValueError):
            _parse_tiny_spec(bad)


class TestServiceConfig:
    def test_rejects_bad_batch(self):
        with pytest.raises(ValueError):
            ServiceConfig(max_batch=0)

    def test_rejects_inverted_lr_bounds(self):
        with pytest.raises(ValueError):
            ServiceConfig(lr_min=1.0, lr_max=0.1)

    def test_rejects_nonpositive_lr_min(self):
        with pytest.raises(ValueError):
            ServiceConfig(lr_min=0.0)


class TestLoadBackend:
    def test_sized_tiny_spec_shapes_the_model(self):
        small = load_backend(ServiceConfig(lm_model="tiny-16x1"))
        assert small.name == "tiny-16x1"
        assert small.model.rnn.hidden_size == 16
        assert small.model.rnn.num_layers == 1

    def test_unknown_model_rejected(self):
        with pytest.raises(ValueError):
            load_backend(ServiceConfig(lm_model="mystery"))
