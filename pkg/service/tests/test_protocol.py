"""Protocol conformance: the core package's remote client against a live
server.

These tests import the client from the `auglm` package and drive a real
uvicorn instance over HTTP, so they exercise exactly the contract the
pipeline relies on: handshake, embedding shape checks, batched scoring,
constrained generation membership, training, and error surfacing.
"""

from __future__ import annotations

import threading

import numpy as np
import pytest

from auglm.errors import LmServiceError, LmTransportError
from auglm.lm import RemoteLm


@pytest.fixture
def client(live_service) -> RemoteLm:
    return RemoteLm(live_service())


class TestHandshake:
    def test_info_protocol_and_dim(self, client):
        info = client.info()
        assert info["protocol"] == "auglm/1"
        assert client.dim == info["embed_dim"] == 384


class TestEmbedDimsConsistent:
    def test_shape_matches_info(self, client):
        matrix = client.embed(["one", "two", "three"])
        assert matrix.values.shape == (3, client.dim)

    def test_deterministic_rows(self, client):
        a = client.embed(["graph learning", "graph learning"]).values
        assert np.array_equal(a[0], a[1])
        b = client.embed(["graph learning"]).values[0]
        assert np.array_equal(a[0], b)

    def test_distinct_texts_embed_apart(self, client):
        m = client.embed(["spectral clustering", "protein folding"]).values
        assert not np.array_equal(m[0], m[1])


class TestScoreOrderingSanity:
    def test_trained_continuation_beats_random_string(self, client):
        pair = ("the sky is", "blue")
        for _ in range(30):
            client.train_step(*pair, lr=1e-2)
        good = client.score(*pair)
        junk = client.score("the sky is", "Qx7z")
        assert good.n_target_tokens == junk.n_target_tokens == 5
        assert good.log_likelihood > junk.log_likelihood

    def test_batch_scores_align_with_singles(self, client):
        pairs = [("a", "x"), ("b", "y"), ("c", "z")]
        batched = client.score_batch(pairs)
        singles = [client.score(i, t) for i, t in pairs]
        for got, want in zip(batched, singles):
            assert got.n_target_tokens == want.n_target_tokens
            assert got.log_likelihood == pytest.approx(want.log_likelihood, abs=1e-4)


class TestConstrainedGenerateMembership:
    def test_membership(self, client):
        assert client.generate("is this fine?", ["yes", "no"]) in {"yes", "no"}

    def test_trained_candidate_wins(self, client):
        for _ in range(40):
            client.train_step("color of the sea:", "azure", lr=1e-2)
        assert client.generate("color of the sea:", ["maroon", "azure", "beige"]) == "azure"

    def test_free_form_returns_text(self, client):
        assert isinstance(client.generate("anything", None, max_new_tokens=8), str)

    def test_free_form_reproduces_an_overfit_target(self, client):
        for _ in range(60):
            client.train_step("the capital of France is", "Paris", lr=1e-2)
        assert client.generate("the capital of France is", None, max_new_tokens=16) == "Paris"


class TestOverfitOneExample:
    def test_fifty_steps_cut_the_loss(self, client):
        losses = [client.train_step("input text", "the answer", lr=1e-2) for _ in range(50)]
        assert all(np.isfinite(losses))
        assert losses[-1] < 0.5 * losses[0]

    def test_batched_train_step_reports_one_loss(self, client):
        loss = client.train_step_batch([("a", "b"), ("c", "d")], lr=1e-3)
        assert np.isfinite(loss) and loss > 0.0


class TestFingerprint:
    def test_stable_under_scoring_and_moved_by_training(self, client):
        before = client.fingerprint()
        client.score("x", "y")
        client.generate("x", ["y", "z"])
        client.embed(["x"])
        assert client.fingerprint() == before
        client.train_step("x", "y", lr=1e-3)
        assert client.fingerprint() != before


class TestErrorSurfacing:
    def test_oversized_batch_raises_service_error(self, live_service):
        client = RemoteLm(live_service(max_batch=2))
        with pytest.raises(LmServiceError, match="limit of 2"):
            client.score_batch([("a", "b")] * 3)

    def test_out_of_bounds_lr_raises_service_error(self, live_service):
        client = RemoteLm(live_service(lr_min=1e-5, lr_max=1e-3))
        with pytest.raises(LmServiceError, match="lr"):
            client.train_step("a", "b", lr=0.5)

    def test_dead_endpoint_raises_transport_error(self):
        client = RemoteLm("http://127.0.0.1:9", timeout=0.5, retries=0, backoff=0.0)
        with pytest.raises(LmTransportError):
            client.score("a", "b")


class TestConcurrency:
    def test_scoring_while_training(self, client):
        errors: list[Exception] = []

        def score_many():
            try:
                for _ in range(20):
                    s = client.score("concurrent input", "target")
                    assert np.isfinite(s.log_likelihood)
            except Exception as exc:  # noqa: BLE001 - collected for the assert
                errors.append(exc)

        def train_many():
            try:
                for _ in range(20):
                    client.train_step("concurrent input", "target", lr=1e-3)
            except Exception as exc:  # noqa: BLE001
                errors.append(exc)

        threads = [threading.Thread(target=t) for t in (score_many, train_many, score_many)]
        for t in threads:
            t.start()
        for t in threads:
            t.join(timeout=60)
        assert errors == []
