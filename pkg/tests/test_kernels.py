"""Backend parity tests: the compiled extension and the NumPy/SciPy fallback
must implement the same numeric contracts, and the import-time selector must
honor the force-fallback escape hatch.

Oracles: dense adjacency matmuls for gather_sum and a dense linear solve for
the PPR fixed point, applied identically to both backends.
"""

import os
import subprocess
import sys

import numpy as np
import pytest

from auglm._kernels import _fallback

from conftest import build_graph, dense_ppr, random_connected_edges

compiled = pytest.importorskip(
    "auglm._kernels._compiled", reason="compiled extension not built"
)

BACKENDS = {"fallback": _fallback, "compiled": compiled}


def _random_csr(rng, n):
    g = build_graph(n, random_connected_edges(rng, n))
    return g, g.csr_offsets, g.csr_targets


def _dense_adjacency(offsets, targets):
    n = offsets.shape[0] - 1
    a = np.zeros((n, n))
    for u in range(n):
        for v in targets[offsets[u] : offsets[u + 1]]:
            a[u, v] = 1.0
    return a


class TestBackendNames:
    def test_module_constants(self):
        assert _fallback.BACKEND == "fallback"
        assert compiled.BACKEND == "compiled"

    def test_package_selects_one(self):
        from auglm._kernels import BACKEND

        assert BACKEND in ("fallback", "compiled")

    def test_force_fallback_subprocess(self):
        env = dict(os.environ, AUGLM_FORCE_FALLBACK="1")
        out = subprocess.run(
            [sys.executable, "-c", "from auglm._kernels import BACKEND; print(BACKEND)"],
            capture_output=True,
            text=True,
            env=env,
        )
        assert out.returncode == 0
        assert out.stdout.strip() == "fallback"

    def test_default_prefers_compiled(self):
        env = {k: v for k, v in os.environ.items() if k != "AUGLM_FORCE_FALLBACK"}
        out = subprocess.run(
            [sys.executable, "-c", "from auglm._kernels import BACKEND; print(BACKEND)"],
            capture_output=True,
            text=True,
            env=env,
        )
        assert out.returncode == 0
        assert out.stdout.strip() == "compiled"


class TestGatherSum:
    @pytest.mark.parametrize("name", sorted(BACKENDS))
    def test_matches_dense_oracle(self, name):
        rng = np.random.default_rng(11)
        impl = BACKENDS[name]
        for _ in range(5):
            n = int(rng.integers(2, 25))
            _, offsets, targets = _random_csr(rng, n)
            h = rng.normal(size=(n, 4))
            got = impl.gather_sum(offsets, targets, h)
            expected = _dense_adjacency(offsets, targets) @ h
            np.testing.assert_allclose(got, expected, rtol=0, atol=1e-12)

    def test_backends_agree(self):
        rng = np.random.default_rng(12)
        for _ in range(10):
            n = int(rng.integers(2, 40))
            _, offsets, targets = _random_csr(rng, n)
            h = rng.normal(size=(n, 8))
            a = _fallback.gather_sum(offsets, targets, h)
            b = compiled.gather_sum(offsets, targets, h)
            np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)

    @pytest.mark.parametrize("name", sorted(BACKENDS))
    def test_edgeless_graph(self, name):
        impl = BACKENDS[name]
        offsets = np.zeros(4, dtype=np.int64)
        targets = np.zeros(0, dtype=np.int64)
        h = np.ones((3, 2))
        assert np.all(impl.gather_sum(offsets, targets, h) == 0.0)


class TestPprPower:
    @pytest.mark.parametrize("name", sorted(BACKENDS))
    def test_matches_dense_solve(self, name):
        rng = np.random.default_rng(21)
        impl = BACKENDS[name]
        for _ in range(5):
            n = int(rng.integers(2, 20))
            g, offsets, targets = _random_csr(rng, n)
            source = int(rng.integers(0, n))
            r, iterations, diff = impl.ppr_power(offsets, targets, source, 0.1, 1e-12, 2000)
            expected = dense_ppr(g, source, 0.1)
            np.testing.assert_allclose(r, expected, rtol=0, atol=1e-9)
            assert iterations < 2000
            assert diff <= 1e-12

    def test_backends_agree_bitwise(self):
        rng = np.random.default_rng(22)
        for _ in range(10):
            n = int(rng.integers(2, 40))
            _, offsets, targets = _random_csr(rng, n)
            source = int(rng.integers(0, n))
            ra, ia, da = _fallback.ppr_power(offsets, targets, source, 0.15, 1e-10, 500)
            rb, ib, db = compiled.ppr_power(offsets, targets, source, 0.15, 1e-10, 500)
            assert ia == ib
            np.testing.assert_allclose(ra, rb, rtol=0, atol=1e-13)

    @pytest.mark.parametrize("name", sorted(BACKENDS))
    def test_isolated_source_keeps_all_mass(self, name):
        impl = BACKENDS[name]
        g = build_graph(3, [(0, 1)])
        r, _, _ = impl.ppr_power(g.csr_offsets, g.csr_targets, 2, 0.1, 1e-12, 1000)
        np.testing.assert_allclose(r, [0.0, 0.0, 1.0], rtol=0, atol=1e-12)


class TestPprPush:
    @pytest.mark.parametrize("name", sorted(BACKENDS))
    def test_guarantee_and_underestimate(self, name):
        rng = np.random.default_rng(31)
        impl = BACKENDS[name]
        for _ in range(5):
            n = int(rng.integers(2, 25))
            g, offsets, targets = _random_csr(rng, n)
            source = int(rng.integers(0, n))
            epsilon = 1e-5
            p, res = impl.ppr_push(offsets, targets, source, 0.1, epsilon)
            deg = np.maximum(np.diff(offsets), 1)
            assert np.all(res / deg < epsilon)
            exact = dense_ppr(g, source, 0.1)
            assert np.all(p <= exact + 1e-12)
            np.testing.assert_allclose(p.sum() + res.sum(), 1.0, rtol=0, atol=1e-12)

    def test_backends_agree(self):
        rng = np.random.default_rng(32)
        for _ in range(10):
            n = int(rng.integers(2, 40))
            _, offsets, targets = _random_csr(rng, n)
            source = int(rng.integers(0, n))
            pa, ra = _fallback.ppr_push(offsets, targets, source, 0.1, 1e-6)
            pb, rb = compiled.ppr_push(offsets, targets, source, 0.1, 1e-6)
            assert pa.tobytes() == pb.tobytes()
            assert ra.tobytes() == rb.tobytes()
