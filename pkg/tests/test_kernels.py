"""Backend parity: every importable kernel backend must agree with a reference."""

import numpy as np
import pytest

from duorep.kernels import active_backend, available_backends

BACKENDS = sorted(available_backends())


def reference_maxsim(Q, D):
    Q = np.asarray(Q, dtype=np.float64)
    D = np.asarray(D, dtype=np.float64)
    return float(np.max(Q @ D.T, axis=1).sum())


@pytest.fixture(params=BACKENDS)
def backend(request):
    return available_backends()[request.param]


def test_native_backend_is_built():
    # the compiled extension should exist in this build; the benchmark and the
    # python fallback cover environments where it does not
    assert active_backend() in BACKENDS


class TestMaxsim:
    def test_matches_reference(self, backend):
        rng = np.random.Generator(np.random.PCG64(0))
        for _ in range(20):
            Q = rng.standard_normal((int(rng.integers(1, 12)), 16)).astype(np.float32)
            D = rng.standard_normal((int(rng.integers(1, 20)), 16)).astype(np.float32)
            assert backend.maxsim(Q, D) == pytest.approx(reference_maxsim(Q, D), abs=1e-9)

    def test_dim_mismatch(self, backend):
        with pytest.raises(ValueError):
            backend.maxsim(np.ones((2, 4), np.float32), np.ones((2, 5), np.float32))

    def test_empty_document_rejected(self, backend):
        with pytest.raises(ValueError):
            backend.maxsim(np.ones((2, 4), np.float32), np.empty((0, 4), np.float32))


class TestMaxsimBatch:
    def test_matches_per_pair(self, backend):
        rng = np.random.Generator(np.random.PCG64(1))
        tokens = rng.standard_normal((50, 8)).astype(np.float32)
        offsets = np.array([0, 5, 12, 20, 33, 50], dtype=np.int64)
        Q = rng.standard_normal((4, 8)).astype(np.float32)
        ordinals = np.array([0, 2, 4], dtype=np.int64)
        got = backend.maxsim_batch(Q, tokens, offsets, ordinals)
        for score, p in zip(got, ordinals):
            want = reference_maxsim(Q, tokens[offsets[p] : offsets[p + 1]])
            assert score == pytest.approx(want, abs=1e-9)

    def test_empty_range_rejected(self, backend):
        tokens = np.ones((3, 4), np.float32)
        offsets = np.array([0, 3, 3], dtype=np.int64)
        with pytest.raises(ValueError):
            backend.maxsim_batch(np.ones((1, 4), np.float32), tokens, offsets, np.array([1]))


class TestAdcScores:
    def test_matches_manual_lookup(self, backend):
        rng = np.random.Generator(np.random.PCG64(2))
        m, ks, n = 4, 16, 30
        lut = rng.standard_normal((m, ks))
        codes = rng.integers(0, ks, size=(n, m)).astype(np.uint8)
        base = 0.7
        got = backend.adc_scores(lut, codes, base)
        want = np.array([base + sum(lut[j, codes[i, j]] for j in range(m)) for i in range(n)])
        assert np.allclose(got, want, atol=1e-12)

    def test_empty_codes(self, backend):
        got = backend.adc_scores(np.zeros((2, 4)), np.empty((0, 2), np.uint8), 1.0)
        assert got.shape == (0,)

    def test_shape_mismatch(self, backend):
        with pytest.raises(ValueError):
            backend.adc_scores(np.zeros((2, 4)), np.zeros((3, 5), np.uint8), 0.0)


@pytest.mark.skipif(len(BACKENDS) < 2, reason="only one backend importable")
class TestCrossBackend:
    def test_backends_agree(self):
        mods = list(available_backends().values())
        rng = np.random.Generator(np.random.PCG64(3))
        Q = rng.standard_normal((6, 12)).astype(np.float32)
        tokens = rng.standard_normal((80, 12)).astype(np.float32)
        offsets = np.array([0, 10, 25, 40, 80], dtype=np.int64)
        ordinals = np.arange(4, dtype=np.int64)
        lut = rng.standard_normal((3, 8))
        codes = rng.integers(0, 8, size=(40, 3)).astype(np.uint8)
        results_batch = [m.maxsim_batch(Q, tokens, offsets, ordinals) for m in mods]
        results_adc = [m.adc_scores(lut, codes, 0.25) for m in mods]
        for other in results_batch[1:]:
            assert np.allclose(results_batch[0], other, atol=1e-9)
        for other in results_adc[1:]:
            assert np.allclose(results_adc[0], other, atol=1e-12)
