import numpy as np
import pytest

from duorep.embed import (
    EmbedderConfig,
    EmbeddingFileError,
    SyntheticEmbedder,
    load_embeddings,
    synthetic_token_vector,
    write_embeddings,
)


class TestSyntheticTokenVector:
    def test_deterministic_bitwise(self):
        a = synthetic_token_vector("cat", 128, 0)
        b = synthetic_token_vector("cat", 128, 0)
        assert a.dtype == np.float32
        assert np.array_equal(a.view(np.uint8), b.view(np.uint8))

    def test_unit_norm(self):
        for token in ("cat", "a", "volunterilay", "ww1"):
            v = synthetic_token_vector(token, 64, 7)
            assert float(v @ v) == pytest.approx(1.0, abs=1e-6)

    def test_near_orthogonal_pair(self):
        # frozen from a seed-0 calibration run; independent random unit
        # vectors in 128 dims should be near-orthogonal
        cos = float(synthetic_token_vector("cat", 128, 0) @ synthetic_token_vector("dog", 128, 0))
        assert abs(cos) < 0.25
        assert cos == pytest.approx(0.13039495, abs=1e-5)

    def test_zero_dim_rejected(self):
        with pytest.raises(ValueError):
            synthetic_token_vector("cat", 0, 0)

    def test_empty_token_rejected(self):
        with pytest.raises(ValueError):
            synthetic_token_vector("", 8, 0)

    def test_seed_changes_vector(self):
        a = synthetic_token_vector("cat", 32, 0)
        b = synthetic_token_vector("cat", 32, 1)
        assert not np.allclose(a, b)


class TestMultiEmbedding:
    def test_query_padding(self):
        emb = SyntheticEmbedder(EmbedderConfig.multi(dim=16, q_len=32))
        Q = emb.embed_query_multi("a b")
        assert Q.shape == (32, 16)
        assert np.array_equal(Q[0], emb.token_vector("a"))
        assert np.array_equal(Q[1], emb.token_vector("b"))
        assert not Q[2:].any()

    def test_query_truncation(self):
        emb = SyntheticEmbedder(EmbedderConfig.multi(dim=8, q_len=4))
        Q = emb.embed_query_multi("a b c d e f")
        assert Q.shape == (4, 8)
        assert Q.all(axis=1).any()

    def test_passage_truncation(self):
        emb = SyntheticEmbedder(EmbedderConfig.multi(dim=8, max_doc_tokens=180))
        text = " ".join(f"tok{i}" for i in range(200))
        assert emb.embed_passage_multi(text).shape == (180, 8)

    def test_empty_passage_zero_row(self):
        emb = SyntheticEmbedder(EmbedderConfig.multi(dim=8))
        D = emb.embed_passage_multi("")
        assert D.shape == (1, 8)
        assert not D.any()


class TestSingleEmbedding:
    def test_single_token_is_token_vector(self):
        emb = SyntheticEmbedder(EmbedderConfig.single(dim=32))
        assert np.allclose(emb.embed_single("cat")[0], emb.token_vector("cat"), atol=1e-7)

    def test_mean_of_two(self):
        emb = SyntheticEmbedder(EmbedderConfig.single(dim=32))
        va = emb.token_vector("a").astype(np.float64)
        vb = emb.token_vector("b").astype(np.float64)
        mean = (va + vb) / 2
        expected = mean / np.linalg.norm(mean)
        assert np.allclose(emb.embed_single("a b")[0], expected, atol=1e-6)

    def test_unit_norm(self):
        emb = SyntheticEmbedder(EmbedderConfig.single(dim=64))
        for text in ("cat", "a b c", "why did the us enter ww1"):
            v = emb.embed_single(text)[0]
            assert float(v @ v) == pytest.approx(1.0, abs=1e-6)

    def test_empty_text_zero_vector(self):
        emb = SyntheticEmbedder(EmbedderConfig.single(dim=16))
        assert not emb.embed_single("").any()

    def test_aspect_dilution(self):
        # mixing a second aspect into one vector dilutes the first aspect's match
        emb = SyntheticEmbedder(EmbedderConfig.single(dim=128, seed=0))
        for a, b in [("a", "b"), ("cat", "dog"), ("dysarthria", "cerebral")]:
            va = emb.token_vector(a).astype(np.float64)
            diluted = float(emb.embed_single(f"{a} {b}")[0].astype(np.float64) @ va)
            pure = float(emb.embed_single(a)[0].astype(np.float64) @ va)
            assert diluted < pure - 0.1


class TestEmbeddingFiles:
    def test_single_round_trip_bitwise(self, tmp_path):
        emb = SyntheticEmbedder(EmbedderConfig.single(dim=24))
        ids = ["p1", "p2", "p3"]
        mats = [emb.embed_single(t) for t in ("one", "two words", "three word text")]
        path = tmp_path / "vecs.dve"
        write_embeddings(path, ids, mats, "single")
        mode, dim, got_ids, got = load_embeddings(path)
        assert (mode, dim, got_ids) == ("single", 24, ids)
        for a, b in zip(mats, got):
            assert np.array_equal(a.view(np.uint8), b.view(np.uint8))

    def test_multi_round_trip(self, tmp_path):
        emb = SyntheticEmbedder(EmbedderConfig.multi(dim=8))
        ids = ["a", "b"]
        mats = [emb.embed_passage_multi("x y z"), emb.embed_passage_multi("w")]
        path = tmp_path / "vecs.mve"
        write_embeddings(path, ids, mats, "multi")
        mode, dim, got_ids, got = load_embeddings(path)
        assert mode == "multi"
        assert [m.shape for m in got] == [(3, 8), (1, 8)]
        for a, b in zip(mats, got):
            assert np.array_equal(a, b)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.dve"
        path.write_bytes(b"XXXX" + b"\x00" * 12)
        with pytest.raises(EmbeddingFileError, match="DVE1"):
            load_embeddings(path)

    def test_truncated(self, tmp_path):
        emb = SyntheticEmbedder(EmbedderConfig.single(dim=24))
        path = tmp_path / "vecs.dve"
        write_embeddings(path, ["p1"], [emb.embed_single("one")], "single")
        data = path.read_bytes()
        path.write_bytes(data[:-5])
        with pytest.raises(EmbeddingFileError, match="truncated"):
            load_embeddings(path)

    def test_zero_rows_rejected_on_load(self, tmp_path):
        import struct

        path = tmp_path / "vecs.mve"
        payload = b"MVE1" + struct.pack("<I", 4) + struct.pack("<Q", 1)
        payload += struct.pack("<I", 2) + b"p1" + struct.pack("<I", 0)
        path.write_bytes(payload)
        with pytest.raises(EmbeddingFileError, match="zero rows"):
            load_embeddings(path)

    def test_dim_mismatch_on_write(self, tmp_path):
        mats = [np.zeros((1, 4), np.float32), np.zeros((1, 5), np.float32)]
        with pytest.raises(EmbeddingFileError, match="dim"):
            write_embeddings(tmp_path / "v.dve", ["a", "b"], mats, "single")
