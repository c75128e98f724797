"""Query/passage embedders and the binary embedding interchange format.

Two sources of embeddings: a deterministic synthetic embedder (hash-seeded
pseudo-random unit vectors, bit-exact across runs and platforms) and
file-backed precomputed vectors for importing real model outputs.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .corpus import tokenize

MAGIC_SINGLE = b"DVE1"
MAGIC_MULTI = b"MVE1"

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF
_SPLITMIX_GOLDEN = np.uint64(0x9E3779B97F4A7C15)


@dataclass
class EmbedderConfig:
    mode: str = "single"  # single | multi
    dim: int = 768
    q_len: int = 32  # multi only: fixed query embedding count
    max_doc_tokens: int = 180  # multi only: passage-side truncation
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("single", "multi"):
            raise ValueError(f"unknown embedder mode {self.mode!r}")
        if self.dim <= 0:
            raise ValueError("dim must be positive")
        if self.q_len <= 0:
            raise ValueError("q_len must be positive")
        if self.max_doc_tokens <= 0:
            raise ValueError("max_doc_tokens must be positive")

    @classmethod
    def single(cls, dim: int = 768, seed: int = 0) -> "EmbedderConfig":
        return cls(mode="single", dim=dim, seed=seed)

    @classmethod
    def multi(
        cls, dim: int = 128, q_len: int = 32, max_doc_tokens: int = 180, seed: int = 0
    ) -> "EmbedderConfig":
        return cls(mode="multi", dim=dim, q_len=q_len, max_doc_tokens=max_doc_tokens, seed=seed)


def fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * _FNV_PRIME) & _MASK64
    return h


def _splitmix64_uniform(state: int, n: int) -> np.ndarray:
    """n uniform(-1, 1) float64 draws from the splitmix64 stream at `state`."""
    steps = np.arange(1, n + 1, dtype=np.uint64)
    z = np.uint64(state) + steps * _SPLITMIX_GOLDEN
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    z = z ^ (z >> np.uint64(31))
    # top 53 bits -> [0, 1), then shift to (-1, 1)
    unit = (z >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)
    return 2.0 * unit - 1.0


def synthetic_token_vector(token: str, dim: int, seed: int = 0) -> np.ndarray:
    """Deterministic L2-normalized vector for a token (float32, shape (dim,))."""
    if not token:
        raise ValueError("token must be non-empty")
    if dim <= 0:
        raise ValueError("dim must be positive")
    state = fnv1a64(token.encode("utf-8")) ^ (seed & _MASK64)
    vec = _splitmix64_uniform(state, dim)
    norm = np.linalg.norm(vec)
    if norm == 0.0:
        vec[0] = 1.0
        norm = 1.0
    return (vec / norm).astype(np.float32)


class SyntheticEmbedder:
    """Stateless embedder producing pure-function outputs of (text, config)."""

    def __init__(self, config: EmbedderConfig):
        self.config = config
        self._cache: dict[str, np.ndarray] = {}

    def token_vector(self, token: str) -> np.ndarray:
        vec = self._cache.get(token)
        if vec is None:
            vec = synthetic_token_vector(token, self.config.dim, self.config.seed)
            self._cache[token] = vec
        return vec

    def embed_single(self, text: str) -> np.ndarray:
        """L2-normalized mean of token vectors; empty text -> zero vector. Shape (1, dim)."""
        tokens = tokenize(text)
        if not tokens:
            return np.zeros((1, self.config.dim), dtype=np.float32)
        acc = np.zeros(self.config.dim, dtype=np.float64)
        for tok in tokens:
            acc += self.token_vector(tok).astype(np.float64)
        acc /= len(tokens)
        norm = np.linalg.norm(acc)
        if norm > 0.0:
            acc /= norm
        return acc.astype(np.float32).reshape(1, self.config.dim)

    def embed_passage_multi(self, text: str) -> np.ndarray:
        """One row per token, truncated after max_doc_tokens; empty text -> one zero row."""
        tokens = tokenize(text)[: self.config.max_doc_tokens]
        if not tokens:
            return np.zeros((1, self.config.dim), dtype=np.float32)
        return np.stack([self.token_vector(t) for t in tokens])

    def embed_query_multi(self, text: str) -> np.ndarray:
        """One row per token for the first q_len tokens, zero-padded to exactly q_len rows."""
        tokens = tokenize(text)[: self.config.q_len]
        out = np.zeros((self.config.q_len, self.config.dim), dtype=np.float32)
        for i, tok in enumerate(tokens):
            out[i] = self.token_vector(tok)
        return out

    def embed(self, text: str, role: str) -> np.ndarray:
        """Dispatch on config.mode and role ('query' or 'passage')."""
        if self.config.mode == "single":
            return self.embed_single(text)
        if role == "query":
            return self.embed_query_multi(text)
        return self.embed_passage_multi(text)


class EmbeddingFileError(ValueError):
    """Corrupt or mismatched embedding file."""


def write_embeddings(path, ids: list[str], matrices: list[np.ndarray], mode: str) -> None:
    """Serialize embedding matrices keyed by external id (see module format notes).

    Format: magic (DVE1 single / MVE1 multi), u32 LE dim, u64 LE record count;
    per record: u32 id length + UTF-8 id, u32 row count, rows*dim float32 LE.
    """
    if mode not in ("single", "multi"):
        raise ValueError(f"unknown embedding mode {mode!r}")
    if len(ids) != len(matrices):
        raise ValueError("ids and matrices must have equal length")
    if not matrices:
        raise ValueError("refusing to write an empty embedding file")
    dim = matrices[0].shape[1]
    magic = MAGIC_SINGLE if mode == "single" else MAGIC_MULTI
    with open(path, "wb") as fh:
        fh.write(magic)
        fh.write(struct.pack("<I", dim))
        fh.write(struct.pack("<Q", len(matrices)))
        for ext_id, mat in zip(ids, matrices):
            if mat.ndim != 2 or mat.shape[1] != dim:
                raise EmbeddingFileError(
                    f"record {ext_id!r}: dim {mat.shape} inconsistent with file dim {dim}"
                )
            if mat.shape[0] == 0:
                raise EmbeddingFileError(f"record {ext_id!r}: zero rows")
            if mode == "single" and mat.shape[0] != 1:
                raise EmbeddingFileError(
                    f"record {ext_id!r}: single-representation record must have 1 row, got {mat.shape[0]}"
                )
            id_bytes = ext_id.encode("utf-8")
            fh.write(struct.pack("<I", len(id_bytes)))
            fh.write(id_bytes)
            fh.write(struct.pack("<I", mat.shape[0]))
            fh.write(np.ascontiguousarray(mat, dtype="<f4").tobytes())


def _read_exact(fh, n: int, path) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise EmbeddingFileError(f"{path}: truncated file (wanted {n} bytes, got {len(data)})")
    return data


def load_embeddings(path) -> tuple[str, int, list[str], list[np.ndarray]]:
    """Load an embedding file; returns (mode, dim, ids, matrices)."""
    with open(path, "rb") as fh:
        magic = _read_exact(fh, 4, path)
        if magic == MAGIC_SINGLE:
            mode = "single"
        elif magic == MAGIC_MULTI:
            mode = "multi"
        else:
            raise EmbeddingFileError(
                f"{path}: bad magic {magic!r}, expected {MAGIC_SINGLE!r} or {MAGIC_MULTI!r}"
            )
        dim = struct.unpack("<I", _read_exact(fh, 4, path))[0]
        if dim == 0:
            raise EmbeddingFileError(f"{path}: dim must be positive")
        count = struct.unpack("<Q", _read_exact(fh, 8, path))[0]
        ids: list[str] = []
        matrices: list[np.ndarray] = []
        for _ in range(count):
            id_len = struct.unpack("<I", _read_exact(fh, 4, path))[0]
            ext_id = _read_exact(fh, id_len, path).decode("utf-8")
            rows = struct.unpack("<I", _read_exact(fh, 4, path))[0]
            if rows == 0:
                raise EmbeddingFileError(f"{path}: record {ext_id!r} has zero rows")
            if mode == "single" and rows != 1:
                raise EmbeddingFileError(
                    f"{path}: single-representation record {ext_id!r} has {rows} rows"
                )
            raw = _read_exact(fh, rows * dim * 4, path)
            mat = np.frombuffer(raw, dtype="<f4").reshape(rows, dim).copy()
            ids.append(ext_id)
            matrices.append(mat)
        if fh.read(1):
            raise EmbeddingFileError(f"{path}: trailing bytes after {count} records")
    return mode, dim, ids, matrices
