"""Approximate nearest-neighbor index over token embeddings.

A k-means coarse quantizer partitions vectors into inverted lists; residuals
are product-quantized to m one-byte codes. Queries score candidates with
inner-product ADC lookup tables: score = q . centroid + sum_j LUT_j[code_j].
Approximate scores select candidates only; final rankings re-score exactly.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from . import kernels

MAGIC = b"IVPQ"
VERSION = 1

DEFAULT_KS = 256
DEFAULT_M = 16
DEFAULT_SAMPLE_RATE = 0.05
DEFAULT_KMEANS_ITERS = 25


def default_nlist(n: int) -> int:
    return min(4096, 4 * math.ceil(math.sqrt(n)))


def training_sample_size(n: int, nlist: int, ks: int, rate: float = DEFAULT_SAMPLE_RATE) -> int:
    """Sample-rate fraction of n with a floor keeping k-means and PQ trainable."""
    return min(n, max(math.ceil(rate * n), 10 * nlist, 50 * ks))


@dataclass
class KMeansResult:
    centroids: np.ndarray  # (k, dim) float32
    objective: list[float]  # inertia recorded at each assignment step


def _squared_distances(x: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """(n, k) squared L2 distances, float64, clipped at 0."""
    x2 = np.einsum("ij,ij->i", x, x)[:, None]
    c2 = np.einsum("ij,ij->i", centroids, centroids)[None, :]
    d2 = x2 - 2.0 * (x @ centroids.T) + c2
    np.maximum(d2, 0.0, out=d2)
    return d2


def _kmeans_pp_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    centroids = np.empty((k, x.shape[1]), dtype=np.float64)
    centroids[0] = x[rng.integers(n)]
    d2 = _squared_distances(x, centroids[:1])[:, 0]
    for i in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centroids[i] = x[idx]
        np.minimum(d2, _squared_distances(x, centroids[i : i + 1])[:, 0], out=d2)
    return centroids


def train_kmeans(sample: np.ndarray, k: int, iters: int = DEFAULT_KMEANS_ITERS, seed: int = 0) -> KMeansResult:
    """Lloyd's algorithm from seeded k-means++ init; deterministic given seed.

    Empty clusters are repaired by splitting the largest cluster at its
    farthest point, which cannot increase the recorded objective.
    """
    x = np.asarray(sample, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("sample must be a 2-D array")
    n = x.shape[0]
    if n < k:
        raise ValueError(f"sample size {n} < k = {k}")
    if k < 1:
        raise ValueError("k must be >= 1")
    rng = np.random.Generator(np.random.PCG64(seed))
    centroids = _kmeans_pp_init(x, k, rng)
    objective: list[float] = []
    prev_assign = None
    for _ in range(max(1, iters)):
        d2 = _squared_distances(x, centroids)
        assign = d2.argmin(axis=1)
        objective.append(float(d2[np.arange(n), assign].sum()))
        if prev_assign is not None and np.array_equal(assign, prev_assign):
            break
        prev_assign = assign.copy()
        counts = np.bincount(assign, minlength=k)
        sums = np.zeros_like(centroids)
        np.add.at(sums, assign, x)
        nonempty = counts > 0
        centroids[nonempty] = sums[nonempty] / counts[nonempty, None]
        for empty in np.flatnonzero(~nonempty):
            donor = int(counts.argmax())
            members = np.flatnonzero(assign == donor)
            dists = _squared_distances(x[members], centroids[donor : donor + 1])[:, 0]
            farthest = members[int(dists.argmax())]
            centroids[empty] = x[farthest]
            assign[farthest] = empty
            counts[donor] -= 1
            counts[empty] += 1
    return KMeansResult(centroids.astype(np.float32), objective)


@dataclass
class PQCodebook:
    codewords: np.ndarray  # (m, ks, dim/m) float32

    @property
    def m(self) -> int:
        return self.codewords.shape[0]

    @property
    def ks(self) -> int:
        return self.codewords.shape[1]

    @property
    def dsub(self) -> int:
        return self.codewords.shape[2]

    @property
    def dim(self) -> int:
        return self.m * self.dsub


def train_pq(residuals: np.ndarray, m: int, ks: int = DEFAULT_KS,
             iters: int = DEFAULT_KMEANS_ITERS, seed: int = 0) -> PQCodebook:
    """Per-subspace k-means codebooks over coarse-quantizer residuals."""
    residuals = np.asarray(residuals, dtype=np.float64)
    dim = residuals.shape[1]
    if dim % m != 0:
        raise ValueError(f"m = {m} must divide dim = {dim}")
    if ks > 256:
        raise ValueError("ks > 256 does not fit one-byte codes")
    if residuals.shape[0] < ks:
        raise ValueError(f"need at least ks = {ks} training vectors, got {residuals.shape[0]}")
    dsub = dim // m
    codewords = np.empty((m, ks, dsub), dtype=np.float32)
    for j in range(m):
        sub = residuals[:, j * dsub : (j + 1) * dsub]
        codewords[j] = train_kmeans(sub, ks, iters=iters, seed=seed + j).centroids
    return PQCodebook(codewords)


def assign_lists(centroids: np.ndarray, vectors: np.ndarray) -> np.ndarray:
    """Nearest centroid by L2 for each vector, ties to the lowest list id."""
    d2 = _squared_distances(
        np.asarray(vectors, dtype=np.float64), np.asarray(centroids, dtype=np.float64)
    )
    return d2.argmin(axis=1)


def pq_encode(codebook: PQCodebook, centroids: np.ndarray, v: np.ndarray) -> tuple[int, np.ndarray]:
    v = np.asarray(v, dtype=np.float64).reshape(1, -1)
    if v.shape[1] != centroids.shape[1]:
        raise ValueError(f"vector dim {v.shape[1]} != centroid dim {centroids.shape[1]}")
    list_ids, codes = pq_encode_batch(codebook, centroids, v)
    return int(list_ids[0]), codes[0]


def pq_encode_batch(codebook: PQCodebook, centroids: np.ndarray,
                    vectors: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized residual encoding: (list ids, (n, m) uint8 codes)."""
    x = np.asarray(vectors, dtype=np.float64)
    cents = np.asarray(centroids, dtype=np.float64)
    list_ids = assign_lists(cents, x)
    residuals = x - cents[list_ids]
    m, dsub = codebook.m, codebook.dsub
    codes = np.empty((x.shape[0], m), dtype=np.uint8)
    for j in range(m):
        sub = residuals[:, j * dsub : (j + 1) * dsub]
        d2 = _squared_distances(sub, codebook.codewords[j].astype(np.float64))
        codes[:, j] = d2.argmin(axis=1)
    return list_ids, codes


def pq_decode(codebook: PQCodebook, centroids: np.ndarray, list_id: int,
              codes: np.ndarray) -> np.ndarray:
    """Reconstruct centroid + selected codewords (float32)."""
    parts = [codebook.codewords[j, int(codes[j])] for j in range(codebook.m)]
    return (
        np.asarray(centroids[list_id], dtype=np.float64) + np.concatenate(parts).astype(np.float64)
    ).astype(np.float32)


class IVFPQIndex:
    """Coarse quantizer + PQ codes over token embeddings, plus token -> passage map.

    Token ids are global row indices into the passage-major token array, so the
    (passage ordinal, token ordinal) map is the passage_offsets boundary array.
    """

    def __init__(self, centroids: np.ndarray, codebook: PQCodebook,
                 list_token_ids: list[np.ndarray], list_codes: list[np.ndarray],
                 passage_offsets: np.ndarray):
        self.centroids = np.asarray(centroids, dtype=np.float32)
        self.codebook = codebook
        self.list_token_ids = list_token_ids
        self.list_codes = list_codes
        self.passage_offsets = np.asarray(passage_offsets, dtype=np.int64)

    @property
    def nlist(self) -> int:
        return self.centroids.shape[0]

    @property
    def dim(self) -> int:
        return self.centroids.shape[1]

    @property
    def num_tokens(self) -> int:
        return sum(len(t) for t in self.list_token_ids)

    def token_passage(self, token_id: int) -> tuple[int, int]:
        """Map a global token id to (passage ordinal, token ordinal)."""
        p = int(np.searchsorted(self.passage_offsets, token_id, side="right")) - 1
        return p, token_id - int(self.passage_offsets[p])

    @classmethod
    def build(cls, tokens: np.ndarray, passage_offsets: np.ndarray, nlist: int | None = None,
              m: int = DEFAULT_M, ks: int = DEFAULT_KS, sample_rate: float = DEFAULT_SAMPLE_RATE,
              iters: int = DEFAULT_KMEANS_ITERS, seed: int = 0) -> "IVFPQIndex":
        tokens = np.asarray(tokens, dtype=np.float32)
        n = tokens.shape[0]
        if n == 0:
            raise ValueError("no token vectors to index")
        if nlist is None:
            nlist = default_nlist(n)
        nlist = min(nlist, n)
        sample_size = training_sample_size(n, nlist, ks, sample_rate)
        rng = np.random.Generator(np.random.PCG64(seed))
        sample_idx = (
            np.arange(n) if sample_size >= n
            else np.sort(rng.choice(n, size=sample_size, replace=False))
        )
        sample = tokens[sample_idx].astype(np.float64)
        centroids = train_kmeans(sample, nlist, iters=iters, seed=seed).centroids
        sample_residuals = sample - centroids.astype(np.float64)[assign_lists(centroids, sample)]
        codebook = train_pq(sample_residuals, m=m, ks=min(ks, sample_size),
                            iters=iters, seed=seed)
        list_ids, codes = pq_encode_batch(codebook, centroids, tokens)
        list_token_ids: list[np.ndarray] = []
        list_codes: list[np.ndarray] = []
        for lid in range(nlist):
            members = np.flatnonzero(list_ids == lid).astype(np.int64)
            list_token_ids.append(members)
            list_codes.append(codes[members])
        return cls(centroids, codebook, list_token_ids, list_codes, passage_offsets)

    def search(self, query: np.ndarray, k: int, nprobe: int) -> list[tuple[int, float]]:
        """Top-k (token id, approximate score) over the nprobe best lists.

        Probed lists maximize q . centroid; scores are inner-product ADC.
        Ties break by token id ascending. Approximate scores are for candidate
        selection only, never final rankings.
        """
        if not 1 <= nprobe <= self.nlist:
            raise ValueError(f"nprobe must be in [1, {self.nlist}], got {nprobe}")
        if k < 1:
            raise ValueError("k must be >= 1")
        q = np.asarray(query, dtype=np.float64).reshape(-1)
        if q.shape[0] != self.dim:
            raise ValueError(f"query dim {q.shape[0]} != index dim {self.dim}")
        centroid_ip = self.centroids.astype(np.float64) @ q
        probe_order = np.argsort(-centroid_ip, kind="stable")[:nprobe]
        m, dsub = self.codebook.m, self.codebook.dsub
        lut = np.empty((m, self.codebook.ks), dtype=np.float64)
        for j in range(m):
            lut[j] = self.codebook.codewords[j].astype(np.float64) @ q[j * dsub : (j + 1) * dsub]
        tid_chunks: list[np.ndarray] = []
        score_chunks: list[np.ndarray] = []
        for lid in probe_order:
            tids = self.list_token_ids[lid]
            if len(tids) == 0:
                continue
            scores = kernels.adc_scores(lut, self.list_codes[lid], float(centroid_ip[lid]))
            tid_chunks.append(tids)
            score_chunks.append(scores)
        if not tid_chunks:
            return []
        all_tids = np.concatenate(tid_chunks)
        all_scores = np.concatenate(score_chunks)
        order = np.lexsort((all_tids, -all_scores))[:k]
        return [(int(all_tids[i]), float(all_scores[i])) for i in order]

    def save(self, path) -> None:
        cw = self.codebook
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<IIIII", VERSION, self.dim, cw.m, cw.ks, self.nlist))
            fh.write(np.ascontiguousarray(self.centroids, dtype="<f4").tobytes())
            fh.write(np.ascontiguousarray(cw.codewords, dtype="<f4").tobytes())
            fh.write(struct.pack("<Q", len(self.passage_offsets)))
            fh.write(np.ascontiguousarray(self.passage_offsets, dtype="<u8").tobytes())
            for tids, codes in zip(self.list_token_ids, self.list_codes):
                fh.write(struct.pack("<I", len(tids)))
                fh.write(np.ascontiguousarray(tids, dtype="<u8").tobytes())
                fh.write(np.ascontiguousarray(codes, dtype="u1").tobytes())

    @classmethod
    def load(cls, path) -> "IVFPQIndex":
        def read_exact(fh, nbytes):
            data = fh.read(nbytes)
            if len(data) != nbytes:
                raise ValueError(f"{path}: truncated index file")
            return data

        with open(path, "rb") as fh:
            magic = read_exact(fh, 4)
            if magic != MAGIC:
                raise ValueError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
            version, dim, m, ks, nlist = struct.unpack("<IIIII", read_exact(fh, 20))
            if version != VERSION:
                raise ValueError(f"{path}: unsupported version {version}")
            centroids = np.frombuffer(
                read_exact(fh, nlist * dim * 4), dtype="<f4"
            ).reshape(nlist, dim).copy()
            dsub = dim // m
            codewords = np.frombuffer(
                read_exact(fh, m * ks * dsub * 4), dtype="<f4"
            ).reshape(m, ks, dsub).copy()
            n_offsets = struct.unpack("<Q", read_exact(fh, 8))[0]
            offsets = np.frombuffer(
                read_exact(fh, n_offsets * 8), dtype="<u8"
            ).astype(np.int64)
            list_token_ids = []
            list_codes = []
            for _ in range(nlist):
                length = struct.unpack("<I", read_exact(fh, 4))[0]
                tids = np.frombuffer(read_exact(fh, length * 8), dtype="<u8").astype(np.int64)
                codes = np.frombuffer(read_exact(fh, length * m), dtype="u1").reshape(length, m).copy()
                list_token_ids.append(tids)
                list_codes.append(codes)
            if fh.read(1):
                raise ValueError(f"{path}: trailing bytes")
        return cls(centroids, PQCodebook(codewords), list_token_ids, list_codes, offsets)
