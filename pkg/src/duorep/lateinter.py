"""Two-stage multiple-representation retrieval.

Stage 1 generates candidate passages from approximate nearest-neighbor hits
per query embedding; stage 2 re-scores every candidate exactly with max-sim
against its full token matrix (approximate scores are never reused).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import kernels
from .corpus import Ranking
from .embed import load_embeddings, write_embeddings
from .ivfpq import IVFPQIndex


class TokenStore:
    """Direct-lookup store of per-passage token embeddings.

    Passage ordinal p owns rows offsets[p]..offsets[p+1] of the contiguous
    token array; ranges are non-empty and partition the array.
    """

    def __init__(self, tokens: np.ndarray, offsets: np.ndarray, ids: list[str],
                 token_texts: list[list[str]] | None = None):
        self.tokens = np.ascontiguousarray(tokens, dtype=np.float32)
        self.offsets = np.asarray(offsets, dtype=np.int64)
        self.ids = list(ids)
        self.token_texts = token_texts
        if len(self.offsets) != len(self.ids) + 1:
            raise ValueError("offsets must have one more entry than ids")
        if self.offsets[0] != 0 or self.offsets[-1] != len(self.tokens):
            raise ValueError("offsets must span the token array exactly")
        if np.any(np.diff(self.offsets) < 1):
            raise ValueError("every passage needs a non-empty token range")

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def dim(self) -> int:
        return self.tokens.shape[1]

    def matrix(self, ordinal: int) -> np.ndarray:
        if not 0 <= ordinal < len(self.ids):
            raise KeyError(f"passage ordinal {ordinal} not in store")
        return self.tokens[self.offsets[ordinal] : self.offsets[ordinal + 1]]

    def max_tokens_per_passage(self) -> int:
        return int(np.diff(self.offsets).max())

    @classmethod
    def from_matrices(cls, ids: list[str], matrices: list[np.ndarray],
                      token_texts: list[list[str]] | None = None) -> "TokenStore":
        offsets = np.zeros(len(matrices) + 1, dtype=np.int64)
        for i, mat in enumerate(matrices):
            offsets[i + 1] = offsets[i] + mat.shape[0]
        return cls(np.vstack(matrices), offsets, ids, token_texts)

    def save(self, embeddings_path, sidecar_path) -> None:
        matrices = [self.matrix(i) for i in range(len(self))]
        write_embeddings(embeddings_path, self.ids, matrices, "multi")
        sidecar = {
            "offsets": [int(v) for v in self.offsets],
            "token_texts": self.token_texts,
        }
        with open(sidecar_path, "w", encoding="utf-8") as fh:
            json.dump(sidecar, fh)
            fh.write("\n")

    @classmethod
    def load(cls, embeddings_path, sidecar_path) -> "TokenStore":
        mode, _dim, ids, matrices = load_embeddings(embeddings_path)
        if mode != "multi":
            raise ValueError(f"{embeddings_path}: expected a multi-representation file")
        with open(sidecar_path, encoding="utf-8") as fh:
            sidecar = json.load(fh)
        store = cls.from_matrices(ids, matrices, sidecar.get("token_texts"))
        if [int(v) for v in sidecar["offsets"]] != [int(v) for v in store.offsets]:
            raise ValueError(f"{sidecar_path}: offsets disagree with {embeddings_path}")
        return store


def maxsim_score(Q: np.ndarray, D: np.ndarray) -> float:
    """sum_i max_j Q_i . D_j; zero query rows contribute exactly 0 for unit D rows."""
    return kernels.maxsim(Q, D)


def generate_candidates(index: IVFPQIndex, Q: np.ndarray, k_per_emb: int,
                        nprobe: int) -> np.ndarray:
    """Union of passage ordinals owning the approximate nearest tokens per query row.

    Zero rows contribute nothing; the result is sorted ascending.
    """
    if k_per_emb < 1:
        raise ValueError("k_per_emb must be >= 1")
    Q = np.asarray(Q)
    hit_tids: list[int] = []
    for row in Q:
        if not np.any(row):
            continue
        hit_tids.extend(tid for tid, _ in index.search(row, k_per_emb, nprobe))
    if not hit_tids:
        return np.empty(0, dtype=np.int64)
    tids = np.unique(np.asarray(hit_tids, dtype=np.int64))
    ordinals = np.searchsorted(index.passage_offsets, tids, side="right") - 1
    return np.unique(ordinals)


def rank_candidates(store: TokenStore, Q: np.ndarray, candidates: np.ndarray, k: int,
                    qid: str = "") -> Ranking:
    """Exact max-sim over each candidate's full token matrix; top-k, ties by ordinal."""
    if k < 1:
        raise ValueError("k must be >= 1")
    candidates = np.asarray(candidates, dtype=np.int64)
    if candidates.size == 0:
        return Ranking(qid, [])
    if candidates.min() < 0 or candidates.max() >= len(store):
        missing = candidates[(candidates < 0) | (candidates >= len(store))]
        raise KeyError(f"candidate ordinals not in store: {missing.tolist()}")
    candidates = np.sort(candidates)
    scores = kernels.maxsim_batch(Q, store.tokens, store.offsets, candidates)
    order = np.lexsort((candidates, -scores))[:k]
    return Ranking(qid, [(store.ids[candidates[i]], float(scores[i])) for i in order])


def two_stage_search(index: IVFPQIndex, store: TokenStore, Q: np.ndarray, k: int,
                     k_per_emb: int = 100, nprobe: int = 16, qid: str = "") -> Ranking:
    candidates = generate_candidates(index, Q, k_per_emb, nprobe)
    return rank_candidates(store, Q, candidates, k, qid=qid)


@dataclass
class InteractionReport:
    """Full query x document similarity matrix with per-query-row attribution."""

    query_tokens: list[str]
    doc_tokens: list[str]
    matrix: np.ndarray  # (q_len, d_len) float64
    argmax: list[int]  # per query row: doc row with the highest similarity
    contributions: list[float]  # per query row: its max similarity
    score: float

    def to_dict(self) -> dict:
        return {
            "query_tokens": self.query_tokens,
            "doc_tokens": self.doc_tokens,
            "matrix": [[float(v) for v in row] for row in self.matrix],
            "argmax": self.argmax,
            "contributions": self.contributions,
            "score": self.score,
        }


def explain_interaction(Q: np.ndarray, D: np.ndarray, q_labels: list[str],
                        d_labels: list[str]) -> InteractionReport:
    Q = np.asarray(Q, dtype=np.float64)
    D = np.asarray(D, dtype=np.float64)
    if Q.shape[1] != D.shape[1]:
        raise ValueError(f"dim mismatch: query {Q.shape[1]} vs document {D.shape[1]}")
    if len(q_labels) != Q.shape[0]:
        raise ValueError(f"{len(q_labels)} query labels for {Q.shape[0]} rows")
    if len(d_labels) != D.shape[0]:
        raise ValueError(f"{len(d_labels)} document labels for {D.shape[0]} rows")
    matrix = Q @ D.T
    argmax = matrix.argmax(axis=1)
    contributions = matrix[np.arange(matrix.shape[0]), argmax]
    return InteractionReport(
        query_tokens=list(q_labels),
        doc_tokens=list(d_labels),
        matrix=matrix,
        argmax=[int(i) for i in argmax],
        contributions=[float(v) for v in contributions],
        score=float(contributions.sum()),
    )
