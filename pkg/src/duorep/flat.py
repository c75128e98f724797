"""Exact inner-product search over one uncompressed vector per passage."""

from __future__ import annotations

import numpy as np

from .corpus import Ranking
from .embed import load_embeddings, write_embeddings


class FlatIndex:
    """Immutable n x dim float32 matrix with an ordinal <-> external id map."""

    def __init__(self, vectors: np.ndarray, ids: list[str]):
        vectors = np.asarray(vectors, dtype=np.float32)
        if vectors.ndim != 2 or vectors.shape[0] == 0:
            raise ValueError("vectors must be a non-empty 2-D array")
        if len(ids) != vectors.shape[0]:
            raise ValueError("one id per vector required")
        if not np.all(np.isfinite(vectors)):
            raise ValueError("vectors contain non-finite values")
        self.vectors = vectors
        self.ids = list(ids)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self) -> int:
        return self.vectors.shape[0]

    @classmethod
    def build(cls, vectors: list[np.ndarray], ids: list[str]) -> "FlatIndex":
        """Build from per-passage row vectors, validating a consistent dim."""
        if not vectors:
            raise ValueError("no vectors given")
        rows = []
        dim = None
        for ext_id, vec in zip(ids, vectors):
            row = np.asarray(vec, dtype=np.float32).reshape(-1)
            if dim is None:
                dim = row.shape[0]
            elif row.shape[0] != dim:
                raise ValueError(
                    f"vector for {ext_id!r} has dim {row.shape[0]}, expected {dim}"
                )
            rows.append(row)
        return cls(np.stack(rows), ids)

    def save(self, path) -> None:
        write_embeddings(path, self.ids, [row.reshape(1, -1) for row in self.vectors], "single")

    @classmethod
    def load(cls, path) -> "FlatIndex":
        mode, _dim, ids, matrices = load_embeddings(path)
        if mode != "single":
            raise ValueError(f"{path}: expected a single-representation embedding file")
        return cls(np.vstack(matrices), ids)


def search(index: FlatIndex, query: np.ndarray, k: int, qid: str = "") -> Ranking:
    """Exact top-min(k, n) by inner product, ties broken by ordinal ascending."""
    if k < 1:
        raise ValueError("k must be >= 1")
    q = np.asarray(query, dtype=np.float64).reshape(-1)
    if q.shape[0] != index.dim:
        raise ValueError(f"query dim {q.shape[0]} != index dim {index.dim}")
    # float64 accumulation stabilizes tie comparisons across platforms
    scores = index.vectors.astype(np.float64) @ q
    order = np.argsort(-scores, kind="stable")[: min(k, len(index))]
    return Ranking(qid, [(index.ids[i], float(scores[i])) for i in order])
