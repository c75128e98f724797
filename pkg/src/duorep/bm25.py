"""Inverted-index BM25 baseline.

Scores use the Lucene-style non-negative idf:
score(q, d) = sum over query term occurrences of
    idf(t) * tf * (k1 + 1) / (tf + k1 * (1 - b + b * len(d) / avg_len)),
    idf(t) = ln((N - df + 0.5) / (df + 0.5) + 1).
"""

from __future__ import annotations

import math
from collections import Counter

from .corpus import Ranking, TextCollection, tokenize

DEFAULT_K1 = 1.2
DEFAULT_B = 0.75


class SparseIndex:
    """Immutable postings over a passage collection."""

    def __init__(self, store: TextCollection):
        if len(store) == 0:
            raise ValueError("cannot build a sparse index over an empty store")
        self.ids = list(store.ids)
        self.N = len(store)
        self.postings: dict[str, list[tuple[int, int]]] = {}
        self.doc_lengths: list[int] = []
        for ordinal, text in enumerate(store.texts):
            counts = Counter(tokenize(text))
            self.doc_lengths.append(sum(counts.values()))
            for term in sorted(counts):
                self.postings.setdefault(term, []).append((ordinal, counts[term]))
        self.avg_doc_length = sum(self.doc_lengths) / self.N

    def df(self, term: str) -> int:
        return len(self.postings.get(term, ()))


def idf(index: SparseIndex, term: str) -> float:
    df = index.df(term)
    return math.log((index.N - df + 0.5) / (df + 0.5) + 1.0)


def search(
    index: SparseIndex,
    query_text: str,
    k: int,
    k1: float = DEFAULT_K1,
    b: float = DEFAULT_B,
    qid: str = "",
) -> Ranking:
    """Top-k passages with score > 0, descending; ties broken by ordinal ascending."""
    if k < 1:
        raise ValueError("k must be >= 1")
    scores: dict[int, float] = {}
    # additive over query term occurrences: duplicated terms count multiply
    for term, q_count in Counter(tokenize(query_text)).items():
        postings = index.postings.get(term)
        if not postings:
            continue
        term_idf = idf(index, term)
        for ordinal, tf in postings:
            norm = 1.0 - b + b * index.doc_lengths[ordinal] / index.avg_doc_length
            partial = term_idf * tf * (k1 + 1.0) / (tf + k1 * norm)
            scores[ordinal] = scores.get(ordinal, 0.0) + q_count * partial
    hits = [(ordinal, score) for ordinal, score in scores.items() if score > 0.0]
    hits.sort(key=lambda item: (-item[1], item[0]))
    return Ranking(qid, [(index.ids[ordinal], score) for ordinal, score in hits[:k]])
