"""Corpus, query, qrels and run-file ingestion in TREC-style interchange formats.

All structures are immutable after load and safe for concurrent readers.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field

logger = logging.getLogger(__name__)

# Runs of Unicode alphanumeric codepoints (\w minus the underscore).
_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


class ParseError(ValueError):
    """Malformed input file (carries path and line number in the message)."""


def tokenize(text: str) -> list[str]:
    """Lowercase and split on every non-alphanumeric codepoint, dropping empties."""
    return _TOKEN_RE.findall(text.lower())


class TextCollection:
    """Ordered id -> text mapping with contiguous internal ordinals.

    Used for both passage corpora and query sets; ordinals follow file order.
    """

    def __init__(self, ids: list[str], texts: list[str]):
        if len(ids) != len(texts):
            raise ValueError("ids and texts must have equal length")
        self.ids = list(ids)
        self.texts = list(texts)
        self._ordinals: dict[str, int] = {}
        for i, ext_id in enumerate(self.ids):
            if not ext_id:
                raise ValueError(f"empty id at ordinal {i}")
            if ext_id in self._ordinals:
                raise ValueError(f"duplicate id {ext_id!r}")
            self._ordinals[ext_id] = i

    def __len__(self) -> int:
        return len(self.ids)

    def __contains__(self, ext_id: str) -> bool:
        return ext_id in self._ordinals

    def ordinal(self, ext_id: str) -> int:
        return self._ordinals[ext_id]

    def text(self, ext_id: str) -> str:
        return self.texts[self._ordinals[ext_id]]

    def items(self):
        return zip(self.ids, self.texts)

    @classmethod
    def from_tsv(cls, path) -> "TextCollection":
        """Load `id<TAB>text` lines; duplicate ids and malformed lines are hard errors."""
        ids: list[str] = []
        texts: list[str] = []
        seen: dict[str, int] = {}
        with open(path, encoding="utf-8", newline="\n") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                fields = line.split("\t")
                if len(fields) != 2:
                    raise ParseError(
                        f"{path}:{lineno}: expected 2 tab-separated fields, got {len(fields)}"
                    )
                ext_id, text = fields
                if not ext_id:
                    raise ParseError(f"{path}:{lineno}: empty id")
                if ext_id in seen:
                    raise ParseError(
                        f"{path}:{lineno}: duplicate id {ext_id!r} (first seen on line {seen[ext_id]})"
                    )
                seen[ext_id] = lineno
                ids.append(ext_id)
                texts.append(text)
        return cls(ids, texts)


class Qrels:
    """Graded relevance judgments: (query id, passage id) -> grade >= 0."""

    def __init__(self):
        self._grades: dict[str, dict[str, int]] = {}
        self.duplicates_overwritten = 0

    def set(self, qid: str, pid: str, grade: int) -> None:
        if grade < 0:
            raise ValueError(f"negative grade {grade} for ({qid}, {pid})")
        per_query = self._grades.setdefault(qid, {})
        if pid in per_query:
            self.duplicates_overwritten += 1
        per_query[pid] = grade

    def grade(self, qid: str, pid: str) -> int:
        return self._grades.get(qid, {}).get(pid, 0)

    def judgments(self, qid: str) -> dict[str, int]:
        return self._grades.get(qid, {})

    def query_ids(self) -> list[str]:
        return list(self._grades.keys())

    def __len__(self) -> int:
        return sum(len(v) for v in self._grades.values())

    @classmethod
    def from_file(cls, path) -> "Qrels":
        """Load TREC qrels (`qid 0 pid grade`); later duplicates overwrite with a warning."""
        qrels = cls()
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                fields = line.split()
                if not fields:
                    continue
                if len(fields) != 4:
                    raise ParseError(
                        f"{path}:{lineno}: expected 4 whitespace-separated fields, got {len(fields)}"
                    )
                qid, _iter, pid, grade_str = fields
                try:
                    grade = int(grade_str)
                except ValueError:
                    raise ParseError(f"{path}:{lineno}: non-integer grade {grade_str!r}") from None
                if grade < 0:
                    raise ParseError(f"{path}:{lineno}: negative grade {grade}")
                qrels.set(qid, pid, grade)
        if qrels.duplicates_overwritten:
            logger.warning(
                "%s: %d duplicate (qid, pid) judgments overwritten (last wins)",
                path,
                qrels.duplicates_overwritten,
            )
        return qrels


@dataclass
class Ranking:
    """Ordered (passage id, score) list for one query, scores non-increasing."""

    qid: str
    items: list[tuple[str, float]] = field(default_factory=list)

    def validate(self) -> None:
        seen: set[str] = set()
        prev = None
        for pid, score in self.items:
            if pid in seen:
                raise ValueError(f"ranking for {self.qid!r}: duplicate passage id {pid!r}")
            seen.add(pid)
            if prev is not None and score > prev:
                raise ValueError(
                    f"ranking for {self.qid!r}: score {score!r} after {prev!r} violates descending order"
                )
            prev = score

    def __len__(self) -> int:
        return len(self.items)


def write_run(rankings: list[Ranking], tag: str, path) -> None:
    """Write TREC run lines `qid Q0 pid rank score tag` with 6-decimal scores.

    Rankings must already be sorted by descending score; violations are hard errors.
    """
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for ranking in rankings:
            ranking.validate()
            for rank, (pid, score) in enumerate(ranking.items, start=1):
                fh.write(f"{ranking.qid} Q0 {pid} {rank} {score:.6f} {tag}\n")


def read_run(path) -> list[Ranking]:
    """Parse a TREC run file back into per-query rankings, preserving file order."""
    rankings: list[Ranking] = []
    by_qid: dict[str, Ranking] = {}
    seen_pids: dict[str, set[str]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            fields = line.split()
            if not fields:
                continue
            if len(fields) != 6:
                raise ParseError(
                    f"{path}:{lineno}: expected 6 whitespace-separated fields, got {len(fields)}"
                )
            qid, _q0, pid, rank_str, score_str, _tag = fields
            try:
                int(rank_str)
                score = float(score_str)
            except ValueError:
                raise ParseError(f"{path}:{lineno}: malformed rank/score") from None
            ranking = by_qid.get(qid)
            if ranking is None:
                ranking = Ranking(qid)
                by_qid[qid] = ranking
                rankings.append(ranking)
                seen_pids[qid] = set()
            if pid in seen_pids[qid]:
                raise ParseError(f"{path}:{lineno}: duplicate passage id {pid!r} for query {qid!r}")
            seen_pids[qid].add(pid)
            ranking.items.append((pid, score))
    return rankings
