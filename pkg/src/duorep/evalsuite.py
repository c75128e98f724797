"""Retrieval evaluation metrics and the full system-comparison methodology.

Per-query metrics (NDCG@k, MAP, RR@k), paired t-tests with Bonferroni
correction, query difficulty partitions (quartile or threshold), win/loss
with reward/risk per difficulty class, and per-query delta reports.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np
from scipy.special import betainc

from .corpus import Qrels, Ranking

EVAL_DEPTH = 1000
SIGNIFICANCE_ALPHA = 0.05
DELTA_OMIT_BELOW = 0.15
HARD, MEDIUM, EASY = "hard", "medium", "easy"


def dcg(grades: list[int]) -> float:
    return sum(g / math.log2(r + 1) for r, g in enumerate(grades, start=1))


def ndcg_at(items: list[tuple[str, float]], judgments: dict[str, int], cutoff: int = 10) -> float:
    """DCG over the top cutoff (unjudged = grade 0) divided by the ideal DCG."""
    ideal = sorted((g for g in judgments.values() if g > 0), reverse=True)[:cutoff]
    if not ideal:
        raise ValueError("ndcg requires at least one positive judgment")
    gains = [judgments.get(pid, 0) for pid, _ in items[:cutoff]]
    return dcg(gains) / dcg(ideal)


def average_precision(items: list[tuple[str, float]], judgments: dict[str, int],
                      binarize_at: int = 1, depth: int = EVAL_DEPTH) -> float:
    """Mean of precision at each relevant rank; unretrieved relevant docs count 0."""
    relevant = {pid for pid, g in judgments.items() if g >= binarize_at}
    if not relevant:
        raise ValueError("average precision requires at least one relevant document")
    hits = 0
    total = 0.0
    for rank, (pid, _) in enumerate(items[:depth], start=1):
        if pid in relevant:
            hits += 1
            total += hits / rank
    return total / len(relevant)


def rr_at(items: list[tuple[str, float]], judgments: dict[str, int], cutoff: int = 10,
          binarize_at: int = 1) -> float:
    """Reciprocal rank of the first relevant document within cutoff, else 0."""
    for rank, (pid, _) in enumerate(items[:cutoff], start=1):
        if judgments.get(pid, 0) >= binarize_at:
            return 1.0 / rank
    return 0.0


def paired_t_test(deltas) -> tuple[float, float]:
    """Two-sided paired t-test: t = mean / (sd / sqrt(n)), sd with n-1 dof.

    p comes from the Student-t CDF via the regularized incomplete beta.
    """
    d = np.asarray(deltas, dtype=np.float64)
    n = d.shape[0]
    if n < 2:
        raise ValueError("paired t-test needs at least 2 paired observations")
    mean = float(d.mean())
    sd = float(d.std(ddof=1))
    if sd == 0.0:
        if mean == 0.0:
            return 0.0, 1.0
        return math.copysign(math.inf, mean), 0.0
    t = mean / (sd / math.sqrt(n))
    df = n - 1
    p = float(betainc(0.5 * df, 0.5, df / (df + t * t)))
    return t, p


def bonferroni(p: float, num_tests: int) -> float:
    if num_tests < 1:
        raise ValueError("num_tests must be >= 1")
    return min(1.0, p * num_tests)


@dataclass
class DifficultyPartition:
    mode: str
    classes: dict[str, str]  # query id -> hard | medium | easy
    counts: dict[str, int]

    def members(self, cls: str) -> list[str]:
        return [qid for qid, c in self.classes.items() if c == cls]


def classify_quartile(baseline_scores: dict[str, float]) -> DifficultyPartition:
    """Hard = lowest ceil(n/4) baseline scores, easy = highest ceil(n/4), rest medium.

    Ties order by query id ascending.
    """
    n = len(baseline_scores)
    if n < 4:
        raise ValueError(f"quartile classification needs >= 4 judged queries, got {n}")
    ordered = sorted(baseline_scores, key=lambda qid: (baseline_scores[qid], qid))
    quart = math.ceil(n / 4)
    classes: dict[str, str] = {}
    for i, qid in enumerate(ordered):
        if i < quart:
            classes[qid] = HARD
        elif i >= n - quart:
            classes[qid] = EASY
        else:
            classes[qid] = MEDIUM
    counts = {HARD: quart, MEDIUM: n - 2 * quart, EASY: quart}
    return DifficultyPartition("quartile", classes, counts)


def classify_threshold(baseline_scores: dict[str, float], threshold: float = 0.1) -> DifficultyPartition:
    """Hard iff baseline score <= threshold (inclusive), else easy."""
    classes = {qid: (HARD if score <= threshold else EASY) for qid, score in baseline_scores.items()}
    counts = {
        HARD: sum(1 for c in classes.values() if c == HARD),
        EASY: sum(1 for c in classes.values() if c == EASY),
    }
    return DifficultyPartition("threshold", classes, counts)


@dataclass
class RiskRewardRow:
    cls: str
    num: int
    wins: int
    losses: int
    reward: float | None  # mean positive delta, None when wins = 0
    risk: float | None  # mean negative delta, None when losses = 0


def win_loss_reward_risk(baseline: dict[str, float], system: dict[str, float],
                         partition: DifficultyPartition) -> list[RiskRewardRow]:
    """Per difficulty class: wins/losses vs the baseline and mean reward/risk."""
    if set(baseline) != set(system):
        offending = sorted(set(baseline) ^ set(system))
        raise ValueError(f"mismatched query sets: {offending}")
    rows = []
    for cls in (EASY, MEDIUM, HARD):
        qids = [qid for qid in partition.classes if partition.classes[qid] == cls]
        if not qids and cls not in partition.counts:
            continue
        deltas = [system[q] - baseline[q] for q in sorted(qids)]
        pos = [d for d in deltas if d > 0]
        neg = [d for d in deltas if d < 0]
        rows.append(
            RiskRewardRow(
                cls=cls,
                num=len(qids),
                wins=len(pos),
                losses=len(neg),
                reward=sum(pos) / len(pos) if pos else None,
                risk=sum(neg) / len(neg) if neg else None,
            )
        )
    return rows


def delta_report(per_query_a: dict[str, float], per_query_b: dict[str, float],
                 omit_below: float = DELTA_OMIT_BELOW) -> list[tuple[str, float]]:
    """Per-query deltas B - A with |delta| >= omit_below, sorted descending."""
    if set(per_query_a) != set(per_query_b):
        offending = sorted(set(per_query_a) ^ set(per_query_b))
        raise ValueError(f"mismatched query sets: {offending}")
    deltas = [(qid, per_query_b[qid] - per_query_a[qid]) for qid in per_query_a]
    kept = [(qid, d) for qid, d in deltas if abs(d) >= omit_below]
    kept.sort(key=lambda item: (-item[1], item[0]))
    return kept


# ---------------------------------------------------------------------------
# Metric evaluation over runs


def parse_metric(name: str) -> tuple[str, int | None]:
    """'map' | 'ndcg@K' | 'mrr@K' -> (kind, cutoff)."""
    name = name.strip().lower()
    if name == "map":
        return "map", None
    for kind, default in (("ndcg", 10), ("mrr", 10)):
        if name == kind:
            return kind, default
        if name.startswith(kind + "@"):
            cutoff = int(name[len(kind) + 1 :])
            if cutoff < 1:
                raise ValueError(f"bad cutoff in metric {name!r}")
            return kind, cutoff
    raise ValueError(f"unknown metric {name!r} (expected map, ndcg@K or mrr@K)")


@dataclass
class MetricResult:
    metric: str
    per_query: dict[str, float]
    mean: float
    excluded: list[str]  # run queries without a qualifying positive judgment


def _eligible(kind: str, judgments: dict[str, int], binarize_at: int) -> bool:
    if not judgments:
        return False
    if kind == "ndcg":
        return any(g > 0 for g in judgments.values())
    return any(g >= binarize_at for g in judgments.values())


def evaluate_run(rankings: list[Ranking], qrels: Qrels, metrics: list[str],
                 binarize_at: int = 1, depth: int = EVAL_DEPTH) -> dict[str, MetricResult]:
    """Per-query metric values and means over one run.

    Queries without a qualifying positive judgment are excluded from the mean
    and reported in the result's excluded list.
    """
    results: dict[str, MetricResult] = {}
    for name in metrics:
        kind, cutoff = parse_metric(name)
        per_query: dict[str, float] = {}
        excluded: list[str] = []
        for ranking in rankings:
            judgments = qrels.judgments(ranking.qid)
            if not _eligible(kind, judgments, binarize_at):
                excluded.append(ranking.qid)
                continue
            items = ranking.items[:depth]
            if kind == "ndcg":
                value = ndcg_at(items, judgments, cutoff)
            elif kind == "map":
                value = average_precision(items, judgments, binarize_at, depth)
            else:
                value = rr_at(items, judgments, cutoff, binarize_at)
            per_query[ranking.qid] = value
        mean = sum(per_query.values()) / len(per_query) if per_query else 0.0
        results[name] = MetricResult(name, per_query, mean, excluded)
    return results


# ---------------------------------------------------------------------------
# Comparison report


def compare_runs(runs: dict[str, list[Ranking]], baseline: str, qrels: Qrels,
                 metrics: list[str], binarize_at: int = 1,
                 difficulty_mode: str = "quartile", difficulty_threshold: float = 0.1,
                 difficulty_metric: str | None = None, delta_metric: str | None = None,
                 delta_threshold: float = DELTA_OMIT_BELOW,
                 alpha: float = SIGNIFICANCE_ALPHA) -> dict:
    """Full comparison of systems against a named baseline run.

    All runs must cover identical query sets. Bonferroni correction uses the
    number of pairwise tests performed for the same metric.
    """
    if baseline not in runs:
        raise ValueError(f"baseline {baseline!r} not among runs {sorted(runs)}")
    tags = list(runs)
    base_qids = {r.qid for r in runs[baseline]}
    for tag in tags:
        qids = {r.qid for r in runs[tag]}
        if qids != base_qids:
            offending = sorted(qids ^ base_qids)
            raise ValueError(f"query sets of {tag!r} and {baseline!r} differ: {offending}")

    evaluated = {tag: evaluate_run(runs[tag], qrels, metrics, binarize_at) for tag in tags}
    difficulty_metric = difficulty_metric or metrics[0]
    delta_metric = delta_metric or metrics[0]
    for extra in (difficulty_metric, delta_metric):
        if extra not in metrics:
            for tag in tags:
                evaluated[tag].update(evaluate_run(runs[tag], qrels, [extra], binarize_at))

    metric_table = {
        tag: {
            name: {
                "mean": res.mean,
                "num_queries": len(res.per_query),
                "num_excluded": len(res.excluded),
            }
            for name, res in evaluated[tag].items()
        }
        for tag in tags
    }
    per_query = {
        name: {tag: evaluated[tag][name].per_query for tag in tags}
        for name in evaluated[baseline]
    }

    pairs = list(combinations(tags, 2))
    significance = []
    for name in metrics:
        num_tests = len(pairs)
        for tag_a, tag_b in pairs:
            pq_a = evaluated[tag_a][name].per_query
            pq_b = evaluated[tag_b][name].per_query
            common = sorted(set(pq_a) & set(pq_b))
            deltas = [pq_b[q] - pq_a[q] for q in common]
            t, p = paired_t_test(deltas)
            p_adj = bonferroni(p, num_tests)
            significance.append(
                {
                    "metric": name,
                    "system_a": tag_a,
                    "system_b": tag_b,
                    "num_queries": len(common),
                    "t": t,
                    "p": p,
                    "p_adjusted": p_adj,
                    "num_tests": num_tests,
                    "significant": p_adj < alpha,
                }
            )

    baseline_scores = evaluated[baseline][difficulty_metric].per_query
    if difficulty_mode == "quartile":
        partition = classify_quartile(baseline_scores)
    elif difficulty_mode == "threshold":
        partition = classify_threshold(baseline_scores, difficulty_threshold)
    else:
        raise ValueError(f"unknown difficulty mode {difficulty_mode!r}")

    risk_reward = []
    for tag in tags:
        if tag == baseline:
            continue
        rows = win_loss_reward_risk(
            baseline_scores, evaluated[tag][difficulty_metric].per_query, partition
        )
        for row in rows:
            risk_reward.append(
                {
                    "system": tag,
                    "metric": difficulty_metric,
                    "class": row.cls,
                    "num": row.num,
                    "wins": row.wins,
                    "losses": row.losses,
                    "reward": row.reward,
                    "risk": row.risk,
                }
            )

    deltas_out = []
    for tag_a, tag_b in pairs:
        entries = delta_report(
            evaluated[tag_a][delta_metric].per_query,
            evaluated[tag_b][delta_metric].per_query,
            delta_threshold,
        )
        deltas_out.append(
            {
                "system_a": tag_a,
                "system_b": tag_b,
                "metric": delta_metric,
                "omit_below": delta_threshold,
                "entries": [[qid, d] for qid, d in entries],
            }
        )

    diagnostics = {
        "excluded_queries": {
            tag: {name: evaluated[tag][name].excluded for name in evaluated[tag]}
            for tag in tags
        },
        "qrels_duplicates_overwritten": qrels.duplicates_overwritten,
    }
    return {
        "baseline": baseline,
        "systems": [t for t in tags if t != baseline],
        "metrics": metric_table,
        "per_query": per_query,
        "significance": significance,
        "difficulty": {
            "mode": partition.mode,
            "metric": difficulty_metric,
            "threshold": difficulty_threshold if difficulty_mode == "threshold" else None,
            "classes": partition.classes,
            "counts": partition.counts,
        },
        "risk_reward": risk_reward,
        "deltas": deltas_out,
        "diagnostics": diagnostics,
    }


# ---------------------------------------------------------------------------
# CSV export


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_csv(path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def write_comparison_csvs(report: dict, outdir) -> None:
    """One CSV per report table: metrics, significance, risk/reward, deltas, difficulty."""
    _write_csv(
        outdir / "metrics.csv",
        ["system", "metric", "mean", "num_queries", "num_excluded"],
        [
            [tag, name, cell["mean"], cell["num_queries"], cell["num_excluded"]]
            for tag, table in report["metrics"].items()
            for name, cell in table.items()
        ],
    )
    _write_csv(
        outdir / "significance.csv",
        ["metric", "system_a", "system_b", "num_queries", "t", "p", "p_adjusted", "num_tests", "significant"],
        [
            [s["metric"], s["system_a"], s["system_b"], s["num_queries"], s["t"], s["p"],
             s["p_adjusted"], s["num_tests"], s["significant"]]
            for s in report["significance"]
        ],
    )
    _write_csv(
        outdir / "risk_reward.csv",
        ["system", "metric", "class", "num", "wins", "losses", "reward", "risk"],
        [
            [r["system"], r["metric"], r["class"], r["num"], r["wins"], r["losses"], r["reward"], r["risk"]]
            for r in report["risk_reward"]
        ],
    )
    _write_csv(
        outdir / "deltas.csv",
        ["system_a", "system_b", "metric", "qid", "delta"],
        [
            [d["system_a"], d["system_b"], d["metric"], qid, delta]
            for d in report["deltas"]
            for qid, delta in d["entries"]
        ],
    )
    _write_csv(
        outdir / "difficulty.csv",
        ["qid", "class"],
        [[qid, cls] for qid, cls in report["difficulty"]["classes"].items()],
    )


def write_metrics_csv(results: dict[str, MetricResult], outdir) -> None:
    """CSV tables for a single-run evaluation: summary plus per-query values."""
    _write_csv(
        outdir / "metrics.csv",
        ["metric", "mean", "num_queries", "num_excluded"],
        [[name, res.mean, len(res.per_query), len(res.excluded)] for name, res in results.items()],
    )
    _write_csv(
        outdir / "per_query.csv",
        ["metric", "qid", "value"],
        [
            [name, qid, value]
            for name, res in results.items()
            for qid, value in res.per_query.items()
        ],
    )
