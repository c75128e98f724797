"""Command-line pipeline: index, search, evaluate, compare, explain.

Every command echoes its resolved parameters into a config.json beside its
output; any command with fixed inputs and seed writes byte-identical outputs.
Exit codes: 0 success, 2 validation/input error, 1 internal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import shutil
import sys
import time
from pathlib import Path

import numpy as np

from . import bm25, flat
from .corpus import ParseError, Qrels, Ranking, TextCollection, read_run, write_run
from .embed import EmbedderConfig, EmbeddingFileError, SyntheticEmbedder, load_embeddings
from .evalsuite import (
    compare_runs,
    evaluate_run,
    parse_metric,
    write_comparison_csvs,
    write_metrics_csv,
)
from .ivfpq import IVFPQIndex, default_nlist
from .lateinter import TokenStore, explain_interaction, two_stage_search

logger = logging.getLogger(__name__)

DEFAULT_DEPTH = 1000
DEFAULT_METRICS = "map,ndcg@10,mrr@10"


class CLIError(Exception):
    """User-facing validation failure (exit code 2)."""


def _write_config(path: Path, config: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(config, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _require_file(path_str: str, what: str) -> Path:
    path = Path(path_str)
    if not path.is_file():
        raise CLIError(f"{what} not found: {path}")
    return path


def _load_index_config(index_dir: Path) -> dict:
    config_path = index_dir / "config.json"
    if not config_path.is_file():
        raise CLIError(f"not an index directory (missing config.json): {index_dir}")
    with open(config_path, encoding="utf-8") as fh:
        return json.load(fh)


def _embedder_from_config(config: dict) -> SyntheticEmbedder:
    emb = config["embedder"]
    if emb["source"] != "synthetic":
        raise CLIError(
            "index was built from file embeddings; pass --query-embeddings to search it"
        )
    if config["mode"] == "single":
        cfg = EmbedderConfig.single(dim=emb["dim"], seed=emb["seed"])
    else:
        cfg = EmbedderConfig.multi(
            dim=emb["dim"], q_len=emb["q_len"], max_doc_tokens=emb["max_doc_tokens"],
            seed=emb["seed"],
        )
    return SyntheticEmbedder(cfg)


def _load_embedding_map(path: Path, expected_mode: str) -> tuple[int, dict[str, np.ndarray]]:
    mode, dim, ids, matrices = load_embeddings(path)
    if mode != expected_mode:
        raise CLIError(f"{path}: expected a {expected_mode}-representation embedding file")
    return dim, dict(zip(ids, matrices))


def _matrices_for(collection: TextCollection, by_id: dict[str, np.ndarray], path: Path) -> list[np.ndarray]:
    missing = [ext_id for ext_id in collection.ids if ext_id not in by_id]
    if missing:
        raise CLIError(f"{path}: missing embeddings for ids {missing[:10]}")
    return [by_id[ext_id] for ext_id in collection.ids]


# ---------------------------------------------------------------------------
# index


def cmd_index(args) -> int:
    corpus_path = _require_file(args.corpus, "corpus file")
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    store = TextCollection.from_tsv(corpus_path)
    if len(store) == 0:
        raise CLIError(f"corpus {corpus_path} is empty")

    config: dict = {"command": "index", "mode": args.mode, "corpus": str(corpus_path), "seed": args.seed}

    if args.mode == "bm25":
        shutil.copyfile(corpus_path, outdir / "corpus.tsv")
        config.update({"k1": args.k1, "b": args.b})

    elif args.mode == "single":
        dim = args.dim if args.dim is not None else 768
        if args.embeddings:
            emb_path = _require_file(args.embeddings, "embedding file")
            dim, by_id = _load_embedding_map(emb_path, "single")
            matrices = _matrices_for(store, by_id, emb_path)
            config["embedder"] = {"source": "file", "path": str(emb_path), "dim": dim}
        else:
            embedder = SyntheticEmbedder(EmbedderConfig.single(dim=dim, seed=args.seed))
            matrices = [embedder.embed_single(text) for text in store.texts]
            config["embedder"] = {"source": "synthetic", "dim": dim, "seed": args.seed}
        index = flat.FlatIndex(np.vstack(matrices), store.ids)
        index.save(outdir / "vectors.dve")

    else:  # multi
        dim = args.dim if args.dim is not None else 128
        token_texts: list[list[str]] | None = None
        if args.embeddings:
            emb_path = _require_file(args.embeddings, "embedding file")
            dim, by_id = _load_embedding_map(emb_path, "multi")
            matrices = _matrices_for(store, by_id, emb_path)
            config["embedder"] = {"source": "file", "path": str(emb_path), "dim": dim}
        else:
            embedder = SyntheticEmbedder(
                EmbedderConfig.multi(dim=dim, q_len=args.q_len,
                                     max_doc_tokens=args.max_doc_tokens, seed=args.seed)
            )
            from .corpus import tokenize

            matrices = [embedder.embed_passage_multi(text) for text in store.texts]
            token_texts = [
                tokenize(text)[: args.max_doc_tokens] or ["<empty>"] for text in store.texts
            ]
            config["embedder"] = {
                "source": "synthetic", "dim": dim, "seed": args.seed,
                "q_len": args.q_len, "max_doc_tokens": args.max_doc_tokens,
            }
        if dim % args.pq_m != 0:
            raise CLIError(f"--pq-m {args.pq_m}: m must divide dim (dim = {dim})")
        token_store = TokenStore.from_matrices(store.ids, matrices, token_texts)
        token_store.save(outdir / "tokens.mve", outdir / "tokens.offsets.json")
        nlist = args.nlist if args.nlist is not None else default_nlist(len(token_store.tokens))
        index = IVFPQIndex.build(
            token_store.tokens, token_store.offsets, nlist=nlist, m=args.pq_m,
            ks=args.pq_ks, sample_rate=args.sample_rate, iters=args.kmeans_iters,
            seed=args.seed,
        )
        index.save(outdir / "ivfpq.bin")
        config.update(
            {
                "nlist": index.nlist,
                "pq_m": index.codebook.m,
                "pq_ks": index.codebook.ks,
                "sample_rate": args.sample_rate,
                "kmeans_iters": args.kmeans_iters,
            }
        )

    _write_config(outdir / "config.json", config)
    print(f"indexed {len(store)} passages into {outdir} (mode={args.mode})")
    return 0


# ---------------------------------------------------------------------------
# search


def _search_timings(path: Path, times: list[float]) -> None:
    if not times:
        return
    arr = np.sort(np.asarray(times))
    stats = {
        "num_queries": len(times),
        "mean_ms": float(arr.mean() * 1000.0),
        "p95_ms": float(arr[min(len(arr) - 1, int(0.95 * len(arr)))] * 1000.0),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(stats, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"mean response time {stats['mean_ms']:.2f} ms, p95 {stats['p95_ms']:.2f} ms", file=sys.stderr)


def cmd_search(args) -> int:
    index_dir = Path(args.index)
    config = _load_index_config(index_dir)
    mode = config["mode"]
    queries = TextCollection.from_tsv(_require_file(args.queries, "queries file"))
    tag = args.tag or mode
    if any(ch.isspace() for ch in tag):
        raise CLIError(f"run tag {tag!r} must not contain whitespace")
    out_path = Path(args.out)
    if out_path.parent and not out_path.parent.exists():
        out_path.parent.mkdir(parents=True, exist_ok=True)

    query_matrices: dict[str, np.ndarray] | None = None
    if args.query_embeddings:
        expected = "single" if mode == "single" else "multi"
        qe_path = _require_file(args.query_embeddings, "query embedding file")
        _dim, query_matrices = _load_embedding_map(qe_path, expected)
        missing = [qid for qid in queries.ids if qid not in query_matrices]
        if missing:
            raise CLIError(f"{qe_path}: missing embeddings for queries {missing[:10]}")

    rankings: list[Ranking] = []
    times: list[float] = []

    if mode == "bm25":
        sparse = bm25.SparseIndex(TextCollection.from_tsv(index_dir / "corpus.tsv"))
        k1 = args.k1 if args.k1 is not None else config["k1"]
        b = args.b if args.b is not None else config["b"]
        for qid, text in queries.items():
            start = time.perf_counter()
            ranking = bm25.search(sparse, text, args.k, k1=k1, b=b, qid=qid)
            times.append(time.perf_counter() - start)
            if not ranking.items:
                logger.warning("query %s: no results", qid)
            rankings.append(ranking)

    elif mode == "single":
        index = flat.FlatIndex.load(index_dir / "vectors.dve")
        embedder = None if query_matrices is not None else _embedder_from_config(config)
        for qid, text in queries.items():
            if query_matrices is not None:
                q = query_matrices[qid][0]
            else:
                q = embedder.embed_single(text)[0]
            if not np.any(q):
                logger.warning("query %s: empty embedding, no results", qid)
                rankings.append(Ranking(qid, []))
                continue
            start = time.perf_counter()
            rankings.append(flat.search(index, q, args.k, qid=qid))
            times.append(time.perf_counter() - start)

    elif mode == "multi":
        index = IVFPQIndex.load(index_dir / "ivfpq.bin")
        store = TokenStore.load(index_dir / "tokens.mve", index_dir / "tokens.offsets.json")
        if index.dim != store.dim:
            raise CLIError(f"index dim {index.dim} != token store dim {store.dim}")
        nprobe = min(args.nprobe, index.nlist)  # small indexes have few lists
        if args.nprobe < 1:
            raise CLIError("--nprobe must be >= 1")
        embedder = None if query_matrices is not None else _embedder_from_config(config)
        for qid, text in queries.items():
            if query_matrices is not None:
                q = query_matrices[qid]
            else:
                q = embedder.embed_query_multi(text)
            if q.shape[1] != index.dim:
                raise CLIError(f"query dim {q.shape[1]} != index dim {index.dim}")
            start = time.perf_counter()
            ranking = two_stage_search(
                index, store, q, args.k, k_per_emb=args.k_per_emb, nprobe=nprobe, qid=qid
            )
            times.append(time.perf_counter() - start)
            if not ranking.items:
                logger.warning("query %s: no candidates", qid)
            rankings.append(ranking)
    else:
        raise CLIError(f"unknown index mode {mode!r}")

    write_run(rankings, tag, out_path)
    echo = {
        "command": "search", "index": str(index_dir), "queries": args.queries,
        "mode": mode, "k": args.k, "tag": tag,
        "k_per_emb": args.k_per_emb if mode == "multi" else None,
        "nprobe": nprobe if mode == "multi" else None,
    }
    _write_config(Path(str(out_path) + ".config.json"), echo)
    _search_timings(Path(str(out_path) + ".timings.json"), times)
    print(f"wrote {sum(len(r) for r in rankings)} result lines for {len(queries)} queries to {out_path}")
    return 0


# ---------------------------------------------------------------------------
# evaluate / compare


def _metric_list(spec: str) -> list[str]:
    names = [m.strip() for m in spec.split(",") if m.strip()]
    if not names:
        raise CLIError("empty metric list")
    for name in names:
        try:
            parse_metric(name)
        except ValueError as exc:
            raise CLIError(str(exc)) from None
    return names


def _run_tag(path: Path) -> str:
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            fields = line.split()
            if fields:
                return fields[5] if len(fields) == 6 else path.stem
    return path.stem


def cmd_evaluate(args) -> int:
    run = read_run(_require_file(args.run, "run file"))
    qrels = Qrels.from_file(_require_file(args.qrels, "qrels file"))
    metrics = _metric_list(args.metrics)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    results = evaluate_run(run, qrels, metrics, binarize_at=args.binarize_at, depth=args.depth)
    payload = {
        name: {
            "mean": res.mean,
            "num_queries": len(res.per_query),
            "excluded": res.excluded,
            "per_query": res.per_query,
        }
        for name, res in results.items()
    }
    with open(outdir / "metrics.json", "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    write_metrics_csv(results, outdir)
    _write_config(
        outdir / "config.json",
        {
            "command": "evaluate", "run": args.run, "qrels": args.qrels,
            "metrics": metrics, "binarize_at": args.binarize_at, "depth": args.depth,
        },
    )
    for name, res in results.items():
        print(f"{name}: {res.mean:.4f} over {len(res.per_query)} queries ({len(res.excluded)} excluded)")
    return 0


def _parse_difficulty(spec: str) -> tuple[str, float]:
    if spec == "quartile":
        return "quartile", 0.1
    if spec == "threshold":
        return "threshold", 0.1
    if spec.startswith("threshold:"):
        return "threshold", float(spec.split(":", 1)[1])
    raise CLIError(f"unknown difficulty mode {spec!r} (expected quartile or threshold[:T])")


def cmd_compare(args) -> int:
    baseline_path = _require_file(args.baseline, "baseline run")
    runs: dict[str, list[Ranking]] = {}
    baseline_tag = _run_tag(baseline_path)
    runs[baseline_tag] = read_run(baseline_path)
    for run_arg in args.runs:
        path = _require_file(run_arg, "run file")
        tag = _run_tag(path)
        if tag in runs:
            raise CLIError(f"duplicate run tag {tag!r}; retag one of the runs")
        runs[tag] = read_run(path)
    qrels = Qrels.from_file(_require_file(args.qrels, "qrels file"))
    metrics = _metric_list(args.metrics)
    mode, threshold = _parse_difficulty(args.difficulty)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    try:
        report = compare_runs(
            runs, baseline_tag, qrels, metrics, binarize_at=args.binarize_at,
            difficulty_mode=mode, difficulty_threshold=threshold,
            difficulty_metric=args.difficulty_metric, delta_metric=args.delta_metric,
            delta_threshold=args.delta_threshold, alpha=args.alpha,
        )
    except ValueError as exc:
        raise CLIError(str(exc)) from None
    with open(outdir / "report.json", "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    write_comparison_csvs(report, outdir)
    _write_config(
        outdir / "config.json",
        {
            "command": "compare", "baseline": args.baseline, "runs": list(args.runs),
            "qrels": args.qrels, "metrics": metrics, "binarize_at": args.binarize_at,
            "difficulty": args.difficulty, "difficulty_metric": report["difficulty"]["metric"],
            "delta_metric": args.delta_metric or metrics[0],
            "delta_threshold": args.delta_threshold, "alpha": args.alpha,
        },
    )
    for row in report["significance"]:
        marker = "*" if row["significant"] else " "
        print(
            f"{row['metric']}: {row['system_b']} vs {row['system_a']} "
            f"t={row['t']:.4f} p_adj={row['p_adjusted']:.6f} {marker}"
        )
    print(f"report written to {outdir}")
    return 0


# ---------------------------------------------------------------------------
# explain


def cmd_explain(args) -> int:
    index_dir = Path(args.index)
    config = _load_index_config(index_dir)
    if config["mode"] != "multi":
        raise CLIError("explain requires a multi-representation index")
    store = TokenStore.load(index_dir / "tokens.mve", index_dir / "tokens.offsets.json")
    if args.passage_id not in store.ids:
        raise CLIError(f"unknown passage id {args.passage_id!r}")
    ordinal = store.ids.index(args.passage_id)
    embedder = _embedder_from_config(config)
    Q = embedder.embed_query_multi(args.query_text)
    from .corpus import tokenize

    q_tokens = tokenize(args.query_text)[: embedder.config.q_len]
    q_labels = q_tokens + ["[pad]"] * (embedder.config.q_len - len(q_tokens))
    D = store.matrix(ordinal)
    if store.token_texts is not None:
        d_labels = list(store.token_texts[ordinal])
    else:
        d_labels = [f"tok{i}" for i in range(D.shape[0])]
    report = explain_interaction(Q, D, q_labels, d_labels)
    payload = json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(payload, encoding="utf-8")
        _write_config(
            Path(str(args.out) + ".config.json"),
            {
                "command": "explain", "index": str(index_dir),
                "query_text": args.query_text, "passage_id": args.passage_id,
            },
        )
        print(f"interaction report written to {args.out}")
    else:
        sys.stdout.write(payload)
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="duorep",
        description="Dual-family dense retrieval engine: BM25, single-representation "
        "exact search, and two-stage multi-representation max-sim search, with a "
        "comparison harness.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_index = sub.add_parser("index", help="build an index directory from a corpus")
    p_index.add_argument("--mode", choices=["bm25", "single", "multi"], required=True)
    p_index.add_argument("--corpus", required=True, help="TSV file of id<TAB>text")
    p_index.add_argument("--out", required=True, help="output index directory")
    p_index.add_argument("--seed", type=int, default=0, help="seed for embedder and training")
    p_index.add_argument("--embeddings", help="precomputed embedding file instead of the synthetic embedder")
    p_index.add_argument("--dim", type=int, default=None, help="synthetic dim (default 768 single / 128 multi)")
    p_index.add_argument("--q-len", type=int, default=32, help="multi: fixed query embedding count")
    p_index.add_argument("--max-doc-tokens", type=int, default=180, help="multi: passage token cap")
    p_index.add_argument("--nlist", type=int, default=None, help="multi: inverted lists (default 4*ceil(sqrt(n)), max 4096)")
    p_index.add_argument("--pq-m", type=int, default=16, help="multi: PQ subspaces; must divide dim")
    p_index.add_argument("--pq-ks", type=int, default=256, help="multi: codewords per subspace (max 256)")
    p_index.add_argument("--sample-rate", type=float, default=0.05, help="multi: training sample rate")
    p_index.add_argument("--kmeans-iters", type=int, default=25, help="multi: Lloyd iterations")
    p_index.add_argument("--k1", type=float, default=1.2, help="bm25: term-frequency saturation")
    p_index.add_argument("--b", type=float, default=0.75, help="bm25: length normalization")
    p_index.set_defaults(func=cmd_index)

    p_search = sub.add_parser("search", help="run queries against an index, write a TREC run")
    p_search.add_argument("--index", required=True, help="index directory")
    p_search.add_argument("--queries", required=True, help="TSV file of id<TAB>text")
    p_search.add_argument("--out", required=True, help="output run file")
    p_search.add_argument("--k", type=int, default=DEFAULT_DEPTH, help="retrieval depth")
    p_search.add_argument("--tag", default=None, help="run tag (default: index mode)")
    p_search.add_argument("--k-per-emb", type=int, default=100, help="multi: ANN hits per query embedding")
    p_search.add_argument("--nprobe", type=int, default=16, help="multi: inverted lists probed")
    p_search.add_argument("--query-embeddings", help="precomputed query embedding file")
    p_search.add_argument("--k1", type=float, default=None, help="bm25: override indexed k1")
    p_search.add_argument("--b", type=float, default=None, help="bm25: override indexed b")
    p_search.set_defaults(func=cmd_search)

    p_eval = sub.add_parser("evaluate", help="compute metrics for one run against qrels")
    p_eval.add_argument("--run", required=True)
    p_eval.add_argument("--qrels", required=True)
    p_eval.add_argument("--out", required=True, help="output directory")
    p_eval.add_argument("--metrics", default=DEFAULT_METRICS, help="comma list: map, ndcg@K, mrr@K")
    p_eval.add_argument("--binarize-at", type=int, default=1, help="min grade counted relevant for MAP/MRR")
    p_eval.add_argument("--depth", type=int, default=DEFAULT_DEPTH, help="evaluation depth")
    p_eval.set_defaults(func=cmd_evaluate)

    p_cmp = sub.add_parser("compare", help="compare runs against a baseline run")
    p_cmp.add_argument("--baseline", required=True, help="baseline run file")
    p_cmp.add_argument("--runs", nargs="+", required=True, help="system run files")
    p_cmp.add_argument("--qrels", required=True)
    p_cmp.add_argument("--out", required=True, help="output directory")
    p_cmp.add_argument("--metrics", default=DEFAULT_METRICS)
    p_cmp.add_argument("--binarize-at", type=int, default=1)
    p_cmp.add_argument("--difficulty", default="quartile", help="quartile or threshold[:T]")
    p_cmp.add_argument("--difficulty-metric", default=None, help="metric for difficulty classes (default: first metric)")
    p_cmp.add_argument("--delta-metric", default=None, help="metric for the per-query delta report")
    p_cmp.add_argument("--delta-threshold", type=float, default=0.15, help="omit |delta| below this")
    p_cmp.add_argument("--alpha", type=float, default=0.05, help="significance level on adjusted p")
    p_cmp.set_defaults(func=cmd_compare)

    p_exp = sub.add_parser("explain", help="interaction matrix for one query/passage pair")
    p_exp.add_argument("--index", required=True, help="multi-representation index directory")
    p_exp.add_argument("--query-text", required=True)
    p_exp.add_argument("--passage-id", required=True)
    p_exp.add_argument("--out", default=None, help="output JSON file (default: stdout)")
    p_exp.set_defaults(func=cmd_explain)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CLIError, ParseError, EmbeddingFileError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, KeyError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
