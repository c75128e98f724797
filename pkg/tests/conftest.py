import numpy as np
import pytest


@pytest.fixture(scope="session")
def desk_corpus():
    """30 deterministic passages mixing topical words with filler."""
    rng = np.random.Generator(np.random.PCG64(202))
    topics = ["dysarthria", "cerebral", "palsy", "submarine", "warfare", "zimmermann"]
    filler = [f"filler{i}" for i in range(25)]
    lines = []
    for i in range(30):
        words = rng.choice(filler, size=5).tolist()
        if i % 3 == 0:
            words += rng.choice(topics, size=2).tolist()
        lines.append((f"p{i}", " ".join(words)))
    lines.append(("pboth", "types of dysarthria from cerebral palsy explained"))
    lines.append(("pone", "cerebral palsy cerebral palsy overview"))
    return lines


@pytest.fixture(scope="session")
def desk_queries():
    return [
        ("q1", "dysarthria cerebral palsy"),
        ("q2", "submarine warfare zimmermann"),
        ("q3", "filler3 filler7"),
        ("q4", "!!!"),
        ("q5", "types of dysarthria"),
    ]


@pytest.fixture()
def corpus_tsv(tmp_path, desk_corpus):
    path = tmp_path / "corpus.tsv"
    path.write_text("".join(f"{pid}\t{text}\n" for pid, text in desk_corpus), encoding="utf-8")
    return path


@pytest.fixture()
def queries_tsv(tmp_path, desk_queries):
    path = tmp_path / "queries.tsv"
    path.write_text("".join(f"{qid}\t{text}\n" for qid, text in desk_queries), encoding="utf-8")
    return path


@pytest.fixture()
def qrels_file(tmp_path):
    path = tmp_path / "judgments.qrels"
    lines = [
        "q1 0 pboth 3",
        "q1 0 pone 1",
        "q1 0 p0 0",
        "q2 0 p6 2",
        "q3 0 p3 1",
        "q5 0 pboth 2",
    ]
    path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    return path
