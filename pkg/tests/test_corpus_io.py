import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from duorep.corpus import (
    ParseError,
    Qrels,
    Ranking,
    TextCollection,
    read_run,
    tokenize,
    write_run,
)


class TestTokenize:
    def test_basic(self):
        assert tokenize("Types of Dysarthria") == ["types", "of", "dysarthria"]

    def test_empty(self):
        assert tokenize("") == []

    def test_msmarco_query(self):
        assert tokenize("why did the us volunterilay enter ww1") == [
            "why", "did", "the", "us", "volunterilay", "enter", "ww1",
        ]

    def test_punctuation_and_digits(self):
        assert tokenize("a-b_c 1.5%") == ["a", "b", "c", "1", "5"]

    @given(st.text(max_size=80))
    @settings(max_examples=200)
    def test_tokens_are_lowercase_alnum(self, text):
        for tok in tokenize(text):
            assert tok
            assert all(ch.isalnum() for ch in tok)
            assert tok == tok.lower()

    @given(st.text(max_size=80))
    @settings(max_examples=100)
    def test_pure_function(self, text):
        assert tokenize(text) == tokenize(text)


class TestCorpusParsing:
    def test_two_lines(self, tmp_path):
        path = tmp_path / "c.tsv"
        path.write_text("7\tfirst passage\n8\tsecond passage\n", encoding="utf-8")
        store = TextCollection.from_tsv(path)
        assert len(store) == 2
        assert store.ordinal("7") == 0
        assert store.ordinal("8") == 1
        assert store.text("8") == "second passage"

    def test_duplicate_id(self, tmp_path):
        path = tmp_path / "c.tsv"
        path.write_text("7\ta\n7\tb\n", encoding="utf-8")
        with pytest.raises(ParseError, match="'7'"):
            TextCollection.from_tsv(path)

    def test_three_fields(self, tmp_path):
        path = tmp_path / "c.tsv"
        path.write_text("1\ta\n2\tb\textra\n", encoding="utf-8")
        with pytest.raises(ParseError, match=":2:"):
            TextCollection.from_tsv(path)

    def test_empty_text_allowed(self, tmp_path):
        path = tmp_path / "c.tsv"
        path.write_text("1\t\n", encoding="utf-8")
        store = TextCollection.from_tsv(path)
        assert store.text("1") == ""

    def test_ordinal_bijection(self, tmp_path):
        path = tmp_path / "c.tsv"
        path.write_text("".join(f"id{i}\ttext {i}\n" for i in range(20)), encoding="utf-8")
        store = TextCollection.from_tsv(path)
        assert sorted(store.ordinal(i) for i in store.ids) == list(range(20))


class TestQrels:
    def test_basic(self, tmp_path):
        path = tmp_path / "q.qrels"
        path.write_text("q1 0 d1 2\n", encoding="utf-8")
        qrels = Qrels.from_file(path)
        assert qrels.grade("q1", "d1") == 2
        assert qrels.grade("q1", "dX") == 0

    def test_duplicate_last_wins(self, tmp_path):
        path = tmp_path / "q.qrels"
        path.write_text("q1 0 d1 1\nq1 0 d1 3\n", encoding="utf-8")
        qrels = Qrels.from_file(path)
        assert qrels.grade("q1", "d1") == 3
        assert qrels.duplicates_overwritten == 1

    def test_non_integer_grade(self, tmp_path):
        path = tmp_path / "q.qrels"
        path.write_text("q1 0 d1 x\n", encoding="utf-8")
        with pytest.raises(ParseError, match=":1:"):
            Qrels.from_file(path)


class TestRunFiles:
    def test_line_format(self, tmp_path):
        path = tmp_path / "run.txt"
        write_run([Ranking("q1", [("d1", 2.5)])], "bm25", path)
        assert path.read_text(encoding="utf-8") == "q1 Q0 d1 1 2.500000 bm25\n"

    def test_round_trip(self, tmp_path):
        path = tmp_path / "run.txt"
        original = Ranking("q1", [("d1", 0.9), ("d2", 0.5), ("d3", 0.100001)])
        write_run([original], "sys", path)
        parsed = read_run(path)
        assert len(parsed) == 1
        assert [pid for pid, _ in parsed[0].items] == ["d1", "d2", "d3"]
        for (_, got), (_, want) in zip(parsed[0].items, original.items):
            assert got == pytest.approx(want, abs=1e-6)

    def test_descending_violation(self, tmp_path):
        path = tmp_path / "run.txt"
        with pytest.raises(ValueError, match="descending"):
            write_run([Ranking("q1", [("d1", 0.1), ("d2", 0.9)])], "x", path)

    def test_parse_malformed(self, tmp_path):
        path = tmp_path / "run.txt"
        path.write_text("q1 Q0 d1 1 0.5\n", encoding="utf-8")
        with pytest.raises(ParseError, match=":1:"):
            read_run(path)

    def test_parse_duplicate_pid(self, tmp_path):
        path = tmp_path / "run.txt"
        path.write_text("q1 Q0 d1 1 0.900000 t\nq1 Q0 d1 2 0.500000 t\n", encoding="utf-8")
        with pytest.raises(ParseError, match="duplicate"):
            read_run(path)

    @given(
        entries=st.lists(
            st.tuples(st.integers(0, 999), st.floats(-100, 100, allow_nan=False)),
            min_size=1,
            max_size=30,
            unique_by=lambda t: t[0],
        )
    )
    @settings(max_examples=50)
    def test_round_trip_property(self, entries, tmp_path_factory):
        path = tmp_path_factory.mktemp("runs") / "run.txt"
        entries = sorted(entries, key=lambda t: -t[1])
        ranking = Ranking("q", [(f"d{i}", s) for i, s in entries])
        write_run([ranking], "t", path)
        parsed = read_run(path)[0]
        assert [p for p, _ in parsed.items] == [p for p, _ in ranking.items]
        for (_, got), (_, want) in zip(parsed.items, ranking.items):
            assert got == pytest.approx(want, abs=1e-6)
