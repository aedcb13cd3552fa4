from hypothesis import given, settings
from hypothesis import strategies as st

from practiq import valuelink
from practiq.categories import CategoryLabel as C
from practiq.corpus import ColumnRef, checkout_database

from conftest import make_db

_words = st.text(alphabet="abcdefgh ", min_size=0, max_size=12)


def test_levenshtein_known_values():
    assert valuelink.levenshtein("kitten", "sitting") == 3
    assert valuelink.levenshtein("", "abc") == 3
    assert valuelink.levenshtein_within("kitten", "sitting", 1) > 1


@settings(max_examples=200)
@given(_words, _words)
def test_similarity_symmetric_and_bounded(a, b):
    s = valuelink.similarity(a, b)
    assert 0.0 <= s <= 1.0
    assert s == valuelink.similarity(b, a)


@given(st.text(alphabet="abcdefgh", min_size=1, max_size=12))
def test_exact_match_scores_one(a):
    assert valuelink.similarity(a, a) == 1.0
    assert valuelink.similarity(a.upper(), a) == 1.0


@settings(max_examples=200)
@given(_words, _words, st.integers(0, 6))
def test_bounded_levenshtein_agrees(a, b, bound):
    full = valuelink.levenshtein(a, b)
    got = valuelink.levenshtein_within(a, b, bound)
    assert got == full if full <= bound else got > bound


def test_retrieves_english_channel(mini, tmp_path):
    with checkout_database("battle_death", mini.db_dir, tmp_path) as h:
        index = valuelink.build_index(h)
        found = valuelink.retrieve_values("battles with no ships lost in the English Channel", index)
    assert "English Channel" in found[ColumnRef("ship", "location")]


def test_token_containment_finds_longer_values(tmp_path):
    h = make_db(tmp_path / "t.sqlite", "CREATE TABLE Templates (d TEXT); INSERT INTO Templates VALUES ('Presentation'),('useful CV'),('CV template'),('Book');")
    found = valuelink.retrieve_values("list the useful CV templates", valuelink.build_index(h))
    assert set(found[ColumnRef("Templates", "d")]) >= {"useful CV", "CV template"}


def test_numeric_exact_token(tmp_path):
    h = make_db(tmp_path / "n.sqlite", "CREATE TABLE t (year INTEGER); INSERT INTO t VALUES (2014),(2015);")
    found = valuelink.retrieve_values("concerts held in 2014", valuelink.build_index(h))
    assert found == {ColumnRef("t", "year"): [2014]}


def test_empty_question_finds_nothing(mini, tmp_path):
    with checkout_database("world_1", mini.db_dir, tmp_path) as h:
        assert valuelink.retrieve_values("", valuelink.build_index(h)) == {}


def test_oracle_values(generated):
    convs, _ = generated
    av = next(c for c in convs if c.category is C.AMBIGUOUS_VALUES_WITHIN_COLUMN)
    assert valuelink.oracle_values(av.mutation) == {av.mutation.target: list(av.mutation.introduced)}
    aw = next(c for c in convs if c.category is C.AMBIGUOUS_WHERE_COLUMN)
    got = valuelink.oracle_values(aw.mutation)
    assert set(got) == set(aw.mutation.introduced)
    assert valuelink.oracle_values(None) == {}


def test_merge_values_dedupes():
    r = ColumnRef("t", "c")
    assert valuelink.merge_values({r: ["a"]}, {r: ["a", "b"]}) == {r: ["a", "b"]}
