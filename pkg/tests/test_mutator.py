import random

import pytest

from practiq import sqlkit
from practiq.categories import CategoryLabel as C
from practiq.corpus import ColumnRef, DeleteRowsByValue, checkout_database
from practiq.errors import ExecError, ExecErrorKind, Skip, SkipReason
from practiq.mutator import mutate, parse_list
from practiq.provider import MockProvider, Task

from conftest import example


@pytest.fixture()
def run(mini, catalog, examples, tmp_path):
    """mutate() on a fresh checkout; returns (record, handle)."""
    handles = []

    def go(category, ex, provider=None):
        h = checkout_database(ex.db_id, mini.db_dir, tmp_path)
        handles.append(h)
        corpus = [e for e in examples if e.db_id == ex.db_id]
        rec = mutate(category, ex, catalog[ex.db_id], h, provider or MockProvider(), corpus=corpus, rng=random.Random(0))
        return rec, h

    yield go
    for h in handles:
        h.close()


def _unknown_column(h, sql):
    with pytest.raises(ExecError) as info:
        sqlkit.execute(h, sql)
    return info.value.kind is ExecErrorKind.UNKNOWN_COLUMN


def test_parse_list_accepts_python_and_json():
    assert parse_list("['a', 'b']") == ["a", "b"]
    assert parse_list('["a", "b"]') == ["a", "b"]


def test_ambiguous_select_capacity(run, examples):
    rec, h = run(C.AMBIGUOUS_SELECT_COLUMN, example(examples, contains="maximum capacity"))
    assert rec.target == ColumnRef("stadium", "Capacity")
    assert [r.column for r in rec.introduced] == ["Standing Capacity", "Seating Capacity"]
    assert rec.mutated_question == rec.seed_question
    assert _unknown_column(h, rec.seed_sql)
    for sql in rec.clarified_sql_candidates:
        assert sqlkit.executes(h, sql)
    # second column is a perturbed copy, so the two readings can differ
    a, b = (h.column_values(r) for r in rec.introduced)
    assert len(a) == len(b) and a != b


def test_ambiguous_where_english_channel(run, examples):
    rec, h = run(C.AMBIGUOUS_WHERE_COLUMN, example(examples, contains="English Channel"))
    assert rec.target == ColumnRef("ship", "location") and rec.target_value == "English Channel"
    for ref in rec.introduced:
        assert h.count_value(ref, "English Channel") > 0
    assert all(sqlkit.executes(h, s) for s in rec.clarified_sql_candidates)


def test_ambiguous_values_captured(run, examples):
    rec, h = run(C.AMBIGUOUS_VALUES_WITHIN_COLUMN, example(examples, contains="ended up being 'Captured'"))
    assert rec.introduced == ("Captured by Bulgarians", "Captured by Latins")
    assert h.count_value(rec.target, "Captured") == 0
    for sql in rec.clarified_sql_candidates:
        assert sqlkit.execute(h, sql).rows


def test_ambiguous_filter_criteria_leaves_db(run, examples):
    ex = example(examples, contains="older than 40")
    rec, _ = run(C.AMBIGUOUS_FILTER_CRITERIA, ex)
    assert rec.deltas == () and "40" not in rec.mutated_question
    assert rec.clarified_sql_candidates == (ex.gold_sql,)


def test_nonexistent_select_substitutes_text_sibling(run, examples):
    rec, h = run(C.NONEXISTENT_SELECT_COLUMN, example(examples, contains="Show name, country, age"))
    assert rec.target == ColumnRef("singer", "Name")
    assert rec.details["substitute"] == ["singer", "Song_Name"]
    assert _unknown_column(h, rec.seed_sql)
    assert sqlkit.executes(h, rec.clarified_sql_candidates[0])


def test_nonexistent_where_amc_to_triumph(run, examples):
    rec, h = run(C.NONEXISTENT_WHERE_COLUMN, example(examples, contains="models produced by the maker with full name"))
    assert rec.target == ColumnRef("car_makers", "FullName")
    assert rec.details["alternate_question"] == "Which model is produced by the maker named triumph?"
    assert rec.target_value == "triumph"
    assert _unknown_column(h, rec.seed_sql)


def test_nonexistent_filter_value_deletes_rows(run, examples):
    rec, h = run(C.NONEXISTENT_FILTER_VALUE, example(examples, contains="result 'Latin victory'"))
    assert rec.deltas == (DeleteRowsByValue(rec.target, rec.target_value),)
    assert sqlkit.execute(h, rec.seed_sql).rows == []
    assert sqlkit.execute(h, rec.clarified_sql_candidates[0]).rows
    assert rec.details["alternate_value"] in rec.details["surviving_values"]


def test_nonexistent_filter_value_skips_aggregates(run, examples):
    # an aggregate always yields one row, so emptiness cannot be shown
    with pytest.raises(Skip) as info:
        run(C.NONEXISTENT_FILTER_VALUE, example(examples, contains="Caribbean"))
    assert info.value.reason is SkipReason.POSTCONDITION


def test_unsupported_join_albums(run, examples):
    rec, h = run(C.UNSUPPORTED_JOIN, example(examples, contains="How many singers"))
    assert set(rec.introduced) == {"albums", "songs"}
    assert rec.details["components_after"] == rec.details["components_before"] + 1
    assert "Thriller" in rec.mutated_question
    assert sqlkit.executes(h, rec.clarified_sql_candidates[0])


def test_precondition_skip(run, examples):
    with pytest.raises(Skip) as info:
        run(C.AMBIGUOUS_WHERE_COLUMN, example(examples, contains="How many singers"))
    assert info.value.reason is SkipReason.PRECONDITION


def test_provider_refusal_skips(run, examples):
    refusing = MockProvider(refuse=[Task.SYNONYM_COLUMNS])
    with pytest.raises(Skip) as info:
        run(C.AMBIGUOUS_SELECT_COLUMN, example(examples, contains="maximum capacity"), refusing)
    assert info.value.reason is SkipReason.PROVIDER_REFUSAL


def test_answerable_has_no_operator(run, examples):
    with pytest.raises(ValueError):
        run(C.ANSWERABLE, examples[0])
