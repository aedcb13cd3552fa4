import hashlib
import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from practiq.corpus import (
    AddColumn,
    ColumnDef,
    ColumnRef,
    CreateTables,
    DeleteRowsByValue,
    NewTable,
    RemoveColumn,
    ReplaceCellValues,
    apply_delta,
    checkout_database,
    introspect,
    load_catalog,
    load_examples,
    read_conversations,
    write_conversations,
)
from practiq.errors import DeltaConflict, MissingDatabase, ParseError, SchemaVersionMismatch

from conftest import make_db


def test_catalog_resolves_columns(catalog):
    singer = catalog["concert_singer"]
    ref = singer.resolve("SINGER", "name")
    assert ref == ColumnRef("singer", "Name")
    assert singer.column_type(ref) == "text"
    assert singer.resolve("singer", "nope") is None


def test_catalog_rejects_bad_json(tmp_path):
    p = tmp_path / "tables.json"
    p.write_text("{not json")
    with pytest.raises(ParseError):
        load_catalog(p)


def test_examples_get_stable_ids(examples):
    assert examples[0].example_id == "dev_0000"
    assert len({e.example_id for e in examples}) == len(examples)


def test_examples_skip_malformed(tmp_path):
    p = tmp_path / "dev.json"
    p.write_text(json.dumps([{"db_id": "a", "question": "q", "query": "SELECT 1"}, {"db_id": "a"}]))
    ex = load_examples(p)
    assert len(ex) == 1 and len(ex.skipped) == 1


def test_checkout_missing_database(tmp_path):
    with pytest.raises(MissingDatabase):
        checkout_database("nowhere", tmp_path)


def _digest(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


def test_source_database_untouched(mini, tmp_path):
    src = mini.db_dir / "concert_singer" / "concert_singer.sqlite"
    before = _digest(src)
    with checkout_database("concert_singer", mini.db_dir, tmp_path) as h:
        apply_delta(h, RemoveColumn(ColumnRef("singer", "Country")))
        apply_delta(h, DeleteRowsByValue(ColumnRef("stadium", "Location"), "Raith Rovers"))
    assert _digest(src) == before


def test_remove_column_matches_fresh_introspection(mini, tmp_path):
    with checkout_database("concert_singer", mini.db_dir, tmp_path) as h:
        schema = apply_delta(h, RemoveColumn(ColumnRef("singer", "Country")))
        assert schema == introspect(h.conn, "concert_singer")
        assert schema.resolve("singer", "Country") is None


def test_add_column_keeps_row_count(mini, tmp_path):
    with checkout_database("concert_singer", mini.db_dir, tmp_path) as h:
        n = h.row_count("singer")
        schema = apply_delta(h, AddColumn(ColumnRef("singer", "Nickname"), "text", copy_from=ColumnRef("singer", "Name")))
        assert h.row_count("singer") == n
        assert schema == introspect(h.conn, "concert_singer")
        assert h.column_values(ColumnRef("singer", "Nickname")) == h.column_values(ColumnRef("singer", "Name"))


def test_add_existing_column_conflicts(mini, tmp_path):
    with checkout_database("concert_singer", mini.db_dir, tmp_path) as h:
        with pytest.raises(DeltaConflict):
            apply_delta(h, AddColumn(ColumnRef("singer", "name")))


def test_replace_single_row_value_clones_row(tmp_path):
    h = make_db(tmp_path / "r.sqlite", "CREATE TABLE t (id INTEGER PRIMARY KEY, v TEXT); INSERT INTO t VALUES (1,'a'),(2,'b');")
    apply_delta(h, ReplaceCellValues(ColumnRef("t", "v"), "a", ("a1", "a2")))
    ref = ColumnRef("t", "v")
    assert h.count_value(ref, "a") == 0
    assert h.count_value(ref, "a1") == 1 and h.count_value(ref, "a2") == 1
    assert h.row_count("t") == 3


def test_replace_many_rows_splits_round_robin(tmp_path):
    h = make_db(tmp_path / "r.sqlite", "CREATE TABLE t (v TEXT); INSERT INTO t VALUES ('a'),('a'),('a'),('a');")
    apply_delta(h, ReplaceCellValues(ColumnRef("t", "v"), "a", ("x", "y")))
    assert sorted(h.column_values(ColumnRef("t", "v"))) == ["x", "x", "y", "y"]


def test_create_tables_adds_component(mini, tmp_path):
    with checkout_database("concert_singer", mini.db_dir, tmp_path) as h:
        before = h.schema.fk_components()
        tables = (
            NewTable("a", (ColumnDef("id", "number"),), ("id",), (), ((1,),)),
            NewTable("b", (ColumnDef("id", "number"), ColumnDef("a_id", "number")), ("id",), (("a_id", "a", "id"),), ((1, 1),)),
        )
        schema = apply_delta(h, CreateTables(tables))
        assert schema.fk_components() == before + 1
        assert schema == introspect(h.conn, "concert_singer")


def test_create_tables_rejects_outside_fk(mini, tmp_path):
    with checkout_database("concert_singer", mini.db_dir, tmp_path) as h:
        bad = NewTable("a", (ColumnDef("s", "number"),), (), (("s", "singer", "Singer_ID"),))
        with pytest.raises(DeltaConflict):
            apply_delta(h, CreateTables((bad,)))


def test_conversations_roundtrip(generated, tmp_path):
    convs, _ = generated
    p = tmp_path / "d.jsonl"
    write_conversations(p, convs)
    again = read_conversations(p)
    assert [c.to_dict() for c in again] == [c.to_dict() for c in convs]


def test_unknown_category_on_read(generated, tmp_path):
    raw = generated[0][0].to_dict()
    raw["category"] = "Mystery_Category"
    p = tmp_path / "bad.jsonl"
    p.write_text(json.dumps(raw) + "\n")
    with pytest.raises(SchemaVersionMismatch):
        read_conversations(p)


def test_partial_last_line_tolerated(generated, tmp_path):
    p = tmp_path / "torn.jsonl"
    write_conversations(p, generated[0][:2])
    with open(p, "a") as fh:
        fh.write('{"format_version": 1, "id": "x')
    with pytest.raises(ParseError):
        read_conversations(p)
    assert len(read_conversations(p, tolerate_partial=True)) == 2


@settings(max_examples=40, deadline=None)
@given(st.lists(st.sampled_from(["a", "b", "c", "d"]), min_size=1, max_size=12), st.sampled_from(["a", "b"]))
def test_delete_rows_removes_exactly_matches(tmp_path_factory, values, victim):
    path = tmp_path_factory.mktemp("h") / "d.sqlite"
    rows = ",".join(f"('{v}')" for v in values)
    h = make_db(path, f"CREATE TABLE t (v TEXT); INSERT INTO t VALUES {rows};")
    apply_delta(h, DeleteRowsByValue(ColumnRef("t", "v"), victim))
    assert sorted(h.column_values(ColumnRef("t", "v"))) == sorted(v for v in values if v != victim)
    h.close()
