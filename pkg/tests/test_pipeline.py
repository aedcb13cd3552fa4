import json

import pytest

from practiq.categories import MUTATED_CATEGORIES, CategoryLabel as C
from practiq.corpus import CorpusExample, read_conversations
from practiq.errors import SkipReason
from practiq.pipeline import (
    ALL_CATEGORIES,
    GenConfig,
    gate_binary_category,
    join_seed,
    load_existing,
    run_generation,
    stats_path,
    write_outputs,
)
from practiq.provider import MockProvider


def _run(mini, catalog, examples, provider=None, existing=(), **kw):
    cfg = GenConfig(db_dir=mini.db_dir, **kw)
    return run_generation(catalog.values(), examples, cfg, provider or MockProvider(), existing)


def test_every_mutated_category_emitted(generated):
    convs, stats = generated
    cats = {c.category for c in convs}
    assert set(MUTATED_CATEGORIES) <= cats
    assert stats.to_dict()["total_emitted"] == len(convs)


def test_ids_sorted_and_unique(generated):
    ids = [c.id for c in generated[0]]
    assert ids == sorted(set(ids))


def test_shapes_and_helpful(generated):
    convs, stats = generated
    for c in convs:
        c.check_shape()
        assert c.gold_sql == c.final_sql
    helpful = [c for c in convs if c.helpful_sql is not None]
    assert stats.helpful == len(helpful)
    assert all(c.category in (C.AMBIGUOUS_SELECT_COLUMN, C.AMBIGUOUS_WHERE_COLUMN) for c in helpful)


def test_answerable_excludes_consumed_seeds(generated):
    convs, _ = generated
    consumed = {
        c.mutation.seed_example_id
        for c in convs
        if c.mutation is not None and c.mutation.mutated_question == c.mutation.seed_question
    }
    answerable = {c.provenance["seed_example_id"] for c in convs if c.category is C.ANSWERABLE}
    assert answerable and not answerable & consumed


def test_unsupported_join_once_per_db(generated):
    uj = [c for c in generated[0] if c.category is C.UNSUPPORTED_JOIN]
    assert len({c.db_id for c in uj}) == len(uj)


def test_zero_quotas_give_empty_dataset(mini, catalog, examples):
    convs, stats = _run(mini, catalog, examples, quotas={c: 0 for c in ALL_CATEGORIES})
    assert convs == []
    d = stats.to_dict()
    assert d["total_emitted"] == 0 and d["helpful_sql"] == 0
    assert all(v["emitted"] == 0 for v in d["per_category"].values())
    assert sum(v["skipped"].get("quota", 0) for v in d["per_category"].values()) > 0


def test_quota_caps_and_records_reason(mini, catalog, examples):
    convs, stats = _run(mini, catalog, examples, categories=(C.AMBIGUOUS_SELECT_COLUMN,), quotas={C.AMBIGUOUS_SELECT_COLUMN: 3})
    assert len(convs) == 3
    assert stats.skipped[C.AMBIGUOUS_SELECT_COLUMN][SkipReason.QUOTA] > 0


def test_binary_gate_rejects_everything_mutated(mini, catalog, examples):
    provider = MockProvider(binary="answerable")
    convs, stats = _run(mini, catalog, examples, provider, categories=(C.AMBIGUOUS_VALUES_WITHIN_COLUMN, C.ANSWERABLE))
    assert all(c.category is C.ANSWERABLE for c in convs) and convs
    assert stats.binary_checked > 0 and stats.binary_rejected == stats.binary_checked
    assert stats.binary_reject_rate == stats.binary_rejected / stats.binary_checked == 1.0
    assert stats.to_dict()["binary_gate"]["reject_rate"] == 1.0


def test_binary_gate_token_parse(generated):
    conv = next(c for c in generated[0] if c.category is C.NONEXISTENT_FILTER_VALUE)
    assert gate_binary_category(conv, MockProvider())
    assert not gate_binary_category(conv, MockProvider(binary="Unsupported_Join"))
    assert not gate_binary_category(conv, MockProvider(binary="maybe"))


def test_determinism_across_jobs(mini, catalog, examples, generated):
    convs, _ = _run(mini, catalog, examples, jobs=4)
    assert [c.to_dict() for c in convs] == [c.to_dict() for c in generated[0]]


def test_seed_changes_output(mini, catalog, examples, generated):
    convs, _ = _run(mini, catalog, examples, seed=7)
    assert [c.to_dict() for c in convs] != [c.to_dict() for c in generated[0]]


def test_resume_has_no_duplicates(mini, catalog, examples, generated, tmp_path):
    full, _ = generated
    out = tmp_path / "d.jsonl"
    write_outputs(out, full[: len(full) // 2], _run(mini, catalog, examples, quotas={c: 0 for c in ALL_CATEGORIES})[1])
    with open(out, "a") as fh:
        fh.write('{"torn')
    existing = load_existing(out)
    resumed, _ = _run(mini, catalog, examples, existing=existing)
    ids = [c.id for c in resumed]
    assert len(ids) == len(set(ids))
    assert [c.to_dict() for c in resumed] == [c.to_dict() for c in full]


def test_write_outputs_places_stats(generated, tmp_path):
    convs, stats = generated
    sp = write_outputs(tmp_path / "set.jsonl", convs, stats)
    assert sp == stats_path(tmp_path / "set.jsonl") == tmp_path / "set.stats.json"
    assert json.loads(sp.read_text())["total_emitted"] == len(convs)
    assert len(read_conversations(tmp_path / "set.jsonl")) == len(convs)


def test_join_seed_prefers_shortest_sql():
    a = CorpusExample("b", "db", "q", "SELECT x FROM t")
    b = CorpusExample("a", "db", "q", "SELECT y FROM t")
    c = CorpusExample("c", "db", "q", "SELECT long_name FROM t")
    assert join_seed([c, a, b]).example_id == "a"


def test_helpful_fraction_bounds(mini):
    with pytest.raises(ValueError):
        GenConfig(db_dir=mini.db_dir, helpful_fraction=1.5)
