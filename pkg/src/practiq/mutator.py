"""Stage 1: per-category operators that mutate a database (or a question).

Each ``mutate_*`` function works on a private database checkout, applies its
deltas to it, checks the category postconditions and returns a
:class:`MutationRecord`. Any failure is raised as :class:`Skip` with a reason
from the closed :class:`SkipReason` set.
"""

from __future__ import annotations

import ast
import json
import logging
import random
import re
from dataclasses import dataclass, replace
from typing import Any, Callable, Sequence

from practiq import prompting, sqlkit
from practiq.categories import CategoryLabel
from practiq.corpus import (
    AddColumn,
    ColumnRef,
    CorpusExample,
    CreateTables,
    DatabaseHandle,
    DeleteRowsByValue,
    NewTable,
    RemoveColumn,
    ReplaceCellValues,
    SchemaDef,
    apply_delta,
)
from practiq.errors import (
    DeltaConflict,
    ExecError,
    ExecErrorKind,
    PractiqError,
    ProviderRefusal,
    RateLimited,
    Skip,
    SkipReason,
)
from practiq.provider.base import Provider, ask
from practiq.records import MutationRecord
from practiq.schema_md import describe

log = logging.getLogger(__name__)

NUMBER_PERTURBATION = 1.1
ALTERNATE_TRIES = 20
SURVIVING_VALUE_CAP = 50


@dataclass
class Seed:
    """Parsed view of the example being mutated."""

    example: CorpusExample
    schema: SchemaDef
    tree: sqlkit.SqlTree
    refs: sqlkit.SqlRefs

    @classmethod
    def of(cls, example: CorpusExample, schema: SchemaDef) -> "Seed":
        tree = sqlkit.parse(example.gold_sql)
        return cls(example, schema, tree, sqlkit.extract_refs(tree, schema))


def _record(seed: Seed, category: CategoryLabel, **fields) -> MutationRecord:
    ex = seed.example
    return MutationRecord(
        category=category,
        seed_example_id=ex.example_id,
        db_id=ex.db_id,
        seed_question=ex.question,
        seed_sql=ex.gold_sql,
        **fields,
    )


def _call(provider: Provider, request) -> str:
    try:
        return ask(provider, request)
    except (ProviderRefusal, RateLimited) as exc:
        raise Skip(SkipReason.PROVIDER_REFUSAL, str(exc)) from None


def _apply(handle: DatabaseHandle, deltas: Sequence) -> SchemaDef:
    schema = handle.schema
    for delta in deltas:
        try:
            schema = apply_delta(handle, delta)
        except DeltaConflict as exc:
            raise Skip(SkipReason.DELTA_CONFLICT, str(exc)) from None
    return schema


def _run(handle: DatabaseHandle, sql: str, what: str):
    try:
        return sqlkit.execute(handle, sql)
    except ExecError as exc:
        raise Skip(SkipReason.EXEC_ERROR, f"{what}: {exc}") from None


def _expect_unknown_column(handle: DatabaseHandle, sql: str) -> None:
    try:
        sqlkit.execute(handle, sql, limit=1)
    except ExecError as exc:
        if exc.kind is ExecErrorKind.UNKNOWN_COLUMN:
            return
        raise Skip(SkipReason.POSTCONDITION, f"original SQL failed with {exc.kind.value}") from None
    raise Skip(SkipReason.POSTCONDITION, "original SQL still executes after column removal")


def parse_list(text: str) -> list:
    """Read a Python- or JSON-style list from provider output."""
    for loader in (ast.literal_eval, json.loads):
        try:
            value = loader(text)
        except (ValueError, SyntaxError, TypeError):
            continue
        if isinstance(value, (list, tuple)):
            return list(value)
    raise ProviderRefusal(f"expected a list, got {text[:80]!r}")


def _rewrite(seed: Seed, spec, schema: SchemaDef | None = None) -> str:
    return sqlkit.render(sqlkit.rewrite(seed.tree, spec, schema or seed.schema))


def _is_number(value) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _looks_numeric(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


# ------------------------------------------------------------ synonym columns


def _synonym_names(provider: Provider, handle: DatabaseHandle, seed: Seed, target: ColumnRef) -> list[str]:
    request = prompting.synonym_columns(describe(handle), target, seed.example.question, seed.example.gold_sql)
    try:
        items = parse_list(_call(provider, request))
    except ProviderRefusal as exc:
        raise Skip(SkipReason.PROVIDER_REFUSAL, str(exc)) from None
    table = seed.schema.table(target.table)
    taken = {c.lower() for c in table.column_names}
    names: list[str] = []
    for item in items:
        name = item.get("column") if isinstance(item, dict) else item
        if not isinstance(name, str) or not name.strip():
            continue
        name = name.strip()
        # a synonym may not reuse an existing column name, the removed one included
        if name.lower() in taken or name.lower() in {n.lower() for n in names}:
            continue
        names.append(name)
    if len(names) > 2:
        ranked = parse_list(_call(provider, prompting.rank_candidates(seed.example.question, names)))
        names = [n for n in ranked if n in names] + [n for n in names if n not in ranked]
    if len(names) < 2:
        raise Skip(SkipReason.PROVIDER_REFUSAL, f"fewer than two usable synonyms for {target}")
    return names[:2]


def _perturb(values: list) -> list:
    return [round(v * NUMBER_PERTURBATION) if _is_number(v) else v for v in values]


def _swap_column(
    seed: Seed,
    handle: DatabaseHandle,
    provider: Provider,
    target: ColumnRef,
    category: CategoryLabel,
    second_values: Callable[[list], list],
) -> MutationRecord:
    names = _synonym_names(provider, handle, seed, target)
    col_type = seed.schema.column_type(target)
    values = handle.column_values(target)
    c1, c2 = (ColumnRef(target.table, n) for n in names)
    deltas = (
        RemoveColumn(target),
        AddColumn(c1, col_type, tuple(values)),
        AddColumn(c2, col_type, tuple(second_values(values))),
    )
    _apply(handle, deltas)
    _expect_unknown_column(handle, seed.example.gold_sql)
    candidates = []
    for new in (c1, c2):
        sql = _rewrite(seed, sqlkit.SubstituteColumn(target, new))
        _run(handle, sql, f"candidate over {new}")
        candidates.append(sql)
    return _record(
        seed,
        category,
        target=target,
        introduced=(c1, c2),
        deltas=deltas,
        clarified_sql_candidates=tuple(candidates),
    )


def _first_non_key(schema: SchemaDef, refs: Sequence[ColumnRef]) -> ColumnRef | None:
    for ref in refs:
        if not schema.is_key(ref):
            return ref
    return None


def mutate_ambiguous_select(example: CorpusExample, schema: SchemaDef, db: DatabaseHandle, provider: Provider) -> MutationRecord:
    """Replace a projected column by two provider-named synonym columns."""
    seed = Seed.of(example, schema)
    target = _first_non_key(schema, seed.refs.select_columns)
    if target is None:
        raise Skip(SkipReason.PRECONDITION, "no non-key projected column")
    return _swap_column(seed, db, provider, target, CategoryLabel.AMBIGUOUS_SELECT_COLUMN, _perturb)


def _equality_atoms(seed: Seed) -> list[sqlkit.WhereAtom]:
    return [a for a in seed.refs.where_atoms if a.op == "=" and a.value is not None]


def mutate_ambiguous_where(example: CorpusExample, schema: SchemaDef, db: DatabaseHandle, provider: Provider) -> MutationRecord:
    """Replace an equality-filtered column by two synonyms that both hold the literal."""
    seed = Seed.of(example, schema)
    atom = next(
        (a for a in _equality_atoms(seed) if not schema.is_key(a.ref) and db.count_value(a.ref, a.value) > 0),
        None,
    )
    if atom is None:
        raise Skip(SkipReason.PRECONDITION, "no equality filter on a non-key column with a present literal")

    def rotated(values: list) -> list:
        # same multiset, shifted rows: the literal stays present in both columns
        return values[1:] + values[:1]

    record = _swap_column(seed, db, provider, atom.ref, CategoryLabel.AMBIGUOUS_WHERE_COLUMN, rotated)
    for ref in record.introduced:
        if db.count_value(ref, atom.value) == 0:
            raise Skip(SkipReason.POSTCONDITION, f"{atom.value!r} missing from {ref}")
    return replace(record, target_value=atom.value)


def mutate_ambiguous_values(example: CorpusExample, schema: SchemaDef, db: DatabaseHandle, provider: Provider) -> MutationRecord:
    """Split the rows holding a text literal between two similar new values."""
    seed = Seed.of(example, schema)
    atom = next(
        (
            a
            for a in _equality_atoms(seed)
            if isinstance(a.value, str)
            and not _looks_numeric(a.value)
            and not schema.is_key(a.ref)
            and db.count_value(a.ref, a.value) > 0
        ),
        None,
    )
    if atom is None:
        raise Skip(SkipReason.PRECONDITION, "no present text literal in an equality filter")
    request = prompting.similar_values(describe(db), atom.ref, atom.value, example.question, example.gold_sql)
    try:
        raw = parse_list(_call(provider, request))
    except ProviderRefusal as exc:
        raise Skip(SkipReason.PROVIDER_REFUSAL, str(exc)) from None
    new_values: list[str] = []
    for v in raw:
        if isinstance(v, str) and v.strip() and v != atom.value and v not in new_values:
            new_values.append(v)
    if len(new_values) < 2:
        raise Skip(SkipReason.PROVIDER_REFUSAL, f"fewer than two similar values for {atom.value!r}")
    v1, v2 = new_values[:2]
    delta = ReplaceCellValues(atom.ref, atom.value, (v1, v2))
    _apply(db, [delta])
    candidates = []
    for v in (v1, v2):
        sql = _rewrite(seed, sqlkit.SubstituteLiteral(atom.value, v, atom.ref))
        if not _run(db, sql, f"candidate with {v!r}").rows:
            raise Skip(SkipReason.INSUFFICIENT_ROWS, f"candidate with {v!r} returns no rows")
        candidates.append(sql)
    return _record(
        seed,
        CategoryLabel.AMBIGUOUS_VALUES_WITHIN_COLUMN,
        target=atom.ref,
        target_value=atom.value,
        introduced=(v1, v2),
        deltas=(delta,),
        clarified_sql_candidates=tuple(candidates),
    )


def _mentions(question: str, value) -> bool:
    text = str(int(value)) if _is_number(value) and float(value).is_integer() else str(value)
    return bool(text) and text.lower() in question.lower()


def mutate_ambiguous_filter_criteria(
    example: CorpusExample, schema: SchemaDef, db: DatabaseHandle, provider: Provider
) -> MutationRecord:
    """Rewrite the question so a stated filter value becomes a vague term; the database is untouched."""
    seed = Seed.of(example, schema)
    atom = next(
        (a for a in seed.refs.where_atoms if a.op != "LIKE" and a.value is not None and _mentions(example.question, a.value)),
        None,
    )
    if atom is None:
        raise Skip(SkipReason.PRECONDITION, "no filter literal stated in the question")
    request = prompting.vaguify_question(
        describe(db), example.question, example.gold_sql, atom.value, atom.op, atom.ref.column
    )
    question = _call(provider, request).strip()
    if " ".join(question.lower().split()) == " ".join(example.question.lower().split()):
        raise Skip(SkipReason.POSTCONDITION, "vague question is identical to the original")
    if _mentions(question, atom.value):
        raise Skip(SkipReason.POSTCONDITION, "vague question still states the filter value")
    return _record(
        seed,
        CategoryLabel.AMBIGUOUS_FILTER_CRITERIA,
        target=atom.ref,
        target_value=atom.value,
        mutated_question=question,
        clarified_sql_candidates=(example.gold_sql,),
    )


def mutate_nonexistent_select(example: CorpusExample, schema: SchemaDef, db: DatabaseHandle) -> MutationRecord:
    """Drop a projected column; the clarified SQL asks for a sibling text column."""
    seed = Seed.of(example, schema)
    target = _first_non_key(schema, seed.refs.select_columns)
    if target is None:
        raise Skip(SkipReason.PRECONDITION, "no non-key projected column")
    projected = {r.key() for r in seed.refs.select_columns}
    table = schema.table(target.table)
    substitute = None
    for col in table.columns:
        ref = ColumnRef(table.name, col.name)
        if col.col_type == "text" and ref.key() not in projected and not schema.is_key(ref):
            substitute = ref
            break
    if substitute is None:
        raise Skip(SkipReason.NO_SUBSTITUTE_COLUMN, f"no text sibling for {target}")
    delta = RemoveColumn(target)
    _apply(db, [delta])
    _expect_unknown_column(db, example.gold_sql)
    sql = _rewrite(seed, sqlkit.SubstituteColumn(target, substitute))
    _run(db, sql, "substituted SQL")
    return _record(
        seed,
        CategoryLabel.NONEXISTENT_SELECT_COLUMN,
        target=target,
        deltas=(delta,),
        clarified_sql_candidates=(sql,),
        details={"substitute": substitute.to_list()},
    )


def mutate_nonexistent_where(
    example: CorpusExample, schema: SchemaDef, db: DatabaseHandle, corpus: Sequence[CorpusExample]
) -> MutationRecord:
    """Drop a filter column; the clarified SQL is another corpus query with the same projection."""
    seed = Seed.of(example, schema)
    target = _first_non_key(schema, seed.refs.where_columns)
    if target is None:
        raise Skip(SkipReason.PRECONDITION, "no removable filter column")
    wanted = {r.key() for r in seed.refs.select_columns}
    if not wanted:
        raise Skip(SkipReason.PRECONDITION, "seed projects no named column")
    delta = RemoveColumn(target)
    _apply(db, [delta])
    _expect_unknown_column(db, example.gold_sql)
    for other in corpus:
        if other.db_id != example.db_id or other.example_id == example.example_id:
            continue
        try:
            alt = Seed.of(other, schema)
            used, _ = sqlkit.column_references(alt.tree, schema)
        except PractiqError:
            continue
        if {r.key() for r in alt.refs.select_columns} != wanted or not alt.refs.where_atoms:
            continue
        if target.key() in {r.key() for r in used}:
            continue
        if not sqlkit.executes(db, other.gold_sql):
            continue
        return _record(
            seed,
            CategoryLabel.NONEXISTENT_WHERE_COLUMN,
            target=target,
            target_value=alt.refs.where_atoms[0].value,
            deltas=(delta,),
            clarified_sql_candidates=(other.gold_sql,),
            details={"alternate_example_id": other.example_id, "alternate_question": other.question},
        )
    raise Skip(SkipReason.NO_MATCHING_SQL, f"no corpus SQL with the same projection avoiding {target}")


def mutate_nonexistent_filter_value(
    example: CorpusExample, schema: SchemaDef, db: DatabaseHandle, rng: random.Random | None = None
) -> MutationRecord:
    """Delete the rows holding a filter literal; the clarified SQL asks about another existing value."""
    rng = rng or random.Random(0)
    seed = Seed.of(example, schema)
    atom = next((a for a in _equality_atoms(seed) if db.count_value(a.ref, a.value) > 0), None)
    if atom is None:
        raise Skip(SkipReason.PRECONDITION, "no equality filter whose literal is present")
    alternates = [v for v in db.distinct_values(atom.ref) if not _same_cell(v, atom.value)]
    if not alternates:
        raise Skip(SkipReason.NO_ALTERNATE_VALUE, f"{atom.ref} holds a single distinct value")
    delta = DeleteRowsByValue(atom.ref, atom.value)
    _apply(db, [delta])
    if _run(db, example.gold_sql, "original SQL").rows:
        raise Skip(SkipReason.POSTCONDITION, "original SQL still returns rows after the value was removed")
    survivors = db.distinct_values(atom.ref)
    pool = sorted((v for v in survivors if not _same_cell(v, atom.value)), key=lambda v: (str(type(v)), str(v)))
    rng.shuffle(pool)
    for value in pool[:ALTERNATE_TRIES]:
        sql = _rewrite(seed, sqlkit.SubstituteLiteral(atom.value, value, atom.ref))
        try:
            result = sqlkit.execute(db, sql)
        except ExecError:
            continue
        if result.rows:
            return _record(
                seed,
                CategoryLabel.NONEXISTENT_FILTER_VALUE,
                target=atom.ref,
                target_value=atom.value,
                deltas=(delta,),
                clarified_sql_candidates=(sql,),
                details={"alternate_value": value, "surviving_values": survivors[:SURVIVING_VALUE_CAP]},
            )
    raise Skip(SkipReason.NO_ALTERNATE_VALUE, f"no surviving value of {atom.ref} yields rows")


def _same_cell(a: Any, b: Any) -> bool:
    if _is_number(a) and _is_number(b):
        return float(a) == float(b)
    return str(a) == str(b)


def _parse_tables(text: str) -> dict:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError:
        match = re.search(r"\{.*\}", text, re.S)
        if not match:
            raise ProviderRefusal("no JSON object in table design") from None
        try:
            raw = json.loads(match.group(0))
        except json.JSONDecodeError as exc:
            raise ProviderRefusal(f"bad table design JSON: {exc}") from None
    if not isinstance(raw, dict) or not isinstance(raw.get("tables"), list) or not raw.get("question"):
        raise ProviderRefusal("table design lacks tables or question")
    return raw


def mutate_unsupported_join(
    example: CorpusExample, schema: SchemaDef, db: DatabaseHandle, provider: Provider
) -> MutationRecord:
    """Add provider-designed tables linked only to each other; the question needs a join across the gap."""
    seed = Seed.of(example, schema)
    if not schema.tables:
        raise Skip(SkipReason.PRECONDITION, "empty schema")
    request = prompting.disconnected_tables(describe(db), schema.db_id, schema.table_names)
    try:
        design = _parse_tables(_call(provider, request))
        tables = tuple(NewTable.from_dict(t) for t in design["tables"])
    except (ProviderRefusal, KeyError, TypeError, ValueError) as exc:
        raise Skip(SkipReason.PROVIDER_REFUSAL, f"unusable table design: {exc}") from None
    if len(tables) < 2:
        raise Skip(SkipReason.POSTCONDITION, "fewer than two new tables")
    question = str(design["question"]).strip()
    if question == example.question:
        raise Skip(SkipReason.POSTCONDITION, "join question equals the seed question")
    before = schema.fk_components()
    delta = CreateTables(tables)
    after = _apply(db, [delta])
    if after.fk_components() < before + 1:
        raise Skip(SkipReason.POSTCONDITION, "new tables did not add a disconnected component")
    _run(db, example.gold_sql, "clarified SQL")
    join = [str(t) for t in design.get("join") or []][:2]
    return _record(
        seed,
        CategoryLabel.UNSUPPORTED_JOIN,
        target=None,
        introduced=tuple(t.name for t in tables),
        mutated_question=question,
        deltas=(delta,),
        clarified_sql_candidates=(example.gold_sql,),
        details={"join": join, "components_before": before, "components_after": after.fk_components()},
    )


def mutate(
    category: CategoryLabel,
    example: CorpusExample,
    schema: SchemaDef,
    db: DatabaseHandle,
    provider: Provider,
    corpus: Sequence[CorpusExample] = (),
    rng: random.Random | None = None,
) -> MutationRecord:
    """Dispatch to the operator for ``category``."""
    C = CategoryLabel
    if category is C.AMBIGUOUS_SELECT_COLUMN:
        return mutate_ambiguous_select(example, schema, db, provider)
    if category is C.AMBIGUOUS_WHERE_COLUMN:
        return mutate_ambiguous_where(example, schema, db, provider)
    if category is C.AMBIGUOUS_VALUES_WITHIN_COLUMN:
        return mutate_ambiguous_values(example, schema, db, provider)
    if category is C.AMBIGUOUS_FILTER_CRITERIA:
        return mutate_ambiguous_filter_criteria(example, schema, db, provider)
    if category is C.NONEXISTENT_SELECT_COLUMN:
        return mutate_nonexistent_select(example, schema, db)
    if category is C.NONEXISTENT_WHERE_COLUMN:
        return mutate_nonexistent_where(example, schema, db, corpus)
    if category is C.NONEXISTENT_FILTER_VALUE:
        return mutate_nonexistent_filter_value(example, schema, db, rng)
    if category is C.UNSUPPORTED_JOIN:
        return mutate_unsupported_join(example, schema, db, provider)
    raise ValueError(f"{category.value} has no mutation operator")
