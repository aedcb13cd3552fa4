"""Rebuild a conversation's database from its recorded deltas and re-check it."""

from __future__ import annotations

import os
from dataclasses import dataclass

from practiq import sqlkit
from practiq.categories import AMBIGUOUS_COLUMN_CATEGORIES, CategoryLabel
from practiq.corpus import DatabaseHandle, apply_deltas, checkout_database
from practiq.dialogue import clarified_target, mention_ok
from practiq.errors import DeltaConflict, ExecError, ExecErrorKind, PractiqError
from practiq.records import Conversation

C = CategoryLabel


def open_database(conv: Conversation, db_dir: str | os.PathLike, workdir=None) -> DatabaseHandle:
    """Fresh checkout with the conversation's deltas applied in order."""
    handle = checkout_database(conv.db_id, db_dir, workdir)
    if conv.mutation is not None and conv.mutation.deltas:
        try:
            apply_deltas(handle, conv.mutation.deltas)
        except DeltaConflict:
            handle.close()
            raise
    return handle


@dataclass(frozen=True)
class Violation:
    conversation_id: str
    check: str
    detail: str = ""

    def __str__(self) -> str:
        return f"{self.conversation_id}: {self.check}" + (f" ({self.detail})" if self.detail else "")


def _rows(handle, sql: str):
    return sqlkit.execute(handle, sql, limit=None).rows


def check_conversation(conv: Conversation, db_dir: str | os.PathLike, workdir=None) -> list[Violation]:
    """Executability plus the per-category postconditions; an empty list means clean."""
    out: list[Violation] = []

    def fail(check: str, detail: str = "") -> None:
        out.append(Violation(conv.id, check, detail))

    try:
        conv.check_shape()
    except ValueError as exc:
        fail("turn_shape", str(exc))
    if conv.final_sql != conv.gold_sql:
        fail("gold_sql", "gold_sql differs from the final_sql turn")
    if conv.helpful_sql is not None and conv.category not in AMBIGUOUS_COLUMN_CATEGORIES:
        fail("helpful_category", conv.category.value)

    try:
        handle = open_database(conv, db_dir, workdir)
    except PractiqError as exc:
        fail("replay", str(exc))
        return out
    try:
        for label, sql in (("final_sql", conv.final_sql), ("helpful_sql", conv.helpful_sql)):
            if sql is not None and not sqlkit.executes(handle, sql):
                fail(f"{label}_executes", sql)
        record = conv.mutation
        if conv.category is C.ANSWERABLE:
            if record is not None:
                fail("answerable_mutation", "answerable conversation carries a mutation")
            return out
        if record is None:
            fail("mutation_missing")
            return out
        _category_checks(conv, handle, db_dir, workdir, fail)
        if conv.helpful_sql is None:
            _mention_check(conv, fail)
    finally:
        handle.close()
    return out


def _category_checks(conv: Conversation, handle, db_dir, workdir, fail) -> None:
    record, cat = conv.mutation, conv.category
    if cat in (C.NONEXISTENT_SELECT_COLUMN, C.NONEXISTENT_WHERE_COLUMN):
        try:
            sqlkit.execute(handle, record.seed_sql, limit=1)
            fail("seed_sql_unknown_column", "original SQL still executes")
        except ExecError as exc:
            if exc.kind is not ExecErrorKind.UNKNOWN_COLUMN:
                fail("seed_sql_unknown_column", exc.kind.value)
    elif cat is C.NONEXISTENT_FILTER_VALUE:
        try:
            n = len(_rows(handle, record.seed_sql))
            if n:
                fail("seed_sql_empty", f"{n} rows")
        except ExecError as exc:
            fail("seed_sql_empty", str(exc))
    elif cat in AMBIGUOUS_COLUMN_CATEGORIES:
        for sql in record.clarified_sql_candidates:
            if not sqlkit.executes(handle, sql):
                fail("candidate_executes", sql)
    elif cat is C.AMBIGUOUS_VALUES_WITHIN_COLUMN:
        for sql in record.clarified_sql_candidates:
            try:
                if not _rows(handle, sql):
                    fail("candidate_rows", sql)
            except ExecError as exc:
                fail("candidate_rows", str(exc))
    elif cat is C.UNSUPPORTED_JOIN:
        pristine = checkout_database(conv.db_id, db_dir, workdir)
        try:
            before = pristine.schema.fk_components()
        finally:
            pristine.close()
        after = handle.schema.fk_components()
        if after <= before:
            fail("fk_components", f"{before} -> {after}")


def _mention_check(conv: Conversation, fail) -> None:
    record = conv.mutation
    try:
        index = list(record.clarified_sql_candidates).index(conv.final_sql)
    except ValueError:
        fail("final_sql_candidate", "final SQL is not one of the clarified candidates")
        return
    chosen = clarified_target(record, index)
    reply = conv.turn_of("clarification_response")
    if reply is None or not mention_ok(reply.text, chosen.target, chosen.others):
        fail("mention_rule", repr(chosen.target))


def validate_dataset(conversations, db_dir, workdir=None) -> list[Violation]:
    out = []
    seen = set()
    for conv in conversations:
        if conv.id in seen:
            out.append(Violation(conv.id, "duplicate_id"))
        seen.add(conv.id)
        out.extend(check_conversation(conv, db_dir, workdir))
    return out
