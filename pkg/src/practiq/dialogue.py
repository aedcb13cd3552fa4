"""Stages 2 and 3: turn a mutation record into a conversation.

The clarified SQL is fixed first (reverse generation); the user's
clarification is then written to match it. Refinement may only touch text.
"""

from __future__ import annotations

import json
import logging
import random
import re
from dataclasses import dataclass, replace
from functools import lru_cache
from importlib import resources
from typing import Sequence

from practiq import PIPELINE_VERSION, prompting, sqlkit
from practiq.categories import AMBIGUOUS_COLUMN_CATEGORIES, CategoryLabel
from practiq.corpus import ColumnRef, CorpusExample, DatabaseHandle, ResultTable
from practiq.errors import (
    ExecError,
    FilterReject,
    PractiqError,
    ProviderRefusal,
    RateLimited,
    RefNotFound,
    Skip,
    SkipReason,
    TagMissing,
)
from practiq.provider.base import Provider, ask
from practiq.provider.mock import words
from practiq.records import Conversation, MutationRecord, Turn, turn

log = logging.getLogger(__name__)

PLACEHOLDER = prompting.EMPTY_CLARIFICATION
MAX_EXPLANATION_SENTENCES = 2


@lru_cache(maxsize=None)
def templates() -> dict:
    return json.loads(resources.files("practiq").joinpath("data/templates.json").read_text("utf-8"))


def _value_text(value) -> str:
    if isinstance(value, float) and value.is_integer():
        return str(int(value))
    return str(value)


# ----------------------------------------------------------- clarification


def build_clarification_request(record: MutationRecord) -> str:
    """Fill the category template with the record's columns and values."""
    cat = record.category
    if cat is CategoryLabel.ANSWERABLE:
        raise ValueError("answerable examples get no clarification request")
    template = templates()["clarification_request"][cat.value]
    target = record.target
    slots = {
        "value": _value_text(record.target_value),
        "column": words(target.column).lower() if target else "",
        "table": words(target.table).lower() if target else "",
    }
    if cat in AMBIGUOUS_COLUMN_CATEGORIES:
        slots["c1"], slots["c2"] = (ref.column for ref in record.introduced)
    elif cat is CategoryLabel.AMBIGUOUS_VALUES_WITHIN_COLUMN:
        slots["v1"], slots["v2"] = record.introduced
    elif cat is CategoryLabel.UNSUPPORTED_JOIN:
        join = list(record.details.get("join") or [])
        names = list(record.introduced)
        a = join[0] if join else names[0]
        b = join[1] if len(join) > 1 else names[-1]
        slots["a"], slots["b"] = words(a), words(b)
    return template.format(**slots)


@dataclass(frozen=True)
class Clarified:
    sql: str
    target: str | None  # what the clarification must name
    others: tuple[str, ...] = ()  # introduced alternatives it must not name
    clarified_question: str | None = None


def clarified_target(record: MutationRecord, index: int) -> Clarified:
    cat = record.category
    sql = record.clarified_sql_candidates[index]
    if cat in AMBIGUOUS_COLUMN_CATEGORIES:
        names = [ref.column for ref in record.introduced]
        return Clarified(sql, names[index], tuple(n for i, n in enumerate(names) if i != index))
    if cat is CategoryLabel.AMBIGUOUS_VALUES_WITHIN_COLUMN:
        values = [str(v) for v in record.introduced]
        return Clarified(sql, values[index], tuple(v for i, v in enumerate(values) if i != index))
    if cat is CategoryLabel.AMBIGUOUS_FILTER_CRITERIA:
        return Clarified(sql, _value_text(record.target_value), clarified_question=record.seed_question)
    if cat is CategoryLabel.NONEXISTENT_SELECT_COLUMN:
        return Clarified(sql, ColumnRef.from_list(record.details["substitute"]).column)
    if cat is CategoryLabel.NONEXISTENT_WHERE_COLUMN:
        return Clarified(
            sql, _value_text(record.target_value), clarified_question=record.details.get("alternate_question")
        )
    if cat is CategoryLabel.NONEXISTENT_FILTER_VALUE:
        return Clarified(sql, _value_text(record.details["alternate_value"]))
    return Clarified(sql, None, clarified_question=record.seed_question)


def select_clarified_sql(record: MutationRecord, handle: DatabaseHandle, rng: random.Random) -> Clarified:
    """Seeded pick among the candidates that execute on the mutated database."""
    ok = [i for i, sql in enumerate(record.clarified_sql_candidates) if sqlkit.executes(handle, sql)]
    if not ok:
        raise Skip(SkipReason.NO_EXECUTABLE_CANDIDATE, "no clarified candidate executes")
    return clarified_target(record, rng.choice(ok))


def _norm(text: str) -> str:
    return " ".join(re.sub(r"[_\s]+", " ", text).lower().split())


def mention_ok(text: str, target: str | None, others: Sequence[str] = ()) -> bool:
    """The clarification names ``target`` and none of ``others``.

    Matching is case-insensitive with underscores read as spaces. An
    alternative that is a substring of the target is only checked outside
    the target's own mentions.
    """
    if target is None:
        return True
    body, goal = _norm(text), _norm(target)
    if goal not in body:
        return False
    rest = body.replace(goal, " ")
    return not any(_norm(o) in rest for o in others if _norm(o))


def _dialogue(turns: Sequence[Turn]) -> list[tuple[str, str]]:
    return [(t.role, t.sql if t.kind == "final_sql" and t.sql else t.text) for t in turns]


def reverse_generate_clarification(
    draft: Sequence[Turn], record: MutationRecord, chosen: Clarified, provider: Provider, schema_md: str
) -> str:
    """Write the user turn that leads to ``chosen.sql``; rejected unless it passes the mention rule."""
    if record.category is CategoryLabel.AMBIGUOUS_FILTER_CRITERIA:
        text = record.seed_question
    else:
        kind = "value" if record.category in (
            CategoryLabel.AMBIGUOUS_VALUES_WITHIN_COLUMN,
            CategoryLabel.NONEXISTENT_FILTER_VALUE,
        ) else "substitute" if record.category is CategoryLabel.NONEXISTENT_SELECT_COLUMN else "column"
        payload = {
            "category": record.category.value,
            "target": chosen.target,
            "target_kind": kind,
            "clarified_question": chosen.clarified_question,
            "sql": chosen.sql,
        }
        request = prompting.fill_clarification(schema_md, _dialogue(draft), payload)
        text = ask(provider, request)
    if not text:
        raise ProviderRefusal("empty clarification")
    if not mention_ok(text, chosen.target, chosen.others):
        raise FilterReject(f"clarification does not single out {chosen.target!r}")
    return text


# ------------------------------------------------------------- helpful SQL


def build_helpful_sql(record: MutationRecord, mutated_schema, seed_schema=None) -> str:
    """One query that answers every interpretation of an ambiguous column."""
    if record.category not in AMBIGUOUS_COLUMN_CATEGORIES or len(record.introduced) != 2:
        raise ValueError("helpful SQL needs an ambiguous-column record with two candidates")
    c1, c2 = record.introduced
    tree = sqlkit.parse(record.seed_sql)
    if tree.is_set_operation:
        raise RefNotFound("helpful SQL is not built for set operations")
    if record.category is CategoryLabel.AMBIGUOUS_SELECT_COLUMN:
        swapped = sqlkit.rewrite(tree, sqlkit.SubstituteColumn(record.target, c1), seed_schema)
        return sqlkit.render(sqlkit.mirror_projections(swapped, c1, c2, mutated_schema))
    widened = sqlkit.rewrite(tree, sqlkit.WidenPredicate(record.target, (c1, c2), record.target_value), seed_schema)
    return sqlkit.render(sqlkit.rewrite(widened, sqlkit.AddProjection((c1, c2)), mutated_schema))


# ------------------------------------------------------- refine and explain


def _sentences(text: str) -> list[str]:
    parts = re.split(r"(?<=[.!?])\s+", text.strip())
    return [p for p in parts if p]


def explain_results(conversation: Conversation, provider: Provider, schema_md: str) -> str:
    """At most two sentences answering the last user turn from the (capped) result table."""
    table = conversation.execution
    turns = [t for t in conversation.turns if t.kind != "result_explanation"]
    try:
        text = ask(provider, prompting.explain_results(schema_md, _dialogue(turns), table))
    except (ProviderRefusal, RateLimited, TagMissing):
        text = ""
    sentences = _sentences(text)
    if not sentences:
        return templates()["explanation_fallback"].format(n=len(table.rows))
    return " ".join(sentences[:MAX_EXPLANATION_SENTENCES])


def _parse_refined(raw: str, turns: Sequence[Turn]) -> list[Turn] | None:
    """A refinement is either a bare clarification text or a JSON list of turns."""
    stripped = raw.strip()
    if stripped.startswith("["):
        try:
            items = json.loads(stripped)
            new = [Turn.from_dict(t) for t in items]
        except (ValueError, KeyError, TypeError):
            return None
        return new
    out = []
    for t in turns:
        out.append(replace(t, text=stripped) if t.kind == "clarification_response" else t)
    return out


def _only_text_changed(old: Sequence[Turn], new: Sequence[Turn]) -> bool:
    if len(old) != len(new):
        return False
    return all(a.role == b.role and a.kind == b.kind and a.sql == b.sql and b.text for a, b in zip(old, new))


def refine_conversation(
    conversation: Conversation, provider: Provider, schema_md: str, chosen: Clarified | None = None
) -> Conversation:
    """Let the provider polish turn text; SQL, category and mutation never change."""
    if conversation.turn_of("clarification_response") is None:
        return conversation
    current = conversation.turn_of("clarification_response").text
    flagged = replace(conversation, provenance={**conversation.provenance, "refined": False})
    try:
        raw = ask(provider, prompting.refine(schema_md, _dialogue(conversation.turns), current))
    except (ProviderRefusal, RateLimited, TagMissing):
        return flagged
    new_turns = _parse_refined(raw, conversation.turns)
    if new_turns is None or not _only_text_changed(conversation.turns, new_turns):
        log.info("%s: refinement altered structure or SQL, kept original", conversation.id)
        return flagged
    if chosen is not None:
        reply = next(t for t in new_turns if t.kind == "clarification_response")
        if not mention_ok(reply.text, chosen.target, chosen.others):
            return flagged
    return replace(
        conversation, turns=tuple(new_turns), provenance={**conversation.provenance, "refined": True}
    )


# --------------------------------------------------------------- assembly


def _provenance(seed_example_id: str, provider: Provider, seed: int) -> dict:
    return {
        "seed_example_id": seed_example_id,
        "pipeline_version": PIPELINE_VERSION,
        "provider_id": getattr(provider, "provider_id", "unknown"),
        "seed": seed,
    }


def _execute(handle: DatabaseHandle, sql: str) -> ResultTable:
    try:
        return sqlkit.execute(handle, sql)
    except ExecError as exc:
        raise Skip(SkipReason.EXEC_ERROR, str(exc)) from None


def conversation_id(example_id: str, category: CategoryLabel) -> str:
    return f"{example_id}-{category.value}"


def _finish(conv: Conversation, provider: Provider, schema_md: str) -> Conversation:
    text = explain_results(conv, provider, schema_md)
    return conv.with_turns([*conv.turns, turn("result_explanation", text)])


def assemble_helpful(
    record: MutationRecord, handle: DatabaseHandle, provider: Provider, schema_md: str, seed: int, seed_schema=None
) -> Conversation:
    sql = build_helpful_sql(record, handle.schema, seed_schema)
    table = _execute(handle, sql)
    c1, c2 = (ref.column for ref in record.introduced)
    turns = [
        turn("initial_question", record.mutated_question),
        turn("final_sql", templates()["helpful_sql"].format(c1=c1, c2=c2), sql),
    ]
    conv = Conversation(
        id=conversation_id(record.seed_example_id, record.category),
        db_id=record.db_id,
        category=record.category,
        mutation=record,
        turns=tuple(turns),
        gold_sql=sql,
        execution=table,
        helpful_sql=sql,
        provenance={**_provenance(record.seed_example_id, provider, seed), "helpful": True},
    )
    return _finish(conv, provider, schema_md)


def assemble_clarification(
    record: MutationRecord,
    handle: DatabaseHandle,
    provider: Provider,
    schema_md: str,
    rng: random.Random,
    seed: int,
    refine: bool = True,
) -> Conversation:
    """Four-turn exchange plus the result explanation."""
    chosen = select_clarified_sql(record, handle, rng)
    request = build_clarification_request(record)
    final_text = templates()["final_sql"]
    draft = [
        turn("initial_question", record.mutated_question),
        turn("clarification_request", request),
        turn("clarification_response", PLACEHOLDER),
        turn("final_sql", final_text, chosen.sql),
    ]
    try:
        reply = reverse_generate_clarification(draft, record, chosen, provider, schema_md)
    except (ProviderRefusal, RateLimited, TagMissing) as exc:
        raise Skip(SkipReason.PROVIDER_REFUSAL, str(exc)) from None
    draft[2] = turn("clarification_response", reply)
    table = _execute(handle, chosen.sql)
    conv = Conversation(
        id=conversation_id(record.seed_example_id, record.category),
        db_id=record.db_id,
        category=record.category,
        mutation=record,
        turns=tuple(draft),
        gold_sql=chosen.sql,
        execution=table,
        provenance=_provenance(record.seed_example_id, provider, seed),
    )
    if refine:
        conv = refine_conversation(conv, provider, schema_md, chosen)
    return _finish(conv, provider, schema_md)


def assemble_answerable(
    example: CorpusExample, db: DatabaseHandle, provider: Provider, schema_md: str, seed: int = 0
) -> Conversation:
    """Three-turn conversation over an unmodified database."""
    table = _execute(db, example.gold_sql)
    conv = Conversation(
        id=conversation_id(example.example_id, CategoryLabel.ANSWERABLE),
        db_id=example.db_id,
        category=CategoryLabel.ANSWERABLE,
        mutation=None,
        turns=(
            turn("initial_question", example.question),
            turn("final_sql", templates()["answerable_sql"], example.gold_sql),
        ),
        gold_sql=example.gold_sql,
        execution=table,
        provenance=_provenance(example.example_id, provider, seed),
    )
    return _finish(conv, provider, schema_md)


def try_helpful(record: MutationRecord, handle: DatabaseHandle, provider: Provider, schema_md: str, seed: int, seed_schema=None):
    """Helpful conversation, or ``None`` when the combined SQL cannot be built or run."""
    try:
        return assemble_helpful(record, handle, provider, schema_md, seed, seed_schema)
    except (PractiqError, ValueError) as exc:
        log.debug("%s: helpful SQL unavailable (%s)", record.seed_example_id, exc)
        return None
