"""Builders that turn pipeline state into tagged provider requests.

Every builder records its structured inputs in ``payload`` so the mock
provider can answer without reading the prompt text.
"""

from __future__ import annotations

from typing import Iterable, Sequence

from practiq.categories import CategoryLabel, definition_block
from practiq.corpus import ColumnRef, ResultTable
from practiq.provider.base import Decode, ProviderRequest, Task, load_prompt

EMPTY_CLARIFICATION = "empty_user_clarification_response"
SPEAKER = {"user": "USER", "assistant": "DB EXPERT"}


def tagged(tag: str, body: str) -> str:
    return f"<{tag}>\n{body}\n</{tag}>"


def render_dialogue(turns: Iterable[tuple[str, str]]) -> str:
    """``(role, text)`` pairs as USER / DB EXPERT lines."""
    return "\n".join(f"{SPEAKER[role]}: {text}" for role, text in turns)


def render_rows(table: ResultTable) -> str:
    lines = [" | ".join(table.columns)]
    lines += [" | ".join("NULL" if v is None else str(v) for v in row) for row in table.rows]
    return "\n".join(lines)


def _request(task: Task, user: str, payload: dict, system: str | None = None, max_tokens: int = 1024) -> ProviderRequest:
    return ProviderRequest(
        task=task,
        system_prompt=load_prompt(task) if system is None else system,
        messages=(("user", user),),
        decode=Decode(max_tokens=max_tokens),
        payload=payload,
    )


def synonym_columns(schema_md: str, ref: ColumnRef, question: str, sql: str) -> ProviderRequest:
    body = "\n\n".join(
        [
            tagged("schema", schema_md),
            tagged("column", f"table: {ref.table}\ncolumn: {ref.column}"),
            tagged("question", question),
            tagged("sql", sql),
        ]
    )
    return _request(Task.SYNONYM_COLUMNS, body, {"table": ref.table, "column": ref.column, "question": question})


def similar_values(schema_md: str, ref: ColumnRef, value, question: str, sql: str) -> ProviderRequest:
    body = "\n\n".join(
        [
            tagged("schema", schema_md),
            tagged("column", f"{ref.table}.{ref.column}"),
            tagged("value", str(value)),
            tagged("question", question),
            tagged("sql", sql),
        ]
    )
    return _request(Task.SIMILAR_VALUES, body, {"table": ref.table, "column": ref.column, "value": value})


def vaguify_question(schema_md: str, question: str, sql: str, value, op: str, column: str = "") -> ProviderRequest:
    body = "\n\n".join(
        [tagged("schema", schema_md), tagged("question", question), tagged("sql", sql), tagged("value", str(value))]
    )
    return _request(Task.VAGUIFY_QUESTION, body, {"question": question, "value": value, "op": op, "column": column})


def disconnected_tables(schema_md: str, db_id: str, tables: Sequence[str]) -> ProviderRequest:
    return _request(
        Task.DISCONNECTED_TABLES,
        tagged("schema", schema_md),
        {"db_id": db_id, "tables": list(tables)},
        max_tokens=2048,
    )


def fill_clarification(schema_md: str, turns: Sequence[tuple[str, str]], payload: dict) -> ProviderRequest:
    """``turns`` must hold the placeholder text in the user clarification slot."""
    body = tagged("schema", schema_md) + "\n\n" + tagged("conversation", render_dialogue(turns))
    return _request(Task.FILL_CLARIFICATION, body, dict(payload))


def refine(schema_md: str, turns: Sequence[tuple[str, str]], clarification: str) -> ProviderRequest:
    body = tagged("schema", schema_md) + "\n\n" + tagged("conversation", render_dialogue(turns))
    return _request(Task.REFINE, body, {"clarification_response": clarification})


def explain_results(schema_md: str, turns: Sequence[tuple[str, str]], table: ResultTable) -> ProviderRequest:
    body = "\n\n".join(
        [
            tagged("schema", schema_md),
            tagged("conversation", render_dialogue(turns)),
            tagged("execution_results", render_rows(table)),
        ]
    )
    return _request(Task.EXPLAIN_RESULTS, body, {"columns": table.columns, "rows": table.rows, "truncated": table.truncated})


def binary_category_check(schema_md: str, question: str, category: CategoryLabel) -> ProviderRequest:
    system = load_prompt(Task.BINARY_CATEGORY_CHECK).replace("{category_with_explanation}", definition_block([category]))
    body = tagged("schema", schema_md) + "\n\n" + tagged("question", question)
    return _request(Task.BINARY_CATEGORY_CHECK, body, {"category": category.value}, system=system)


def predict_sql(schema_md: str, turns: Sequence[tuple[str, str]], reference: str, hints: str = "") -> ProviderRequest:
    parts = [tagged("schema", schema_md)]
    if hints:
        parts.append(tagged("schema_links", hints))
    parts.append(tagged("conversation", render_dialogue(turns)))
    return _request(Task.PREDICT_SQL, "\n\n".join(parts), {"reference": reference})


def schema_linking(schema_md: str, turns: Sequence[tuple[str, str]], reference: str) -> ProviderRequest:
    body = tagged("schema", schema_md) + "\n\n" + tagged("conversation", render_dialogue(turns))
    return _request(Task.SCHEMA_LINKING, body, {"reference": reference})


def rank_candidates(question: str, candidates: Sequence[str]) -> ProviderRequest:
    body = tagged("question", question) + "\n\n" + tagged("candidates", repr(list(candidates)))
    return _request(Task.RANK_CANDIDATES, body, {"candidates": list(candidates)})
