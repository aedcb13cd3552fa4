"""Deterministic offline provider backed by bundled fixtures and fallback rules."""

from __future__ import annotations

import json
import re
from functools import lru_cache
from importlib import resources

from practiq.errors import ProviderRefusal
from practiq.provider.base import ProviderRequest, ProviderResponse, Task

ECHO = "echo"


@lru_cache(maxsize=None)
def fixtures() -> dict:
    return json.loads(resources.files("practiq").joinpath("data/mock_fixtures.json").read_text("utf-8"))


def words(name: str) -> str:
    return re.sub(r"[_\s]+", " ", name).strip()


def _fallback_tables(db_id: str, tables: list[str]) -> dict:
    anchor = tables[0] if tables else "records"
    return {
        "tables": [
            {
                "name": "library",
                "columns": [
                    {"name": "library_id", "type": "number"},
                    {"name": "library_name", "type": "text"},
                    {"name": "city", "type": "text"},
                ],
                "primary_key": ["library_id"],
                "foreign_keys": [],
                "rows": [[1, "Central Library", "Springfield"], [2, "East Branch", "Shelbyville"]],
            },
            {
                "name": "books",
                "columns": [
                    {"name": "book_id", "type": "number"},
                    {"name": "library_id", "type": "number"},
                    {"name": "title", "type": "text"},
                ],
                "primary_key": ["book_id"],
                "foreign_keys": [["library_id", "library", "library_id"]],
                "rows": [[1, 1, "ABC"], [2, 1, "XYZ"], [3, 2, "Collected Essays"]],
            },
        ],
        "question": f'Which {words(anchor)} entries borrowed the book titled "ABC"?',
        "join": ["books", anchor],
    }


def _vague_fallback(question: str, value, op: str, column: str = "") -> str:
    text = str(int(value)) if isinstance(value, float) and value.is_integer() else str(value)
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        replacement = {">": "a high", ">=": "a high", "<": "a low", "<=": "a low"}.get(op, "a typical") + " threshold"
    else:
        replacement = f"a certain {words(column).lower() or 'value'}"
    pattern = re.compile(rf"(?<!\w)'?{re.escape(text)}'?(?!\w)", re.I)
    if pattern.search(question):
        return pattern.sub(replacement, question, count=1)
    return question


def _explain(columns, rows, truncated) -> str:
    if not rows:
        return "There are no matching rows for this question."
    if len(rows) == 1 and len(columns) == 1:
        return f"The answer is {rows[0][0]}."
    first = ", ".join("NULL" if v is None else str(v) for v in rows[0])
    count = f"more than {len(rows)}" if truncated else str(len(rows))
    noun = "row" if len(rows) == 1 and not truncated else "rows"
    return f"The query returned {count} {noun}. The first one is {first}."


class MockProvider:
    """Pure function of (request payload, seed, fixtures).

    ``classify``, ``predict_sql`` and ``binary`` are either ``"echo"``
    (answer with the reference carried in the payload) or a constant reply.
    Tasks listed in ``refuse`` answer without a result tag.
    """

    def __init__(self, seed: int = 0, classify: str = ECHO, predict_sql: str = ECHO, binary: str = ECHO, refuse=()):
        self.seed = seed
        self.classify = classify
        self.predict_sql = predict_sql
        self.binary = binary
        self.refuse = frozenset(Task(t) for t in refuse)
        self.provider_id = "mock-1"

    def complete(self, request: ProviderRequest) -> ProviderResponse:
        prompt_chars = len(request.system_prompt) + sum(len(m) for _, m in request.messages)
        if request.task in self.refuse:
            text = "<scratch>declined</scratch>"
        else:
            text = f"<scratch>mock {request.task.value}</scratch>\n<result>\n{self._answer(request)}\n</result>"
        return ProviderResponse(text, {"prompt_chars": prompt_chars, "completion_chars": len(text)}, self.provider_id)

    def _answer(self, request: ProviderRequest) -> str:
        p = request.payload
        fx = fixtures()
        task = request.task
        if task is Task.SYNONYM_COLUMNS:
            names = fx["synonym_columns"].get(p["column"].lower())
            if names is None:
                names = [f"{p['column']} (variant A)", f"{p['column']} (variant B)"]
            return repr([{"table": p["table"], "column": n} for n in names])
        if task is Task.SIMILAR_VALUES:
            value = str(p["value"])
            return repr(fx["similar_values"].get(value, [f"{value} 1", f"{value} 2"]))
        if task is Task.VAGUIFY_QUESTION:
            q = p["question"]
            return fx["vaguify_question"].get(q) or _vague_fallback(q, p["value"], p.get("op", "="), p.get("column", ""))
        if task is Task.DISCONNECTED_TABLES:
            spec = fx["disconnected_tables"].get(p["db_id"]) or _fallback_tables(p["db_id"], p["tables"])
            return json.dumps(spec, sort_keys=True)
        if task is Task.FILL_CLARIFICATION:
            return self._clarify(p, fx["clarifications"])
        if task is Task.REFINE:
            return p["clarification_response"]
        if task is Task.EXPLAIN_RESULTS:
            return _explain(p["columns"], p["rows"], p["truncated"])
        if task is Task.BINARY_CATEGORY_CHECK:
            return p["category"] if self.binary == ECHO else self.binary
        if task is Task.NINE_WAY_CLASSIFY:
            return p["reference"] if self.classify == ECHO else self.classify
        if task is Task.PREDICT_SQL:
            return p["reference"] if self.predict_sql == ECHO else self.predict_sql
        if task is Task.SCHEMA_LINKING:
            return "(mock schema links)"
        if task is Task.RANK_CANDIDATES:
            return repr(sorted(p["candidates"]))
        raise ProviderRefusal(f"mock has no rule for {task.value}")

    @staticmethod
    def _clarify(p: dict, table: dict) -> str:
        if p.get("clarified_question"):
            return p["clarified_question"]
        target = p.get("target")
        if target is None:
            return "Could you answer a related question instead?"
        if target in table:
            return table[target]
        if p.get("target_kind") == "value":
            return f'What about "{target}" instead?'
        if p.get("target_kind") == "substitute":
            return f"Can you provide the {words(target)} instead?"
        return f"I meant the {words(target)}."
