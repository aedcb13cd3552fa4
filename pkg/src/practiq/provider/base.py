"""Provider boundary: request/response types and tagged-output parsing."""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from typing import Protocol

from practiq.errors import ProviderRefusal, TagMissing


class Task(str, enum.Enum):
    SYNONYM_COLUMNS = "SynonymColumns"
    SIMILAR_VALUES = "SimilarValues"
    VAGUIFY_QUESTION = "VaguifyQuestion"
    DISCONNECTED_TABLES = "DisconnectedTables"
    FILL_CLARIFICATION = "FillClarification"
    REFINE = "Refine"
    EXPLAIN_RESULTS = "ExplainResults"
    BINARY_CATEGORY_CHECK = "BinaryCategoryCheck"
    NINE_WAY_CLASSIFY = "NineWayClassify"
    PREDICT_SQL = "PredictSql"
    # optional kinds: candidate ranking and the schema-linking step of the two-call strategy
    RANK_CANDIDATES = "RankCandidates"
    SCHEMA_LINKING = "SchemaLinking"


PROMPT_FILES = {
    Task.SYNONYM_COLUMNS: "synonym_columns.txt",
    Task.SIMILAR_VALUES: "similar_values.txt",
    Task.VAGUIFY_QUESTION: "vaguify_question.txt",
    Task.DISCONNECTED_TABLES: "disconnected_tables.txt",
    Task.FILL_CLARIFICATION: "fill_clarification.txt",
    Task.REFINE: "refine.txt",
    Task.EXPLAIN_RESULTS: "explain_results.txt",
    Task.BINARY_CATEGORY_CHECK: "binary_category_check.txt",
    Task.NINE_WAY_CLASSIFY: "nine_way_classify.txt",
    Task.PREDICT_SQL: "predict_sql.txt",
    Task.RANK_CANDIDATES: "rank_candidates.txt",
    Task.SCHEMA_LINKING: "schema_linking.txt",
}


@lru_cache(maxsize=None)
def load_prompt(task: Task) -> str:
    return resources.files("practiq").joinpath(f"data/prompts/{PROMPT_FILES[task]}").read_text("utf-8")


@dataclass(frozen=True)
class Decode:
    temperature: float = 0.0
    top_p: float = 1.0
    max_tokens: int = 1024


@dataclass(frozen=True)
class ProviderRequest:
    """One completion call.

    ``payload`` carries the structured inputs the prompt was built from. The
    mock provider reads it; the live adapter sends only the prompt text.
    """

    task: Task
    system_prompt: str
    messages: tuple[tuple[str, str], ...]
    decode: Decode = field(default_factory=Decode)
    payload: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        for role, _ in self.messages:
            if role not in ("user", "assistant"):
                raise ValueError(f"bad message role {role!r}")

    def wire_messages(self) -> list[dict]:
        out = [{"role": "system", "content": self.system_prompt}] if self.system_prompt else []
        out.extend({"role": r, "content": c} for r, c in self.messages)
        return out


@dataclass(frozen=True)
class ProviderResponse:
    text: str
    usage: dict = field(default_factory=dict)
    provider_id: str = ""

    def __post_init__(self):
        if self.text is None:
            raise ValueError("response text is null")


class Provider(Protocol):
    provider_id: str

    def complete(self, request: ProviderRequest) -> ProviderResponse: ...


def parse_tagged(text: str, tag: str) -> str:
    """Inner text of the first complete ``<tag>...</tag>`` span, trimmed.

    With nested duplicates the span that closes first wins, i.e. the innermost one.
    """
    close = re.search(rf"</{re.escape(tag)}\s*>", text)
    if close is None:
        raise TagMissing(f"no <{tag}> span in provider output")
    opens = list(re.finditer(rf"<{re.escape(tag)}\s*>", text[: close.start()]))
    if not opens:
        raise TagMissing(f"no opening <{tag}> before </{tag}>")
    return text[opens[-1].end() : close.start()].strip()


def ask(provider: Provider, request: ProviderRequest, tag: str = "result") -> str:
    """Complete ``request`` and return its tagged answer; a missing tag is a refusal."""
    response = provider.complete(request)
    try:
        return parse_tagged(response.text, tag)
    except TagMissing as exc:
        raise ProviderRefusal(f"{request.task.value}: {exc}") from None
