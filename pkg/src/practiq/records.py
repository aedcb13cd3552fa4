"""Mutation records, turns and conversations, with their JSONL wire form."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Any

from practiq.categories import CategoryLabel
from practiq.corpus import (
    FORMAT_VERSION,
    AddColumn,
    ColumnRef,
    CreateTables,
    DeleteRowsByValue,
    RemoveColumn,
    ReplaceCellValues,
    ResultTable,
    delta_from_dict,
)
from practiq.errors import SchemaVersionMismatch

ROLE_OF_KIND = {
    "initial_question": "user",
    "clarification_request": "assistant",
    "clarification_response": "user",
    "final_sql": "assistant",
    "result_explanation": "assistant",
}

CLARIFICATION_SHAPE = (
    "initial_question",
    "clarification_request",
    "clarification_response",
    "final_sql",
    "result_explanation",
)
DIRECT_SHAPE = ("initial_question", "final_sql", "result_explanation")


def _item_to_json(item):
    if isinstance(item, ColumnRef):
        return {"column": item.to_list()}
    return {"value": item}


def _item_from_json(raw):
    if "column" in raw:
        return ColumnRef.from_list(raw["column"])
    return raw["value"]


@dataclass(frozen=True)
class MutationRecord:
    """What a category operator did to one seed example."""

    category: CategoryLabel
    seed_example_id: str
    db_id: str
    seed_question: str
    seed_sql: str
    target: ColumnRef | None
    target_value: Any = None
    introduced: tuple = ()
    mutated_question: str = ""
    deltas: tuple = ()
    clarified_sql_candidates: tuple[str, ...] = ()
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        cat = self.category
        if cat in (CategoryLabel.AMBIGUOUS_SELECT_COLUMN, CategoryLabel.AMBIGUOUS_WHERE_COLUMN):
            if len(self.introduced) != 2 or len(self.clarified_sql_candidates) != 2:
                raise ValueError(f"{cat.value} needs 2 introduced columns and 2 candidates")
        elif cat is CategoryLabel.AMBIGUOUS_VALUES_WITHIN_COLUMN:
            if len(self.introduced) != 2:
                raise ValueError(f"{cat.value} needs 2 introduced values")
        elif cat in (
            CategoryLabel.NONEXISTENT_SELECT_COLUMN,
            CategoryLabel.NONEXISTENT_WHERE_COLUMN,
            CategoryLabel.NONEXISTENT_FILTER_VALUE,
            CategoryLabel.UNSUPPORTED_JOIN,
        ):
            if len(self.clarified_sql_candidates) != 1:
                raise ValueError(f"{cat.value} needs exactly 1 clarified candidate")
        if not self.mutated_question:
            object.__setattr__(self, "mutated_question", self.seed_question)

    def summary(self) -> dict:
        removed, added, value_map = [], [], {}
        for d in self.deltas:
            if isinstance(d, RemoveColumn):
                removed.append(str(d.ref))
            elif isinstance(d, AddColumn):
                added.append(str(d.ref))
            elif isinstance(d, CreateTables):
                added.extend(t.name for t in d.tables)
            elif isinstance(d, ReplaceCellValues):
                value_map[str(d.old_value)] = list(d.new_values)
            elif isinstance(d, DeleteRowsByValue):
                value_map[str(d.value)] = []
        return {"removed": removed, "added": added, "value_map": value_map}

    def to_dict(self) -> dict:
        return {
            "category": self.category.value,
            "seed_example_id": self.seed_example_id,
            "db_id": self.db_id,
            "seed_question": self.seed_question,
            "seed_sql": self.seed_sql,
            "target": None if self.target is None else self.target.to_list(),
            "target_value": self.target_value,
            "introduced": [_item_to_json(i) for i in self.introduced],
            "mutated_question": self.mutated_question,
            "deltas": [d.to_dict() for d in self.deltas],
            "clarified_sql_candidates": list(self.clarified_sql_candidates),
            "details": self.details,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "MutationRecord":
        return cls(
            category=_category(raw["category"]),
            seed_example_id=raw["seed_example_id"],
            db_id=raw["db_id"],
            seed_question=raw["seed_question"],
            seed_sql=raw["seed_sql"],
            target=None if raw["target"] is None else ColumnRef.from_list(raw["target"]),
            target_value=raw.get("target_value"),
            introduced=tuple(_item_from_json(i) for i in raw.get("introduced", [])),
            mutated_question=raw.get("mutated_question", ""),
            deltas=tuple(delta_from_dict(d) for d in raw.get("deltas", [])),
            clarified_sql_candidates=tuple(raw.get("clarified_sql_candidates", [])),
            details=dict(raw.get("details") or {}),
        )


def _category(text: str) -> CategoryLabel:
    try:
        return CategoryLabel(text)
    except ValueError:
        raise SchemaVersionMismatch(f"unknown category {text!r}") from None


@dataclass(frozen=True)
class Turn:
    role: str
    kind: str
    text: str
    sql: str | None = None

    def __post_init__(self):
        if ROLE_OF_KIND.get(self.kind) != self.role:
            raise ValueError(f"turn kind {self.kind!r} cannot have role {self.role!r}")
        if self.sql is not None and self.kind != "final_sql":
            raise ValueError("only final_sql turns carry SQL")

    def to_dict(self) -> dict:
        out = {"role": self.role, "kind": self.kind, "text": self.text}
        if self.sql is not None:
            out["sql"] = self.sql
        return out

    @classmethod
    def from_dict(cls, raw: dict) -> "Turn":
        return cls(raw["role"], raw["kind"], raw["text"], raw.get("sql"))


def turn(kind: str, text: str, sql: str | None = None) -> Turn:
    return Turn(ROLE_OF_KIND[kind], kind, text, sql)


@dataclass(frozen=True)
class Conversation:
    id: str
    db_id: str
    category: CategoryLabel
    mutation: MutationRecord | None
    turns: tuple[Turn, ...]
    gold_sql: str
    execution: ResultTable
    helpful_sql: str | None = None
    provenance: dict = field(default_factory=dict)

    def turn_of(self, kind: str) -> Turn | None:
        for t in self.turns:
            if t.kind == kind:
                return t
        return None

    @property
    def shape(self) -> tuple[str, ...]:
        return tuple(t.kind for t in self.turns)

    @property
    def final_sql(self) -> str:
        t = self.turn_of("final_sql")
        return t.sql if t is not None else self.gold_sql

    @property
    def initial_question(self) -> str:
        return self.turns[0].text

    def check_shape(self) -> None:
        """Raise ValueError unless the turn order is one of the two permitted shapes."""
        shape = self.shape
        if self.category is CategoryLabel.ANSWERABLE or self.helpful_sql is not None:
            if shape != DIRECT_SHAPE:
                raise ValueError(f"{self.id}: expected {DIRECT_SHAPE}, got {shape}")
        elif shape != CLARIFICATION_SHAPE:
            raise ValueError(f"{self.id}: expected {CLARIFICATION_SHAPE}, got {shape}")

    def with_turns(self, turns) -> "Conversation":
        return replace(self, turns=tuple(turns))

    def to_dict(self) -> dict:
        mutation = self.mutation.summary() if self.mutation else {"removed": [], "added": [], "value_map": {}}
        mutation["record"] = self.mutation.to_dict() if self.mutation else None
        out = {
            "format_version": FORMAT_VERSION,
            "id": self.id,
            "db_id": self.db_id,
            "category": self.category.value,
            "mutation": mutation,
            "turns": [t.to_dict() for t in self.turns],
            "gold_sql": self.gold_sql,
            "execution": self.execution.to_dict(),
            "provenance": dict(self.provenance),
        }
        if self.helpful_sql is not None:
            out["helpful_sql"] = self.helpful_sql
        return out

    @classmethod
    def from_dict(cls, raw: dict) -> "Conversation":
        if raw.get("format_version") != FORMAT_VERSION:
            raise SchemaVersionMismatch(f"format_version {raw.get('format_version')!r} != {FORMAT_VERSION}")
        record = (raw.get("mutation") or {}).get("record")
        return cls(
            id=raw["id"],
            db_id=raw["db_id"],
            category=_category(raw["category"]),
            mutation=None if record is None else MutationRecord.from_dict(record),
            turns=tuple(Turn.from_dict(t) for t in raw["turns"]),
            gold_sql=raw["gold_sql"],
            execution=ResultTable.from_dict(raw["execution"]),
            helpful_sql=raw.get("helpful_sql"),
            provenance=dict(raw.get("provenance") or {}),
        )
