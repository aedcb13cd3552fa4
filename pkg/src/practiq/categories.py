"""The nine question categories and their classification-prompt definitions."""

from __future__ import annotations

import enum
import json
from functools import lru_cache
from importlib import resources


class CategoryLabel(str, enum.Enum):
    AMBIGUOUS_SELECT_COLUMN = "Ambiguous_SELECT_Column"
    AMBIGUOUS_WHERE_COLUMN = "Ambiguous_WHERE_Column"
    AMBIGUOUS_VALUES_WITHIN_COLUMN = "Ambiguous_Values_Within_Column"
    AMBIGUOUS_FILTER_CRITERIA = "Ambiguous_Filter_Criteria"
    NONEXISTENT_SELECT_COLUMN = "Nonexistent_SELECT_Column"
    NONEXISTENT_WHERE_COLUMN = "Nonexistent_WHERE_Column"
    NONEXISTENT_FILTER_VALUE = "Nonexistent_Filter_Value"
    UNSUPPORTED_JOIN = "Unsupported_Join"
    ANSWERABLE = "answerable"

    @classmethod
    def parse(cls, text: str) -> "CategoryLabel":
        """Match a label token case-insensitively; spaces and underscores are interchangeable."""
        key = "_".join(text.strip().replace("-", " ").split()).lower()
        for label in cls:
            if label.value.lower() == key:
                return label
        raise ValueError(f"unknown category {text!r}")

    @property
    def is_mutated(self) -> bool:
        return self is not CategoryLabel.ANSWERABLE

    @property
    def title(self) -> str:
        return self.value.replace("_", " ").replace("answerable", "Answerable")


MUTATED_CATEGORIES = tuple(c for c in CategoryLabel if c.is_mutated)

# Categories whose clarification picks between two introduced columns.
AMBIGUOUS_COLUMN_CATEGORIES = frozenset(
    {CategoryLabel.AMBIGUOUS_SELECT_COLUMN, CategoryLabel.AMBIGUOUS_WHERE_COLUMN}
)


@lru_cache(maxsize=None)
def definitions() -> dict[CategoryLabel, str]:
    raw = json.loads(
        resources.files("practiq").joinpath("data/category_definitions.json").read_text("utf-8")
    )
    return {CategoryLabel(k): v for k, v in raw.items()}


def definition_block(labels=None) -> str:
    """Render ``- Name: definition`` lines for the classification prompts."""
    labels = list(labels) if labels is not None else list(MUTATED_CATEGORIES)
    defs = definitions()
    return "\n".join(f"- {label.value}: {defs[label]}" for label in labels)
