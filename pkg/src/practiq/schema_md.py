"""Markdown rendering of a schema with example cell values."""

from __future__ import annotations

from typing import Mapping, Sequence

from practiq.corpus import ColumnRef, DatabaseHandle, SchemaDef

SAMPLES_PER_COLUMN = 3
_TYPE_NAMES = {"text": "str", "number": "number", "time": "datetime", "boolean": "bool", "others": "blob"}


def sample_values(handle: DatabaseHandle, schema: SchemaDef | None = None, k: int = SAMPLES_PER_COLUMN) -> dict:
    """Up to ``k`` distinct non-null values per column, in row order."""
    schema = schema or handle.schema
    return {ref: handle.distinct_values(ref, limit=k) for ref in schema.columns()}


def _data_type(col_type: str, samples: Sequence) -> str:
    if samples and all(isinstance(v, int) and not isinstance(v, bool) for v in samples):
        return "int"
    if samples and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in samples):
        return "float"
    return _TYPE_NAMES.get(col_type, "str")


def _cell(value) -> str:
    return str(value).replace("|", "\\|").replace("\n", " ")


def render_schema_markdown(
    schema: SchemaDef,
    value_samples: Mapping[ColumnRef, Sequence] | None = None,
    relevant_values: Mapping[ColumnRef, Sequence] | None = None,
) -> str:
    """One ``## table`` section per table, columns in schema order.

    ``relevant_values`` (retrieved or oracle cell values) is appended as a
    trailing block so the classifier can see them.
    """
    value_samples = value_samples or {}
    sections = []
    for table in schema.tables:
        lines = [f"## {table.name}", "", "| Column Name | Data Type | Description |", "| --- | --- | --- |"]
        for col in table.columns:
            samples = list(value_samples.get(ColumnRef(table.name, col.name), ()))[:SAMPLES_PER_COLUMN]
            desc = "Example values: " + ", ".join(_cell(v) for v in samples) if samples else ""
            lines.append(f"| {col.name} | {_data_type(col.col_type, samples)} | {desc} |")
        sections.append("\n".join(lines))
    if schema.foreign_keys:
        fks = ", ".join(f"{a} = {b}" for a, b in schema.foreign_keys)
        sections.append(f"Foreign keys: {fks}")
    if relevant_values:
        lines = ["Relevant values:"]
        for ref in sorted(relevant_values):
            vals = ", ".join(f'"{_cell(v)}"' for v in relevant_values[ref])
            lines.append(f'"{ref}": [{vals}]')
        sections.append("\n".join(lines))
    return "\n\n".join(sections)


def describe(handle: DatabaseHandle, relevant_values=None) -> str:
    """Markdown for the handle's current schema with live samples."""
    schema = handle.schema
    return render_schema_markdown(schema, sample_values(handle, schema), relevant_values)
