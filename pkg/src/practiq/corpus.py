"""Spider-format ingestion, isolated database copies, schema deltas and dataset I/O.

Source databases are never opened for writing: every mutation happens on a
copy obtained from :func:`checkout_database`.
"""

from __future__ import annotations

import json
import logging
import os
import shutil
import sqlite3
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

from practiq.errors import (
    DeltaConflict,
    MissingDatabase,
    ParseError,
    PractiqError,
    ResolutionError,
    SchemaVersionMismatch,
)

logger = logging.getLogger(__name__)

COLUMN_TYPES = ("text", "number", "time", "boolean", "others")
RESULT_ROW_CAP = 30
FORMAT_VERSION = 1


def quote_ident(name: str) -> str:
    return '"' + name.replace('"', '""') + '"'


@dataclass(frozen=True, order=True)
class ColumnRef:
    table: str
    column: str

    def __post_init__(self):
        if not self.table or not self.column:
            raise ValueError("ColumnRef needs a table and a column")

    def __str__(self) -> str:
        return f"{self.table}.{self.column}"

    def key(self) -> tuple[str, str]:
        return self.table.lower(), self.column.lower()

    def to_list(self) -> list[str]:
        return [self.table, self.column]

    @classmethod
    def from_list(cls, raw: Sequence[str]) -> "ColumnRef":
        return cls(raw[0], raw[1])


@dataclass(frozen=True)
class ColumnDef:
    name: str
    col_type: str = "text"

    def __post_init__(self):
        if not self.name:
            raise ValueError("column name must be non-empty")
        if self.col_type not in COLUMN_TYPES:
            raise ValueError(f"unknown column type {self.col_type!r}")


@dataclass(frozen=True)
class TableDef:
    name: str
    columns: tuple[ColumnDef, ...] = ()

    def column(self, name: str) -> ColumnDef | None:
        low = name.lower()
        for col in self.columns:
            if col.name.lower() == low:
                return col
        return None

    @property
    def column_names(self) -> list[str]:
        return [c.name for c in self.columns]


@dataclass(frozen=True)
class SchemaDef:
    db_id: str
    tables: tuple[TableDef, ...] = ()
    primary_keys: tuple[ColumnRef, ...] = ()
    foreign_keys: tuple[tuple[ColumnRef, ColumnRef], ...] = ()

    def __post_init__(self):
        seen = set()
        for table in self.tables:
            if table.name.lower() in seen:
                raise ValueError(f"duplicate table {table.name!r} in {self.db_id}")
            seen.add(table.name.lower())
            cols = [c.name.lower() for c in table.columns]
            if len(cols) != len(set(cols)):
                raise ValueError(f"duplicate column in {self.db_id}.{table.name}")
        for ref in self.primary_keys:
            if self.resolve(ref.table, ref.column) is None:
                raise ValueError(f"primary key {ref} does not resolve")
        for src, dst in self.foreign_keys:
            if self.resolve(src.table, src.column) is None or self.resolve(dst.table, dst.column) is None:
                raise ValueError(f"foreign key {src} -> {dst} does not resolve")

    def table(self, name: str) -> TableDef | None:
        low = name.lower()
        for table in self.tables:
            if table.name.lower() == low:
                return table
        return None

    @property
    def table_names(self) -> list[str]:
        return [t.name for t in self.tables]

    def resolve(self, table: str, column: str) -> ColumnRef | None:
        """Return the ref with the schema's own spelling, or None."""
        tdef = self.table(table)
        if tdef is None:
            return None
        cdef = tdef.column(column)
        if cdef is None:
            return None
        return ColumnRef(tdef.name, cdef.name)

    def column_type(self, ref: ColumnRef) -> str:
        tdef = self.table(ref.table)
        cdef = tdef.column(ref.column) if tdef else None
        if cdef is None:
            raise KeyError(str(ref))
        return cdef.col_type

    def columns(self) -> list[ColumnRef]:
        return [ColumnRef(t.name, c.name) for t in self.tables for c in t.columns]

    def is_key(self, ref: ColumnRef) -> bool:
        """True for primary-key columns and either end of a foreign key."""
        key = ref.key()
        if any(pk.key() == key for pk in self.primary_keys):
            return True
        return any(a.key() == key or b.key() == key for a, b in self.foreign_keys)

    def fk_components(self) -> int:
        """Number of connected components of the table graph induced by foreign keys."""
        parent = {t.name.lower(): t.name.lower() for t in self.tables}

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for src, dst in self.foreign_keys:
            a, b = find(src.table.lower()), find(dst.table.lower())
            if a != b:
                parent[a] = b
        return len({find(t) for t in parent})

    def to_dict(self) -> dict:
        return {
            "db_id": self.db_id,
            "tables": [
                {"name": t.name, "columns": [[c.name, c.col_type] for c in t.columns]}
                for t in self.tables
            ],
            "primary_keys": [r.to_list() for r in self.primary_keys],
            "foreign_keys": [[a.to_list(), b.to_list()] for a, b in self.foreign_keys],
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "SchemaDef":
        return cls(
            db_id=raw["db_id"],
            tables=tuple(
                TableDef(t["name"], tuple(ColumnDef(n, ty) for n, ty in t["columns"]))
                for t in raw["tables"]
            ),
            primary_keys=tuple(ColumnRef.from_list(r) for r in raw["primary_keys"]),
            foreign_keys=tuple(
                (ColumnRef.from_list(a), ColumnRef.from_list(b)) for a, b in raw["foreign_keys"]
            ),
        )


@dataclass(frozen=True)
class CorpusExample:
    example_id: str
    db_id: str
    question: str
    gold_sql: str


@dataclass
class ResultTable:
    columns: list[str]
    rows: list[list[Any]]
    truncated: bool = False

    def __post_init__(self):
        for row in self.rows:
            if len(row) != len(self.columns):
                raise ValueError("row width does not match column count")

    def to_dict(self) -> dict:
        return {"columns": list(self.columns), "rows": [list(r) for r in self.rows], "truncated": self.truncated}

    @classmethod
    def from_dict(cls, raw: dict) -> "ResultTable":
        return cls(list(raw["columns"]), [list(r) for r in raw["rows"]], bool(raw["truncated"]))


# ---------------------------------------------------------------- catalog I/O


def _schema_from_spider(entry: dict) -> SchemaDef:
    db_id = entry["db_id"]
    table_names = entry.get("table_names_original", entry.get("table_names", []))
    col_names = entry.get("column_names_original", entry.get("column_names", []))
    col_types = entry.get("column_types", ["text"] * len(col_names))
    by_table: list[list[ColumnDef]] = [[] for _ in table_names]
    index_to_ref: dict[int, ColumnRef] = {}
    for idx, ((t_idx, name), ctype) in enumerate(zip(col_names, col_types)):
        if t_idx < 0:
            continue
        if t_idx >= len(table_names):
            raise ResolutionError(f"{db_id}: column {name!r} points at table index {t_idx}")
        by_table[t_idx].append(ColumnDef(name, ctype if ctype in COLUMN_TYPES else "others"))
        index_to_ref[idx] = ColumnRef(table_names[t_idx], name)

    def ref(idx: int) -> ColumnRef:
        if idx not in index_to_ref:
            raise ResolutionError(f"{db_id}: key index {idx} is out of range")
        return index_to_ref[idx]

    pks: list[ColumnRef] = []
    for pk in entry.get("primary_keys", []):
        for idx in pk if isinstance(pk, list) else [pk]:
            pks.append(ref(idx))
    fks = []
    for pair in entry.get("foreign_keys", []):
        src, dst = pair
        if isinstance(src, list):
            fks.extend((ref(a), ref(b)) for a, b in zip(src, dst))
        else:
            fks.append((ref(src), ref(dst)))
    tables = tuple(TableDef(n, tuple(cols)) for n, cols in zip(table_names, by_table))
    return SchemaDef(db_id, tables, tuple(pks), tuple(fks))


def schema_to_spider(schema: SchemaDef) -> dict:
    """Inverse of the catalog loader: one ``tables.json`` entry."""
    col_names = [[-1, "*"]]
    col_types = ["text"]
    index: dict[tuple[str, str], int] = {}
    for t_idx, table in enumerate(schema.tables):
        for col in table.columns:
            index[ColumnRef(table.name, col.name).key()] = len(col_names)
            col_names.append([t_idx, col.name])
            col_types.append(col.col_type)
    pks: list = []
    for table in schema.tables:
        members = [index[p.key()] for p in schema.primary_keys if p.table.lower() == table.name.lower()]
        if len(members) == 1:
            pks.append(members[0])
        elif members:
            pks.append(members)
    return {
        "db_id": schema.db_id,
        "table_names_original": [t.name for t in schema.tables],
        "table_names": [t.name.replace("_", " ").lower() for t in schema.tables],
        "column_names_original": col_names,
        "column_names": [[t, n.replace("_", " ").lower() if t >= 0 else n] for t, n in col_names],
        "column_types": col_types,
        "primary_keys": pks,
        "foreign_keys": [[index[a.key()], index[b.key()]] for a, b in schema.foreign_keys],
    }


def load_catalog(path: str | os.PathLike) -> list[SchemaDef]:
    """Load a Spider ``tables.json`` file."""
    try:
        raw = json.loads(Path(path).read_text("utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    if not isinstance(raw, list):
        raise ParseError(f"{path}: expected a JSON list of databases")
    try:
        return [_schema_from_spider(entry) for entry in raw]
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ResolutionError):
            raise
        raise ParseError(f"{path}: {exc}") from exc


class ExampleSet(list):
    """List of examples that also remembers which records were skipped and why."""

    def __init__(self, items=(), skipped=None):
        super().__init__(items)
        self.skipped: list[tuple[int, str]] = list(skipped or [])


def load_examples(path: str | os.PathLike, id_prefix: str | None = None) -> ExampleSet:
    """Load Spider examples; records without a parseable query are skipped."""
    from practiq import sqlkit

    path = Path(path)
    try:
        raw = json.loads(path.read_text("utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    if not isinstance(raw, list):
        raise ParseError(f"{path}: expected a JSON list of examples")
    prefix = id_prefix or path.stem
    out = ExampleSet()
    for i, rec in enumerate(raw):
        if not isinstance(rec, dict) or not all(k in rec for k in ("db_id", "question", "query")):
            out.skipped.append((i, "missing db_id/question/query"))
            continue
        try:
            sqlkit.parse(rec["query"])
        except PractiqError as exc:
            out.skipped.append((i, f"unparseable gold SQL: {exc}"))
            continue
        out.append(CorpusExample(f"{prefix}_{i:04d}", rec["db_id"], rec["question"], rec["query"]))
    if out.skipped:
        logger.info("%s: skipped %d of %d records", path, len(out.skipped), len(raw))
    return out


# ------------------------------------------------------------ database copies


def _map_decl_type(decl: str) -> str:
    d = (decl or "").upper()
    if "BOOL" in d:
        return "boolean"
    if "DATE" in d or "TIME" in d or "YEAR" in d:
        return "time"
    if "CHAR" in d or "TEXT" in d or "CLOB" in d or "STRING" in d:
        return "text"
    if any(t in d for t in ("INT", "REAL", "FLOA", "DOUB", "NUM", "DEC", "BIT")):
        return "number"
    if not d:
        return "text"
    return "others"


_SQL_TYPE = {"text": "TEXT", "number": "NUMBER", "time": "DATETIME", "boolean": "BOOLEAN", "others": "BLOB"}


def introspect(conn: sqlite3.Connection, db_id: str) -> SchemaDef:
    """Read the schema straight from the database file."""
    names = [
        r[0]
        for r in conn.execute(
            "SELECT name FROM sqlite_master WHERE type='table' AND name NOT LIKE 'sqlite_%' ORDER BY rowid"
        )
    ]
    tables, pks, raw_fks = [], [], []
    for name in names:
        info = conn.execute(f"PRAGMA table_info({quote_ident(name)})").fetchall()
        cols = tuple(ColumnDef(r[1], _map_decl_type(r[2])) for r in info)
        tables.append(TableDef(name, cols))
        for r in sorted((r for r in info if r[5]), key=lambda r: r[5]):
            pks.append(ColumnRef(name, r[1]))
        for r in conn.execute(f"PRAGMA foreign_key_list({quote_ident(name)})").fetchall():
            raw_fks.append((name, r[3], r[2], r[4]))
    schema = SchemaDef(db_id, tuple(tables), tuple(pks))
    fks = []
    for src_table, src_col, dst_table, dst_col in raw_fks:
        src = schema.resolve(src_table, src_col)
        if dst_col is None:
            target_pks = [p for p in pks if p.table.lower() == dst_table.lower()]
            dst = target_pks[0] if len(target_pks) == 1 else None
        else:
            dst = schema.resolve(dst_table, dst_col)
        # Dangling references (e.g. to a dropped column) are not part of the schema.
        if src is not None and dst is not None and (src, dst) not in fks:
            fks.append((src, dst))
    return SchemaDef(db_id, tuple(tables), tuple(pks), tuple(fks))


class DatabaseHandle:
    """Single-owner handle to a private copy of one database."""

    def __init__(self, db_id: str, path: Path, source: Path | None = None, owned_dir: Path | None = None):
        self.db_id = db_id
        self.path = Path(path)
        self.source = source
        self._owned_dir = owned_dir
        self._conn: sqlite3.Connection | None = None
        self._schema: SchemaDef | None = None

    @property
    def conn(self) -> sqlite3.Connection:
        if self._conn is None:
            self._conn = sqlite3.connect(str(self.path), check_same_thread=False)
            self._conn.text_factory = lambda b: b.decode("utf-8", errors="replace")
        return self._conn

    @property
    def schema(self) -> SchemaDef:
        if self._schema is None:
            self._schema = introspect(self.conn, self.db_id)
        return self._schema

    def invalidate(self) -> None:
        self._schema = None

    def close(self) -> None:
        if self._conn is not None:
            self._conn.close()
            self._conn = None
        if self._owned_dir is not None:
            shutil.rmtree(self._owned_dir, ignore_errors=True)
            self._owned_dir = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def row_count(self, table: str) -> int:
        return self.conn.execute(f"SELECT count(*) FROM {quote_ident(table)}").fetchone()[0]

    def column_values(self, ref: ColumnRef) -> list[Any]:
        """All values of a column in rowid order."""
        sql = f"SELECT {quote_ident(ref.column)} FROM {quote_ident(ref.table)} ORDER BY rowid"
        return [r[0] for r in self.conn.execute(sql)]

    def distinct_values(self, ref: ColumnRef, limit: int | None = None) -> list[Any]:
        sql = (
            f"SELECT DISTINCT {quote_ident(ref.column)} FROM {quote_ident(ref.table)} "
            f"WHERE {quote_ident(ref.column)} IS NOT NULL ORDER BY rowid"
        )
        if limit is not None:
            sql += f" LIMIT {int(limit)}"
        return [r[0] for r in self.conn.execute(sql)]

    def count_value(self, ref: ColumnRef, value: Any) -> int:
        sql = f"SELECT count(*) FROM {quote_ident(ref.table)} WHERE {quote_ident(ref.column)} = ?"
        return self.conn.execute(sql, (value,)).fetchone()[0]


def database_path(db_dir: str | os.PathLike, db_id: str) -> Path:
    """Locate ``db_id`` under a Spider-style ``database/`` directory."""
    base = Path(db_dir)
    for candidate in (base / db_id / f"{db_id}.sqlite", base / f"{db_id}.sqlite", base / db_id / f"{db_id}.db"):
        if candidate.is_file():
            return candidate
    raise MissingDatabase(f"no database file for {db_id!r} under {base}")


def checkout_database(db_id: str, db_dir: str | os.PathLike, workdir: str | os.PathLike | None = None) -> DatabaseHandle:
    """Copy the source database into ``workdir`` and return a handle on the copy."""
    source = database_path(db_dir, db_id)
    owned = None
    if workdir is None:
        owned = Path(tempfile.mkdtemp(prefix="practiq-"))
        workdir = owned
    workdir = Path(workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    fd, target = tempfile.mkstemp(prefix=f"{db_id}-", suffix=".sqlite", dir=workdir)
    os.close(fd)
    try:
        shutil.copyfile(source, target)
    except OSError as exc:
        raise PractiqError(f"cannot copy {source}: {exc}") from exc
    return DatabaseHandle(db_id, Path(target), source, owned)


# ---------------------------------------------------------------------- deltas


@dataclass(frozen=True)
class RemoveColumn:
    ref: ColumnRef
    kind = "remove_column"

    def to_dict(self) -> dict:
        return {"kind": self.kind, "ref": self.ref.to_list()}


@dataclass(frozen=True)
class AddColumn:
    ref: ColumnRef
    col_type: str = "text"
    values: tuple | None = None
    copy_from: ColumnRef | None = None
    kind = "add_column"

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "ref": self.ref.to_list(),
            "col_type": self.col_type,
            "values": None if self.values is None else list(self.values),
            "copy_from": None if self.copy_from is None else self.copy_from.to_list(),
        }


@dataclass(frozen=True)
class ReplaceCellValues:
    ref: ColumnRef
    old_value: Any
    new_values: tuple
    kind = "replace_cell_values"

    def to_dict(self) -> dict:
        return {"kind": self.kind, "ref": self.ref.to_list(), "old_value": self.old_value, "new_values": list(self.new_values)}


@dataclass(frozen=True)
class DeleteRowsByValue:
    ref: ColumnRef
    value: Any
    kind = "delete_rows_by_value"

    def to_dict(self) -> dict:
        return {"kind": self.kind, "ref": self.ref.to_list(), "value": self.value}


@dataclass(frozen=True)
class NewTable:
    """A table created by :class:`CreateTables`, including its rows."""

    name: str
    columns: tuple[ColumnDef, ...]
    primary_key: tuple[str, ...] = ()
    foreign_keys: tuple[tuple[str, str, str], ...] = ()  # (column, ref_table, ref_column)
    rows: tuple[tuple, ...] = ()

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "columns": [[c.name, c.col_type] for c in self.columns],
            "primary_key": list(self.primary_key),
            "foreign_keys": [list(fk) for fk in self.foreign_keys],
            "rows": [list(r) for r in self.rows],
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "NewTable":
        cols = []
        for c in raw["columns"]:
            if isinstance(c, dict):
                cols.append(ColumnDef(c["name"], c.get("type", "text")))
            else:
                cols.append(ColumnDef(c[0], c[1] if len(c) > 1 else "text"))
        return cls(
            name=raw["name"],
            columns=tuple(cols),
            primary_key=tuple(raw.get("primary_key") or ()),
            foreign_keys=tuple(tuple(fk) for fk in raw.get("foreign_keys") or ()),
            rows=tuple(tuple(r) for r in raw.get("rows") or ()),
        )


@dataclass(frozen=True)
class CreateTables:
    tables: tuple[NewTable, ...]
    kind = "create_tables"

    def to_dict(self) -> dict:
        return {"kind": self.kind, "tables": [t.to_dict() for t in self.tables]}


DbDelta = RemoveColumn | AddColumn | ReplaceCellValues | DeleteRowsByValue | CreateTables


def delta_from_dict(raw: dict) -> DbDelta:
    kind = raw.get("kind")
    if kind == "remove_column":
        return RemoveColumn(ColumnRef.from_list(raw["ref"]))
    if kind == "add_column":
        return AddColumn(
            ColumnRef.from_list(raw["ref"]),
            raw.get("col_type", "text"),
            None if raw.get("values") is None else tuple(raw["values"]),
            None if raw.get("copy_from") is None else ColumnRef.from_list(raw["copy_from"]),
        )
    if kind == "replace_cell_values":
        return ReplaceCellValues(ColumnRef.from_list(raw["ref"]), raw["old_value"], tuple(raw["new_values"]))
    if kind == "delete_rows_by_value":
        return DeleteRowsByValue(ColumnRef.from_list(raw["ref"]), raw["value"])
    if kind == "create_tables":
        return CreateTables(tuple(NewTable.from_dict(t) for t in raw["tables"]))
    raise SchemaVersionMismatch(f"unknown delta kind {kind!r}")


def _require_column(schema: SchemaDef, ref: ColumnRef) -> ColumnRef:
    resolved = schema.resolve(ref.table, ref.column)
    if resolved is None:
        raise DeltaConflict(f"{schema.db_id}: column {ref} does not exist")
    return resolved


def _rebuild_without(conn: sqlite3.Connection, table: str, column: str) -> None:
    info = conn.execute(f"PRAGMA table_info({quote_ident(table)})").fetchall()
    keep = [r for r in info if r[1].lower() != column.lower()]
    if not keep:
        raise DeltaConflict(f"cannot remove the only column of {table}")
    defs = []
    for _, name, decl, notnull, default, _pk in keep:
        d = quote_ident(name)
        if decl:
            d += f" {decl}"
        if notnull:
            d += " NOT NULL"
        if default is not None:
            d += f" DEFAULT {default}"
        defs.append(d)
    pk_cols = [r[1] for r in sorted((r for r in keep if r[5]), key=lambda r: r[5])]
    if pk_cols:
        defs.append("PRIMARY KEY (" + ", ".join(quote_ident(c) for c in pk_cols) + ")")
    fk_groups: dict[int, list] = {}
    for r in conn.execute(f"PRAGMA foreign_key_list({quote_ident(table)})").fetchall():
        fk_groups.setdefault(r[0], []).append(r)
    for rows in fk_groups.values():
        if any(r[3].lower() == column.lower() for r in rows):
            continue
        src = ", ".join(quote_ident(r[3]) for r in rows)
        clause = f"FOREIGN KEY ({src}) REFERENCES {quote_ident(rows[0][2])}"
        if all(r[4] is not None for r in rows):
            clause += " (" + ", ".join(quote_ident(r[4]) for r in rows) + ")"
        defs.append(clause)
    tmp = f"__practiq_rebuild_{table}"
    names = ", ".join(quote_ident(r[1]) for r in keep)
    conn.execute(f"DROP TABLE IF EXISTS {quote_ident(tmp)}")
    conn.execute(f"CREATE TABLE {quote_ident(tmp)} (" + ", ".join(defs) + ")")
    conn.execute(
        f"INSERT INTO {quote_ident(tmp)} ({names}) SELECT {names} FROM {quote_ident(table)} ORDER BY rowid"
    )
    conn.execute(f"DROP TABLE {quote_ident(table)}")
    conn.execute(f"ALTER TABLE {quote_ident(tmp)} RENAME TO {quote_ident(table)}")


def _fresh_key(conn: sqlite3.Connection, table: str, column: str, current: Any) -> Any:
    if isinstance(current, (int, float)) or current is None:
        top = conn.execute(f"SELECT max({quote_ident(column)}) FROM {quote_ident(table)}").fetchone()[0]
        try:
            return int(top or 0) + 1
        except (TypeError, ValueError):
            pass
    n = 2
    while True:
        cand = f"{current}_{n}"
        hit = conn.execute(
            f"SELECT 1 FROM {quote_ident(table)} WHERE {quote_ident(column)} = ? LIMIT 1", (cand,)
        ).fetchone()
        if hit is None:
            return cand
        n += 1


def _replace_values(conn, schema: SchemaDef, ref: ColumnRef, old: Any, new_values: Sequence[Any]) -> None:
    if not new_values:
        raise DeltaConflict("ReplaceCellValues needs at least one new value")
    t, c = quote_ident(ref.table), quote_ident(ref.column)
    rowids = [r[0] for r in conn.execute(f"SELECT rowid FROM {t} WHERE {c} = ? ORDER BY rowid", (old,))]
    if not rowids:
        raise DeltaConflict(f"value {old!r} does not occur in {ref}")
    if len(rowids) == 1 and len(new_values) > 1:
        rid = rowids[0]
        conn.execute(f"UPDATE {t} SET {c} = ? WHERE rowid = ?", (new_values[0], rid))
        info = conn.execute(f"PRAGMA table_info({t})").fetchall()
        names = [r[1] for r in info]
        pk_names = [r[1] for r in info if r[5]]
        base = list(conn.execute(f"SELECT * FROM {t} WHERE rowid = ?", (rid,)).fetchone())
        for value in new_values[1:]:
            clone = list(base)
            clone[[n.lower() for n in names].index(ref.column.lower())] = value
            for pk in pk_names:
                if pk.lower() == ref.column.lower():
                    continue
                i = names.index(pk)
                clone[i] = _fresh_key(conn, ref.table, pk, clone[i])
            cols = ", ".join(quote_ident(n) for n in names)
            marks = ", ".join("?" for _ in names)
            conn.execute(f"INSERT INTO {t} ({cols}) VALUES ({marks})", clone)
        return
    conn.executemany(
        f"UPDATE {t} SET {c} = ? WHERE rowid = ?",
        [(new_values[i % len(new_values)], rid) for i, rid in enumerate(rowids)],
    )


def _create_tables(conn, schema: SchemaDef, tables: Sequence[NewTable]) -> None:
    new_names = {t.name.lower() for t in tables}
    if len(new_names) != len(tables):
        raise DeltaConflict("CreateTables lists the same table twice")
    for t in tables:
        if schema.table(t.name) is not None:
            raise DeltaConflict(f"table {t.name!r} already exists in {schema.db_id}")
        if not t.columns:
            raise DeltaConflict(f"table {t.name!r} has no columns")
        colnames = {c.name.lower() for c in t.columns}
        for col, ref_table, ref_col in t.foreign_keys:
            if ref_table.lower() not in new_names:
                raise DeltaConflict(f"{t.name}.{col} references {ref_table}, outside the created tables")
            target = next(x for x in tables if x.name.lower() == ref_table.lower())
            if col.lower() not in colnames or ref_col.lower() not in {c.name.lower() for c in target.columns}:
                raise DeltaConflict(f"foreign key {t.name}.{col} -> {ref_table}.{ref_col} does not resolve")
        for row in t.rows:
            if len(row) != len(t.columns):
                raise DeltaConflict(f"row width mismatch in {t.name}")
    for t in tables:
        defs = [f"{quote_ident(c.name)} {_SQL_TYPE[c.col_type]}" for c in t.columns]
        if t.primary_key:
            defs.append("PRIMARY KEY (" + ", ".join(quote_ident(k) for k in t.primary_key) + ")")
        for col, ref_table, ref_col in t.foreign_keys:
            defs.append(
                f"FOREIGN KEY ({quote_ident(col)}) REFERENCES {quote_ident(ref_table)} ({quote_ident(ref_col)})"
            )
        conn.execute(f"CREATE TABLE {quote_ident(t.name)} (" + ", ".join(defs) + ")")
        if t.rows:
            marks = ", ".join("?" for _ in t.columns)
            conn.executemany(f"INSERT INTO {quote_ident(t.name)} VALUES ({marks})", [list(r) for r in t.rows])


def apply_delta(handle: DatabaseHandle, delta: DbDelta) -> SchemaDef:
    """Apply one delta to the handle's copy and return the re-introspected schema."""
    schema = handle.schema
    conn = handle.conn
    try:
        with conn:
            if isinstance(delta, RemoveColumn):
                ref = _require_column(schema, delta.ref)
                _rebuild_without(conn, ref.table, ref.column)
            elif isinstance(delta, AddColumn):
                if schema.table(delta.ref.table) is None:
                    raise DeltaConflict(f"table {delta.ref.table!r} does not exist")
                if schema.resolve(delta.ref.table, delta.ref.column) is not None:
                    raise DeltaConflict(f"column {delta.ref} already exists")
                table = schema.table(delta.ref.table).name
                values = delta.values
                if values is None and delta.copy_from is not None:
                    values = handle.column_values(_require_column(schema, delta.copy_from))
                rowids = [r[0] for r in conn.execute(f"SELECT rowid FROM {quote_ident(table)} ORDER BY rowid")]
                if values is not None and len(values) != len(rowids):
                    raise DeltaConflict(f"{len(values)} values for {len(rowids)} rows of {table}")
                conn.execute(
                    f"ALTER TABLE {quote_ident(table)} ADD COLUMN {quote_ident(delta.ref.column)} "
                    f"{_SQL_TYPE.get(delta.col_type, 'TEXT')}"
                )
                if values is not None:
                    conn.executemany(
                        f"UPDATE {quote_ident(table)} SET {quote_ident(delta.ref.column)} = ? WHERE rowid = ?",
                        list(zip(values, rowids)),
                    )
            elif isinstance(delta, ReplaceCellValues):
                ref = _require_column(schema, delta.ref)
                _replace_values(conn, schema, ref, delta.old_value, list(delta.new_values))
            elif isinstance(delta, DeleteRowsByValue):
                ref = _require_column(schema, delta.ref)
                conn.execute(
                    f"DELETE FROM {quote_ident(ref.table)} WHERE {quote_ident(ref.column)} = ?", (delta.value,)
                )
            elif isinstance(delta, CreateTables):
                _create_tables(conn, schema, delta.tables)
            else:
                raise TypeError(f"not a delta: {delta!r}")
    except sqlite3.Error as exc:
        raise DeltaConflict(f"{type(delta).__name__} failed: {exc}") from exc
    finally:
        handle.invalidate()
    return handle.schema


def apply_deltas(handle: DatabaseHandle, deltas: Iterable[DbDelta]) -> SchemaDef:
    schema = handle.schema
    for delta in deltas:
        schema = apply_delta(handle, delta)
    return schema


# ------------------------------------------------------------- conversations


def write_conversations(path: str | os.PathLike, conversations: Iterable) -> None:
    """Write conversations as JSONL, one per line, atomically."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        for conv in conversations:
            fh.write(json.dumps(conv.to_dict(), ensure_ascii=False, sort_keys=True) + "\n")
    os.replace(tmp, path)


def read_conversations(path: str | os.PathLike, tolerate_partial: bool = False) -> list:
    """Read a JSONL dataset written by :func:`write_conversations`.

    With ``tolerate_partial`` a truncated final line (an interrupted run) is
    dropped instead of raising.
    """
    from practiq.records import Conversation

    out = []
    try:
        lines = Path(path).read_text("utf-8").splitlines()
    except OSError as exc:
        raise PractiqError(f"cannot read {path}: {exc}") from exc
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            raw = json.loads(line)
        except json.JSONDecodeError as exc:
            if tolerate_partial and lineno == len(lines):
                break
            raise ParseError(f"{path}:{lineno}: {exc}") from exc
        out.append(Conversation.from_dict(raw))
    return out
