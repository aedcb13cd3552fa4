"""Parse, inspect, rewrite, render and execute SELECT statements.

Built on sqlglot's AST. The canonical form is whatever ``render`` emits; the
round-trip property ``parse(render(t)) == t`` holds for the supported
surface (single and compound SELECTs as found in Spider gold queries).
"""

from __future__ import annotations

import json
import re
import sqlite3
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from typing import Any, Iterator, Sequence

import sqlglot
from sqlglot import exp
from sqlglot.errors import ParseError as _GlotParseError
from sqlglot.errors import TokenError as _GlotTokenError

from practiq.corpus import RESULT_ROW_CAP, ColumnRef, DatabaseHandle, ResultTable, SchemaDef
from practiq.errors import ExecError, ExecErrorKind, RefNotFound, SqlParseError, UnknownTable

DIALECT = "sqlite"

_COMPARATORS = {
    exp.EQ: "=",
    exp.NEQ: "!=",
    exp.GT: ">",
    exp.GTE: ">=",
    exp.LT: "<",
    exp.LTE: "<=",
    exp.Like: "LIKE",
}


@dataclass(frozen=True)
class SqlTree:
    """One parsed SELECT statement (possibly a set operation)."""

    expr: exp.Expression

    def __eq__(self, other) -> bool:
        return isinstance(other, SqlTree) and self.expr == other.expr

    def __hash__(self) -> int:
        return hash(self.expr)

    @property
    def is_set_operation(self) -> bool:
        return isinstance(self.expr, exp.SetOperation)

    @property
    def set_op_shape(self) -> tuple:
        """Nested tuple describing the set-operation skeleton, e.g. ('Except', 'Select', 'Select')."""

        def shape(node):
            if isinstance(node, exp.SetOperation):
                return (type(node).__name__, shape(node.this), shape(node.expression))
            return type(node).__name__

        return shape(self.expr)

    def root_selects(self) -> list[exp.Select]:
        """The SELECT branches whose projections form the statement's output."""
        out = []

        def visit(node):
            if isinstance(node, exp.SetOperation):
                visit(node.this)
                visit(node.expression)
            elif isinstance(node, exp.Subquery):
                visit(node.this)
            elif isinstance(node, exp.Select):
                out.append(node)

        visit(self.expr)
        return out

    def tables(self) -> list[str]:
        seen, out = set(), []
        for t in self.expr.find_all(exp.Table):
            if t.name.lower() not in seen:
                seen.add(t.name.lower())
                out.append(t.name)
        return out

    def __str__(self) -> str:
        return render(self)


@dataclass(frozen=True)
class WhereAtom:
    ref: ColumnRef
    op: str
    value: Any


@dataclass
class SqlRefs:
    select_columns: list[ColumnRef] = field(default_factory=list)
    where_atoms: list[WhereAtom] = field(default_factory=list)
    joined_tables: set[tuple[str, str]] = field(default_factory=set)

    @property
    def where_columns(self) -> list[ColumnRef]:
        out = []
        for atom in self.where_atoms:
            if atom.ref not in out:
                out.append(atom.ref)
        return out


# ----------------------------------------------------------------- rewrites


@dataclass(frozen=True)
class SubstituteColumn:
    old: ColumnRef
    new: ColumnRef


@dataclass(frozen=True)
class SubstituteLiteral:
    old: Any
    new: Any
    column: ColumnRef | None = None  # restrict to atoms over this column


@dataclass(frozen=True)
class AddProjection:
    refs: tuple[ColumnRef, ...]


@dataclass(frozen=True)
class WidenPredicate:
    old: ColumnRef
    candidates: tuple[ColumnRef, ...]
    value: Any = None  # None widens every equality atom over ``old``


RewriteSpec = SubstituteColumn | SubstituteLiteral | AddProjection | WidenPredicate


# -------------------------------------------------------------------- parse


def _offset(sql: str, line: int, col: int) -> int:
    lines = sql.split("\n")
    line = max(1, min(line, len(lines)))
    prefix = "\n".join(lines[: line - 1])
    if line > 1:
        prefix += "\n"
    prefix += lines[line - 1][: max(col, 0)]
    return len(prefix.encode("utf-8"))


def _as_string_literal(node: exp.Expression) -> exp.Expression:
    # SQLite reads an unresolvable "double quoted" token as a string; Spider relies on that.
    if isinstance(node, exp.Column) and not node.table and node.this.quoted:
        return exp.Literal.string(node.name)
    return node


def _normalize(expr: exp.Expression) -> exp.Expression:
    for node in list(expr.walk()):
        if isinstance(node, tuple(_COMPARATORS)) and isinstance(node.this, exp.Column):
            rhs = node.expression
            fixed = _as_string_literal(rhs)
            if fixed is not rhs:
                rhs.replace(fixed)
        elif isinstance(node, exp.In) and isinstance(node.this, exp.Column):
            for item in list(node.expressions):
                fixed = _as_string_literal(item)
                if fixed is not item:
                    item.replace(fixed)
        elif isinstance(node, exp.Between):
            for key in ("low", "high"):
                child = node.args.get(key)
                if child is not None:
                    fixed = _as_string_literal(child)
                    if fixed is not child:
                        child.replace(fixed)
    return expr


def parse(sql: str) -> SqlTree:
    """Parse one SELECT statement; anything else raises SqlParseError."""
    text = sql.strip().rstrip(";").strip()
    if not text:
        raise SqlParseError("empty SQL", 0)
    try:
        statements = sqlglot.parse(text, read=DIALECT)
    except _GlotParseError as exc:
        err = exc.errors[0] if exc.errors else {}
        off = _offset(text, err.get("line", 1), err.get("col", 0))
        raise SqlParseError(err.get("description", str(exc)).split("\n")[0], off) from None
    except _GlotTokenError as exc:
        raise SqlParseError(str(exc), 0) from None
    statements = [s for s in statements if s is not None]
    if len(statements) != 1:
        raise SqlParseError(f"expected one statement, got {len(statements)}", 0)
    expr = statements[0]
    if isinstance(expr, exp.Subquery) and isinstance(expr.this, (exp.Select, exp.SetOperation)):
        expr = expr.this
    if not isinstance(expr, (exp.Select, exp.SetOperation)):
        raise SqlParseError(f"not a SELECT statement ({type(expr).__name__})", 0)
    for select in expr.find_all(exp.Select):
        if not select.expressions:
            raise SqlParseError("SELECT without projections", len(text.encode("utf-8")))
    return SqlTree(_normalize(expr))


def render(tree: SqlTree) -> str:
    return tree.expr.sql(dialect=DIALECT)


def canonical(sql: str) -> str:
    """Parse and re-render; the normal form used throughout the pipeline."""
    return render(parse(sql))


# -------------------------------------------------------------- resolution


def _scope_walk(node: exp.Expression) -> Iterator[exp.Expression]:
    """Walk ``node`` without descending into nested SELECTs."""
    stack = [node]
    while stack:
        cur = stack.pop()
        yield cur
        for child in reversed(list(cur.iter_expressions())):
            if isinstance(child, (exp.Select, exp.SetOperation)):
                continue
            if isinstance(child, exp.Subquery):
                continue
            stack.append(child)


def _enclosing_select(node: exp.Expression) -> exp.Select | None:
    cur = node.parent
    while cur is not None:
        if isinstance(cur, exp.Select):
            return cur
        cur = cur.parent
    return None


def _sources(select: exp.Select) -> list[tuple[str, str | None]]:
    """(lowercased alias, table name) pairs for the FROM/JOIN items of one SELECT.

    Derived tables map to None.
    """
    items = []
    frm = select.args.get("from") or select.args.get("from_")
    if frm is not None:
        items.append(frm.this)
        items.extend(e for e in frm.expressions or [])
    for join in select.args.get("joins") or []:
        items.append(join.this)
    out = []
    for item in items:
        if isinstance(item, exp.Table):
            out.append(((item.alias or item.name).lower(), item.name))
        elif isinstance(item, exp.Subquery):
            out.append(((item.alias or "").lower(), None))
    return out


def _direct_tables(select: exp.Select) -> list[exp.Table]:
    frm = select.args.get("from") or select.args.get("from_")
    items = [frm.this, *(frm.expressions or [])] if frm is not None else []
    items.extend(j.this for j in select.args.get("joins") or [])
    return [i for i in items if isinstance(i, exp.Table)]


def _output_aliases(select: exp.Select) -> set[str]:
    return {e.alias.lower() for e in select.expressions if isinstance(e, exp.Alias)}


class _Resolver:
    """Maps column nodes to base-table ColumnRefs, optionally checked against a schema."""

    def __init__(self, schema: SchemaDef | None = None, strict: bool = True):
        self.schema = schema
        self.strict = strict

    def table_has(self, table: str, column: str) -> bool:
        if self.schema is None:
            return True
        return self.schema.resolve(table, column) is not None

    def canonical(self, table: str, column: str) -> ColumnRef:
        if self.schema is not None:
            ref = self.schema.resolve(table, column)
            if ref is not None:
                return ref
        return ColumnRef(table, column)

    def resolve(self, col: exp.Column) -> ColumnRef | None:
        name = col.name
        qualifier = col.table
        select = _enclosing_select(col)
        chain = []
        while select is not None:
            chain.append(select)
            select = _enclosing_select(select)
        if qualifier:
            q = qualifier.lower()
            for sel in chain:
                for alias, table in _sources(sel):
                    if alias == q:
                        if table is None:
                            return None
                        if self.schema is not None and self.schema.table(table) is None:
                            if self.strict:
                                raise UnknownTable(f"table {table!r} is not in schema {self.schema.db_id}")
                            return None
                        return self.canonical(table, name)
            if self.strict:
                raise UnknownTable(f"cannot resolve qualifier {qualifier!r} for column {name!r}")
            return None
        for sel in chain:
            sources = [t for _, t in _sources(sel) if t is not None]
            if self.schema is not None:
                for t in sources:
                    if self.schema.table(t) is None and self.strict:
                        raise UnknownTable(f"table {t!r} is not in schema {self.schema.db_id}")
                hits = [t for t in sources if self.schema.table(t) and self.table_has(t, name)]
                if hits:
                    return self.canonical(hits[0], name)
            elif len(sources) == 1:
                return ColumnRef(sources[0], name)
        return None

    def matches(self, col: exp.Column, target: ColumnRef) -> bool:
        if col.name.lower() != target.column.lower():
            return False
        if self.schema is None:
            # Without a schema an unqualified column matches when its scope holds the target table.
            if col.table:
                ref = self.resolve(col)
                return ref is not None and ref.table.lower() == target.table.lower()
            select = _enclosing_select(col)
            while select is not None:
                tables = [t.lower() for _, t in _sources(select) if t]
                if target.table.lower() in tables:
                    return True
                select = _enclosing_select(select)
            return False
        ref = self.resolve(col)
        return ref is not None and ref.key() == target.key()


def _literal_value(node: exp.Expression):
    if isinstance(node, exp.Neg) and isinstance(node.this, exp.Literal) and not node.this.is_string:
        val = _literal_value(node.this)
        return None if val is None else -val
    if not isinstance(node, exp.Literal):
        return None
    if node.is_string:
        return node.this
    text = node.this
    try:
        return int(text)
    except ValueError:
        try:
            return float(text)
        except ValueError:
            return None


def _is_literal(node: exp.Expression) -> bool:
    return _literal_value(node) is not None


def _make_literal(value: Any) -> exp.Expression:
    if isinstance(value, str):
        return exp.Literal.string(value)
    if isinstance(value, bool):
        return exp.Literal.number(int(value))
    if isinstance(value, (int, float)) and value < 0:
        return exp.Neg(this=exp.Literal.number(-value))
    return exp.Literal.number(value)


def _literals_equal(a: Any, b: Any) -> bool:
    if isinstance(a, str) or isinstance(b, str):
        return isinstance(a, str) and isinstance(b, str) and a == b
    try:
        return float(a) == float(b)
    except (TypeError, ValueError):
        return False


def extract_refs(tree: SqlTree, schema: SchemaDef) -> SqlRefs:
    """Columns, filter atoms and join pairs of ``tree`` in schema spelling."""
    resolver = _Resolver(schema)
    for t in tree.tables():
        if schema.table(t) is None:
            raise UnknownTable(f"table {t!r} is not in schema {schema.db_id}")
    refs = SqlRefs()
    for select in tree.root_selects():
        aliases = _output_aliases(select)
        for proj in select.expressions:
            for node in _scope_walk(proj):
                if isinstance(node, exp.Column) and not isinstance(node.this, exp.Star):
                    if not node.table and node.name.lower() in aliases:
                        continue
                    ref = resolver.resolve(node)
                    if ref is not None and ref not in refs.select_columns:
                        refs.select_columns.append(ref)
    for select in tree.expr.find_all(exp.Select, bfs=False):
        where = select.args.get("where")
        if where is not None:
            for node in _scope_walk(where):
                _collect_atoms(node, resolver, refs.where_atoms)
        sources = [t for _, t in _sources(select) if t]
        for join in select.args.get("joins") or []:
            if not isinstance(join.this, exp.Table):
                continue
            right = schema.table(join.this.name).name
            left = None
            on = join.args.get("on")
            if on is not None:
                for col in on.find_all(exp.Column):
                    ref = resolver.resolve(col)
                    if ref is not None and ref.table.lower() != right.lower():
                        left = ref.table
                        break
            if left is None and sources:
                left = schema.table(sources[0]).name
            if left is not None and left.lower() != right.lower():
                refs.joined_tables.add((left, right))
    return refs


def _collect_atoms(node, resolver: _Resolver, out: list[WhereAtom]) -> None:
    for cls, op in _COMPARATORS.items():
        if type(node) is cls:
            col, lit = node.this, node.expression
            if not isinstance(col, exp.Column) and isinstance(lit, exp.Column):
                col, lit = lit, col
            if isinstance(col, exp.Column) and _is_literal(lit):
                ref = resolver.resolve(col)
                if ref is not None:
                    out.append(WhereAtom(ref, op, _literal_value(lit)))
            return
    if isinstance(node, exp.In) and isinstance(node.this, exp.Column) and node.expressions:
        ref = resolver.resolve(node.this)
        if ref is not None:
            for item in node.expressions:
                if _is_literal(item):
                    out.append(WhereAtom(ref, "IN", _literal_value(item)))


def column_references(tree: SqlTree, schema: SchemaDef) -> tuple[list[ColumnRef], list[str]]:
    """All column references of ``tree``: (resolved against ``schema``, unresolvable names).

    Names that only match an output alias are ignored. Columns qualified by an
    unknown table, or drawn from tables missing from the schema, are unresolvable.
    """
    resolver = _Resolver(schema, strict=False)
    resolved, missing = [], []
    for col in tree.expr.find_all(exp.Column):
        if isinstance(col.this, exp.Star):
            continue
        select = _enclosing_select(col)
        if not col.table and select is not None and col.name.lower() in _output_aliases(select):
            continue
        ref = resolver.resolve(col)
        if ref is None or schema.resolve(ref.table, ref.column) is None:
            missing.append(f"{col.table}.{col.name}" if col.table else col.name)
        elif ref not in resolved:
            resolved.append(ref)
    for table in tree.tables():
        if schema.table(table) is None:
            missing.append(table)
    return resolved, missing


# ------------------------------------------------------------------ rewrite


def _column_like(template: exp.Column, new_name: str) -> exp.Column:
    return exp.Column(this=exp.to_identifier(new_name), table=template.args.get("table"))


def rewrite(tree: SqlTree, spec: RewriteSpec, schema: SchemaDef | None = None) -> SqlTree:
    """Return a rewritten copy of ``tree``; the input is never modified."""
    expr = tree.expr.copy()
    resolver = _Resolver(schema, strict=False)
    if isinstance(spec, SubstituteColumn):
        if spec.new.table.lower() != spec.old.table.lower():
            raise ValueError("SubstituteColumn only swaps columns within one table")
        hits = [c for c in expr.find_all(exp.Column) if resolver.matches(c, spec.old)]
        if not hits:
            raise RefNotFound(f"{spec.old} does not occur in the query")
        for col in hits:
            col.replace(_column_like(col, spec.new.column))
    elif isinstance(spec, SubstituteLiteral):
        hits = []
        for node in expr.walk():
            if type(node) in _COMPARATORS:
                col, lit = node.this, node.expression
                if isinstance(col, exp.Column) and _is_literal(lit):
                    if spec.column is None or resolver.matches(col, spec.column):
                        if _literals_equal(_literal_value(lit), spec.old):
                            hits.append(lit)
            elif isinstance(node, exp.In) and isinstance(node.this, exp.Column):
                if spec.column is None or resolver.matches(node.this, spec.column):
                    hits.extend(
                        i for i in node.expressions if _is_literal(i) and _literals_equal(_literal_value(i), spec.old)
                    )
        if not hits:
            raise RefNotFound(f"literal {spec.old!r} does not occur in a filter")
        for lit in hits:
            lit.replace(_make_literal(spec.new))
    elif isinstance(spec, AddProjection):
        if not isinstance(expr, exp.Select):
            raise RefNotFound("AddProjection needs a plain SELECT")
        tables = [t for t in _direct_tables(expr)]
        for ref in spec.refs:
            src = next((t for t in tables if t.name.lower() == ref.table.lower()), None)
            if src is None:
                raise RefNotFound(f"table {ref.table} is not in the FROM clause")
            qualify = len(tables) > 1 or bool(src.alias)
            table_ident = exp.to_identifier(src.alias or src.name) if qualify else None
            expr.set("expressions", [*expr.expressions, exp.Column(this=exp.to_identifier(ref.column), table=table_ident)])
    elif isinstance(spec, WidenPredicate):
        if not spec.candidates:
            raise ValueError("WidenPredicate needs at least one candidate")
        hits = []
        for node in expr.walk():
            if isinstance(node, exp.EQ) and isinstance(node.this, exp.Column) and _is_literal(node.expression):
                if resolver.matches(node.this, spec.old) and (
                    spec.value is None or _literals_equal(_literal_value(node.expression), spec.value)
                ):
                    hits.append(node)
        if not hits:
            raise RefNotFound(f"no equality filter on {spec.old}")
        for node in hits:
            parts = [
                exp.EQ(this=_column_like(node.this, c.column), expression=node.expression.copy())
                for c in spec.candidates
            ]
            if len(parts) == 1:
                node.replace(parts[0])
            else:
                disj = parts[0]
                for p in parts[1:]:
                    disj = exp.Or(this=disj, expression=p)
                node.replace(exp.Paren(this=disj))
    else:
        raise TypeError(f"unknown rewrite {spec!r}")
    return SqlTree(expr)


def mirror_projections(tree: SqlTree, src: ColumnRef, dst: ColumnRef, schema: SchemaDef | None = None) -> SqlTree:
    """Duplicate each output expression that reads ``src``, reading ``dst`` in the copy.

    ``SELECT max(a) FROM t`` with a -> b becomes ``SELECT max(a), max(b) FROM t``.
    """
    expr = tree.expr.copy()
    if not isinstance(expr, exp.Select):
        raise RefNotFound("projection mirroring needs a plain SELECT")
    resolver = _Resolver(schema, strict=False)
    new_exprs, touched = [], False
    for proj in expr.expressions:
        new_exprs.append(proj)
        all_cols = list(proj.find_all(exp.Column))
        hit_idx = [i for i, c in enumerate(all_cols) if resolver.matches(c, src)]
        if hit_idx:
            touched = True
            twin = proj.copy()
            twin_cols = list(twin.find_all(exp.Column))
            for i in hit_idx:
                fresh = _column_like(twin_cols[i], dst.column)
                if twin_cols[i] is twin:
                    twin = fresh  # bare column: replace() cannot swap the root
                else:
                    twin_cols[i].replace(fresh)
            if isinstance(twin, exp.Alias):
                twin = twin.this
            new_exprs.append(twin)
    if not touched:
        raise RefNotFound(f"{src} is not projected")
    expr.set("expressions", new_exprs)
    return SqlTree(expr)


# ------------------------------------------------------------------ execute


@lru_cache(maxsize=None)
def _error_table() -> tuple[int, list[tuple[ExecErrorKind, re.Pattern]]]:
    raw = json.loads(resources.files("practiq").joinpath("data/exec_errors.json").read_text("utf-8"))
    patterns = [(ExecErrorKind(kind), re.compile(rx, re.I)) for kind, rx in raw["patterns"]]
    return raw["version"], patterns


def classify_exec_error(message: str) -> ExecErrorKind:
    for kind, rx in _error_table()[1]:
        if rx.search(message):
            return kind
    return ExecErrorKind.OTHER


def _cell(value):
    if isinstance(value, bytes):
        return value.hex()
    return value


def execute(
    handle: DatabaseHandle | sqlite3.Connection,
    sql: str,
    limit: int | None = RESULT_ROW_CAP,
    max_steps: int = 50_000_000,
) -> ResultTable:
    """Run ``sql``; at most ``limit`` rows are kept (``truncated`` marks the cut)."""
    conn = handle.conn if isinstance(handle, DatabaseHandle) else handle
    steps = {"n": 0}

    def progress():
        steps["n"] += 1
        return 1 if steps["n"] * 1000 > max_steps else 0

    conn.set_progress_handler(progress, 1000)
    try:
        cur = conn.execute(sql)
        columns = [d[0] for d in cur.description or []]
        if limit is None:
            rows = cur.fetchall()
            truncated = False
        else:
            rows = cur.fetchmany(limit + 1)
            truncated = len(rows) > limit
            rows = rows[:limit]
    except sqlite3.Warning as exc:
        raise ExecError(ExecErrorKind.OTHER, str(exc)) from None
    except sqlite3.Error as exc:
        raise ExecError(classify_exec_error(str(exc)), str(exc)) from None
    finally:
        conn.set_progress_handler(None, 0)
    return ResultTable(columns, [[_cell(v) for v in r] for r in rows], truncated)


def executes(handle, sql: str) -> bool:
    try:
        execute(handle, sql, limit=1)
    except ExecError:
        return False
    return True


# ---------------------------------------------------------------- round trip


@dataclass
class RoundTripReport:
    total: int = 0
    ok: int = 0
    skipped: list = field(default_factory=list)  # (index, parse diagnostic)
    corrupt: list = field(default_factory=list)  # (index, sql) whose re-parse differs

    @property
    def rate(self) -> float:
        return self.ok / self.total if self.total else 1.0


def roundtrip_report(sqls) -> RoundTripReport:
    """Check parse -> render -> parse structural equality over a query set."""
    report = RoundTripReport()
    for i, sql in enumerate(sqls):
        report.total += 1
        try:
            tree = parse(sql)
        except SqlParseError as exc:
            report.skipped.append((i, str(exc)))
            continue
        try:
            again = parse(render(tree))
        except SqlParseError:
            again = None
        if again == tree:
            report.ok += 1
        else:
            report.corrupt.append((i, sql))
    return report
