"""Final-SQL prediction, execution accuracy and the failure taxonomy."""

from __future__ import annotations

import logging
import math
import os
import re
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

from practiq import prompting, sqlkit
from practiq.bench.report import EvalReport, FailureKind
from practiq.categories import AMBIGUOUS_COLUMN_CATEGORIES, CategoryLabel
from practiq.corpus import DatabaseHandle, SchemaDef
from practiq.errors import ExecError, ExecErrorKind, PractiqError, ProviderRefusal, RateLimited, SqlParseError, TagMissing
from practiq.provider.base import Provider, parse_tagged
from practiq.records import Conversation, MutationRecord
from practiq.replay import open_database
from practiq.schema_md import describe

log = logging.getLogger(__name__)

STRATEGIES = ("single", "dinsql")
FULL_MATCH_LIMIT = 5000

_FENCE = re.compile(r"```[ \t]*(?:sql|sqlite)?[ \t]*\n?(.*?)```", re.S | re.I)
_SELECT = re.compile(r"\b(with|select)\b", re.I)


def extract_sql(text: str) -> str | None:
    """SQL from free-form model output.

    The ``<result>`` span is used when present; inside it (or the whole text
    otherwise) the first fenced block wins, then everything from the first
    SELECT/WITH keyword on.
    """
    try:
        body = parse_tagged(text, "result")
    except TagMissing:
        body = text
    fenced = _FENCE.search(body)
    if fenced:
        body = fenced.group(1)
    m = _SELECT.search(body)
    if m is None:
        return None
    sql = body[m.start() :].strip().rstrip(";").strip()
    return sql or None


# ---------------------------------------------------------------- scoring


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def cells_equal(a, b, rel_tol: float = 1e-6) -> bool:
    if a is None or b is None:
        return a is None and b is None
    if _is_number(a) and _is_number(b):
        return math.isclose(a, b, rel_tol=rel_tol)
    if _is_number(a) or _is_number(b):
        return False
    return a == b


def _sort_key(row):
    out = []
    for v in row:
        if v is None:
            out.append((0, 0.0, ""))
        elif _is_number(v):
            out.append((1, float(v), ""))
        else:
            out.append((2, 0.0, str(v)))
    return out


def _rows_equal(r1, r2, rel_tol) -> bool:
    return len(r1) == len(r2) and all(cells_equal(a, b, rel_tol) for a, b in zip(r1, r2))


def results_match(pred_rows, gold_rows, order_sensitive: bool = False, rel_tol: float = 1e-6) -> bool:
    """Multiset (or list) equality of result rows, columns compared by position."""
    if len(pred_rows) != len(gold_rows):
        return False
    if order_sensitive:
        return all(_rows_equal(p, g, rel_tol) for p, g in zip(pred_rows, gold_rows))
    p_sorted = sorted(pred_rows, key=_sort_key)
    g_sorted = sorted(gold_rows, key=_sort_key)
    if all(_rows_equal(p, g, rel_tol) for p, g in zip(p_sorted, g_sorted)):
        return True
    # near-equal floats can sort differently on the two sides; pair rows greedily instead
    if len(pred_rows) > FULL_MATCH_LIMIT or not any(isinstance(v, float) for r in pred_rows for v in r):
        return False
    remaining = list(g_sorted)
    for p in p_sorted:
        for i, g in enumerate(remaining):
            if _rows_equal(p, g, rel_tol):
                del remaining[i]
                break
        else:
            return False
    return True


def execution_accuracy(
    pred_sql: str | None, gold_sql: str, handle: DatabaseHandle, order_sensitive: bool = False, rel_tol: float = 1e-6
) -> bool:
    """True iff the prediction executes and returns the gold result; any failure is False."""
    if not pred_sql:
        return False
    try:
        pred = sqlkit.execute(handle, pred_sql, limit=None)
    except ExecError:
        return False
    try:
        gold = sqlkit.execute(handle, gold_sql, limit=None)
    except ExecError as exc:
        log.warning("gold SQL failed: %s", exc)
        return False
    return results_match(pred.rows, gold.rows, order_sensitive, rel_tol)


def classify_failure(
    pred_sql: str | None, mutated_schema: SchemaDef, record: MutationRecord, handle: DatabaseHandle | None = None
) -> FailureKind:
    """Hallucination beats PartiallyCorrect beats IncorrectSql."""
    refs = []
    try:
        tree = sqlkit.parse(pred_sql or "")
    except SqlParseError:
        tree = None
    if tree is not None:
        refs, missing = sqlkit.column_references(tree, mutated_schema)
        if missing:
            return FailureKind.HALLUCINATION
    if handle is not None and pred_sql:
        try:
            sqlkit.execute(handle, pred_sql, limit=1)
        except ExecError as exc:
            if exc.kind is ExecErrorKind.UNKNOWN_COLUMN:
                return FailureKind.HALLUCINATION
    if record.category in AMBIGUOUS_COLUMN_CATEGORIES:
        introduced = {ref.key() for ref in record.introduced}
        if any(ref.key() in introduced for ref in refs):
            return FailureKind.PARTIALLY_CORRECT
    return FailureKind.INCORRECT_SQL


# ------------------------------------------------------------- prediction


def prediction_context(conv: Conversation) -> list[tuple[str, str]]:
    """Dialogue up to (not including) the final SQL turn."""
    out = []
    for t in conv.turns:
        if t.kind == "final_sql":
            break
        out.append((t.role, t.text))
    return out


@dataclass
class SqlConfig:
    strategy: str = "single"
    jobs: int = 1
    order_sensitive: bool = False
    rel_tol: float = 1e-6

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}")


def predict(conv: Conversation, provider: Provider, schema_md: str, strategy: str = "single") -> str | None:
    turns = prediction_context(conv)
    hints = ""
    if strategy == "dinsql":
        try:
            resp = provider.complete(prompting.schema_linking(schema_md, turns, conv.gold_sql))
            hints = parse_tagged(resp.text, "result")
        except (TagMissing, ProviderRefusal, RateLimited):
            hints = ""
    resp = provider.complete(prompting.predict_sql(schema_md, turns, conv.gold_sql, hints))
    return extract_sql(resp.text)


def _score_one(conv: Conversation, provider: Provider, config: SqlConfig, db_dir, workdir):
    try:
        handle = open_database(conv, db_dir, workdir)
    except PractiqError as exc:
        log.warning("%s: database replay failed (%s)", conv.id, exc)
        return False, None
    try:
        try:
            pred = predict(conv, provider, describe(handle), config.strategy)
        except (ProviderRefusal, RateLimited) as exc:
            log.info("%s: provider failed (%s)", conv.id, exc)
            pred = None
        ok = execution_accuracy(pred, conv.gold_sql, handle, config.order_sensitive, config.rel_tol)
        failure = None
        if not ok and conv.mutation is not None:
            failure = classify_failure(pred, handle.schema, conv.mutation, handle)
        return ok, failure
    finally:
        handle.close()


def run_sql_prediction(
    dataset: Sequence[Conversation], provider: Provider, config: SqlConfig, db_dir: str | os.PathLike
) -> EvalReport:
    """Execution accuracy of the predicted final SQL, with failure kinds for wrong mutated items."""
    report = EvalReport("sql", config={"strategy": config.strategy, "order_sensitive": config.order_sensitive})
    with tempfile.TemporaryDirectory(prefix="practiq-sql-") as workdir:

        def one(conv):
            return _score_one(conv, provider, config, db_dir, workdir)

        if config.jobs > 1:
            with ThreadPoolExecutor(max_workers=config.jobs) as pool:
                scored = list(pool.map(one, dataset))
        else:
            scored = [one(c) for c in dataset]
    for conv, (ok, failure) in zip(dataset, scored):
        report.add(conv.category, ok, failure=failure)
    return report
