import sqlite3
from pathlib import Path

import pytest

from practiq.corpus import DatabaseHandle, load_catalog, load_examples
from practiq.minicorpus import materialize
from practiq.pipeline import GenConfig, run_generation
from practiq.provider import MockProvider


@pytest.fixture(scope="session")
def mini(tmp_path_factory):
    """The bundled five-database corpus written to a temp dir."""
    return materialize(tmp_path_factory.mktemp("mini"))


@pytest.fixture(scope="session")
def catalog(mini):
    return {s.db_id: s for s in load_catalog(mini.catalog)}


@pytest.fixture(scope="session")
def examples(mini):
    return load_examples(mini.examples)


@pytest.fixture(scope="session")
def generated(mini, catalog, examples):
    """One mock generation run shared by the read-only tests."""
    convs, stats = run_generation(catalog.values(), examples, GenConfig(db_dir=mini.db_dir, seed=0), MockProvider())
    return convs, stats


def example(examples, *, db_id=None, contains=None, sql=None):
    for ex in examples:
        if db_id and ex.db_id != db_id:
            continue
        if contains and contains.lower() not in ex.question.lower():
            continue
        if sql and sql.lower() not in ex.gold_sql.lower():
            continue
        return ex
    raise LookupError(f"no example matching {db_id=} {contains=} {sql=}")


def make_db(path: Path, script: str, db_id: str = "t") -> DatabaseHandle:
    """A handle on a throwaway database built from ``script``."""
    path.parent.mkdir(parents=True, exist_ok=True)
    conn = sqlite3.connect(str(path))
    conn.executescript(script)
    conn.commit()
    conn.close()
    return DatabaseHandle(db_id, path)


ACCEPTANCE_LINES: list[str] = []


def record_acceptance(number: int, ok: bool | None, text: str) -> str:
    """``ok=None`` marks an optional criterion that was not run."""
    status = "SKIP" if ok is None else "PASS" if ok else "FAIL"
    line = f"[criterion {number}] {status}: {text}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
