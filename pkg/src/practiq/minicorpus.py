"""The bundled five-database corpus used by the demos and the acceptance suite."""

from __future__ import annotations

import json
import logging
import sqlite3
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from practiq.corpus import introspect, schema_to_spider

log = logging.getLogger(__name__)

DB_IDS = ("concert_singer", "museum_visit", "battle_death", "car_1", "world_1")


@dataclass(frozen=True)
class CorpusPaths:
    root: Path
    catalog: Path
    examples: Path
    db_dir: Path


def _data(name: str):
    return resources.files("practiq").joinpath(f"data/minicorpus/{name}")


def build_database(db_id: str, target: Path) -> None:
    target.parent.mkdir(parents=True, exist_ok=True)
    if target.exists():
        target.unlink()
    conn = sqlite3.connect(str(target))
    try:
        conn.executescript(_data(f"{db_id}.sql").read_text("utf-8"))
        conn.commit()
    finally:
        conn.close()


def materialize(dest: str | Path) -> CorpusPaths:
    """Write ``tables.json``, ``dev.json`` and ``database/<db>/<db>.sqlite`` under ``dest``.

    The catalog is derived from the built files, so it always agrees with them.
    """
    dest = Path(dest)
    db_dir = dest / "database"
    entries = []
    for db_id in DB_IDS:
        path = db_dir / db_id / f"{db_id}.sqlite"
        build_database(db_id, path)
        conn = sqlite3.connect(str(path))
        try:
            entries.append(schema_to_spider(introspect(conn, db_id)))
        finally:
            conn.close()
    catalog = dest / "tables.json"
    catalog.write_text(json.dumps(entries, indent=1) + "\n", "utf-8")
    examples = dest / "dev.json"
    examples.write_text(_data("dev.json").read_text("utf-8"), "utf-8")
    log.info("mini-corpus written to %s", dest)
    return CorpusPaths(dest, catalog, examples, db_dir)


def spider_style_sql() -> list[str]:
    """Bundled gold queries in the Spider grammar, for round-trip checks without Spider itself."""
    return list(json.loads(resources.files("practiq").joinpath("data/spider_style_sql.json").read_text("utf-8"))["queries"])
