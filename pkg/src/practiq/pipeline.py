"""Generation driver: mutate, converse, gate, and collect statistics."""

from __future__ import annotations

import json
import logging
import os
import random
import tempfile
from collections import Counter, defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from practiq import dialogue, prompting, sqlkit
from practiq.categories import AMBIGUOUS_COLUMN_CATEGORIES, MUTATED_CATEGORIES, CategoryLabel
from practiq.corpus import (
    CorpusExample,
    SchemaDef,
    checkout_database,
    read_conversations,
    write_conversations,
)
from practiq.errors import (
    DeltaConflict,
    ExecError,
    PractiqError,
    ProviderRefusal,
    RateLimited,
    Skip,
    SkipReason,
    TagMissing,
)
from practiq.mutator import mutate
from practiq.provider.base import Provider, ask
from practiq.records import Conversation
from practiq.schema_md import describe

log = logging.getLogger(__name__)

ALL_CATEGORIES = (*MUTATED_CATEGORIES, CategoryLabel.ANSWERABLE)


@dataclass
class GenConfig:
    db_dir: str | os.PathLike
    seed: int = 0
    categories: tuple = ALL_CATEGORIES
    quotas: dict = field(default_factory=dict)  # category -> max emitted; absent means unlimited
    helpful_fraction: float = 0.3
    jobs: int = 1
    refine: bool = True
    binary_gate: bool = True

    def __post_init__(self):
        if not 0.0 <= self.helpful_fraction <= 1.0:
            raise ValueError("helpful_fraction must lie in [0, 1]")
        self.categories = tuple(CategoryLabel(c) for c in self.categories)
        self.quotas = {CategoryLabel(k): int(v) for k, v in self.quotas.items()}


@dataclass
class GenStats:
    attempted: Counter = field(default_factory=Counter)
    emitted: Counter = field(default_factory=Counter)
    skipped: dict = field(default_factory=lambda: defaultdict(Counter))
    helpful: int = 0
    refined: int = 0
    binary_checked: int = 0
    binary_rejected: int = 0

    def skip(self, category: CategoryLabel, reason: SkipReason) -> None:
        self.skipped[category][reason] += 1

    @property
    def binary_reject_rate(self) -> float:
        return self.binary_rejected / self.binary_checked if self.binary_checked else 0.0

    def to_dict(self) -> dict:
        cats = [c for c in ALL_CATEGORIES if self.attempted[c] or self.emitted[c] or self.skipped.get(c)]
        return {
            "per_category": {
                c.value: {
                    "attempted": self.attempted[c],
                    "emitted": self.emitted[c],
                    "skipped": {r.value: n for r, n in sorted(self.skipped.get(c, {}).items(), key=lambda kv: kv[0].value)},
                }
                for c in cats
            },
            "total_emitted": sum(self.emitted.values()),
            "helpful_sql": self.helpful,
            "refined": self.refined,
            "binary_gate": {
                "checked": self.binary_checked,
                "rejected": self.binary_rejected,
                "reject_rate": self.binary_reject_rate,
            },
        }


@dataclass(frozen=True)
class _Task:
    category: CategoryLabel
    example: CorpusExample

    @property
    def conv_id(self) -> str:
        return dialogue.conversation_id(self.example.example_id, self.category)


@dataclass
class _Outcome:
    task: _Task
    conversation: Conversation | None = None
    skip: SkipReason | None = None
    binary_checked: bool = False


def gate_binary_category(conversation: Conversation, provider: Provider, schema_md: str = "") -> bool:
    """Ask whether the initial question belongs to the designed category; anything else rejects."""
    request = prompting.binary_category_check(schema_md, conversation.initial_question, conversation.category)
    try:
        answer = ask(provider, request)
    except (TagMissing, ProviderRefusal, RateLimited):
        return False
    try:
        return CategoryLabel.parse(answer.split()[0] if answer.split() else "") is conversation.category
    except ValueError:
        return False


def join_seed(examples: Sequence[CorpusExample]) -> CorpusExample:
    """The example with the shortest gold SQL, ties broken by id."""
    return min(examples, key=lambda e: (len(e.gold_sql), e.example_id))


def _skip_reason(exc: Exception) -> SkipReason:
    if isinstance(exc, Skip):
        return exc.reason
    if isinstance(exc, (ProviderRefusal, RateLimited, TagMissing)):
        return SkipReason.PROVIDER_REFUSAL
    if isinstance(exc, ExecError):
        return SkipReason.EXEC_ERROR
    if isinstance(exc, DeltaConflict):
        return SkipReason.DELTA_CONFLICT
    return SkipReason.PRECONDITION


class _Runner:
    def __init__(self, schemas: dict, examples: Sequence[CorpusExample], config: GenConfig, provider: Provider, workdir):
        self.schemas = schemas
        self.config = config
        self.provider = provider
        self.workdir = workdir
        self.by_db = defaultdict(list)
        for ex in examples:
            self.by_db[ex.db_id].append(ex)

    def rng(self, task: _Task, salt: str = "") -> random.Random:
        return random.Random(f"{self.config.seed}:{task.example.example_id}:{task.category.value}{salt}")

    def __call__(self, task: _Task) -> _Outcome:
        try:
            return self._run(task)
        except PractiqError as exc:
            reason = _skip_reason(exc)
            log.debug("%s skipped: %s", task.conv_id, exc)
            return _Outcome(task, skip=reason)

    def _run(self, task: _Task) -> _Outcome:
        ex, cat, cfg = task.example, task.category, self.config
        schema = self.schemas[ex.db_id]
        handle = checkout_database(ex.db_id, cfg.db_dir, self.workdir)
        try:
            if cat is CategoryLabel.ANSWERABLE:
                conv = dialogue.assemble_answerable(ex, handle, self.provider, describe(handle), cfg.seed)
                return _Outcome(task, self._executable(conv, handle))
            rng = self.rng(task)
            record = mutate(cat, ex, schema, handle, self.provider, corpus=self.by_db[ex.db_id], rng=rng)
            handle.invalidate()
            schema_md = describe(handle)
            conv = None
            if cat in AMBIGUOUS_COLUMN_CATEGORIES and self.rng(task, ":helpful").random() < cfg.helpful_fraction:
                conv = dialogue.try_helpful(record, handle, self.provider, schema_md, cfg.seed, schema)
            if conv is None:
                conv = dialogue.assemble_clarification(
                    record, handle, self.provider, schema_md, rng, cfg.seed, refine=cfg.refine
                )
            conv = self._executable(conv, handle)
            conv.check_shape()
            if cfg.binary_gate:
                if not gate_binary_category(conv, self.provider, schema_md):
                    return _Outcome(task, skip=SkipReason.BINARY_GATE, binary_checked=True)
                return _Outcome(task, conv, binary_checked=True)
            return _Outcome(task, conv)
        finally:
            handle.close()

    @staticmethod
    def _executable(conv: Conversation, handle) -> Conversation:
        if not sqlkit.executes(handle, conv.final_sql):
            raise Skip(SkipReason.EXEC_ERROR, "final SQL does not execute")
        return conv


def _map(fn, tasks: list, jobs: int) -> list:
    if jobs <= 1:
        return [fn(t) for t in tasks]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, tasks))


def run_generation(
    catalog: Iterable[SchemaDef],
    examples: Sequence[CorpusExample],
    config: GenConfig,
    provider: Provider,
    existing: Sequence[Conversation] = (),
) -> tuple[list[Conversation], GenStats]:
    """Run every requested category over the corpus.

    ``existing`` holds conversations from an earlier partial run; their ids are
    not regenerated and they count toward quotas. The returned list contains
    them too, ordered by id.
    """
    schemas = {s.db_id: s for s in catalog}
    usable = [e for e in examples if e.db_id in schemas]
    stats = GenStats()
    done = {c.id: c for c in existing}
    selected = set(config.categories)
    mutated = [c for c in MUTATED_CATEGORIES if c in selected]

    tasks: list[_Task] = []
    for cat in mutated:
        if cat is CategoryLabel.UNSUPPORTED_JOIN:
            per_db = defaultdict(list)
            for ex in usable:
                per_db[ex.db_id].append(ex)
            seeds = [join_seed(group) for _, group in sorted(per_db.items())]
        else:
            seeds = usable
        tasks.extend(_Task(cat, ex) for ex in seeds)

    with tempfile.TemporaryDirectory(prefix="practiq-gen-") as workdir:
        runner = _Runner(schemas, usable, config, provider, workdir)
        outcomes = _run_tasks(runner, tasks, done, config, stats)

        if CategoryLabel.ANSWERABLE in selected:
            # a seed whose question survived into a mutated conversation is not answerable any more
            consumed = {
                c.mutation.seed_example_id
                for c in [*done.values(), *outcomes]
                if c.mutation is not None and c.mutation.mutated_question == c.mutation.seed_question
            }
            answerable = [_Task(CategoryLabel.ANSWERABLE, ex) for ex in usable if ex.example_id not in consumed]
            outcomes += _run_tasks(runner, answerable, done, config, stats)

    merged = {c.id: c for c in [*done.values(), *outcomes]}
    conversations = [merged[k] for k in sorted(merged)]
    return conversations, stats


def _run_tasks(runner: _Runner, tasks: list, done: dict, config: GenConfig, stats: GenStats) -> list[Conversation]:
    pending = [t for t in tasks if t.conv_id not in done]
    results = _map(runner, pending, config.jobs)
    kept = Counter(c.category for c in done.values())
    stats.emitted.update(kept)
    out = []
    for res in sorted(results, key=lambda r: r.task.conv_id):
        cat = res.task.category
        stats.attempted[cat] += 1
        if res.binary_checked:
            stats.binary_checked += 1
            if res.skip is SkipReason.BINARY_GATE:
                stats.binary_rejected += 1
        if res.conversation is None:
            stats.skip(cat, res.skip)
            continue
        quota = config.quotas.get(cat)
        if quota is not None and kept[cat] >= quota:
            stats.skip(cat, SkipReason.QUOTA)
            continue
        kept[cat] += 1
        stats.emitted[cat] += 1
        conv = res.conversation
        stats.helpful += conv.helpful_sql is not None
        stats.refined += bool(conv.provenance.get("refined"))
        out.append(conv)
    return out


# ------------------------------------------------------------------ output


def load_existing(path: str | os.PathLike) -> list[Conversation]:
    """Conversations already written by an earlier run; a torn last line is ignored."""
    if not Path(path).exists():
        return []
    return read_conversations(path, tolerate_partial=True)


def stats_path(dataset_path: str | os.PathLike) -> Path:
    p = Path(dataset_path)
    return p.with_name(p.stem + ".stats.json")


def write_outputs(path: str | os.PathLike, conversations: Sequence[Conversation], stats: GenStats) -> Path:
    """Write the dataset (atomically, ordered by id) and its stats file next to it."""
    target = Path(path)
    write_conversations(target, sorted(conversations, key=lambda c: c.id))
    sp = stats_path(target)
    sp.write_text(json.dumps(stats.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return sp
