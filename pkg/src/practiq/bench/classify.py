"""Nine-way question classification over a generated dataset."""

from __future__ import annotations

import json
import logging
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from typing import Sequence

from practiq import valuelink
from practiq.bench.report import EvalReport
from practiq.categories import MUTATED_CATEGORIES, CategoryLabel, definition_block
from practiq.errors import InsufficientShots, PractiqError, ProviderRefusal, RateLimited, TagMissing
from practiq.prompting import tagged
from practiq.provider.base import Decode, Provider, ProviderRequest, Task, load_prompt, parse_tagged
from practiq.records import Conversation
from practiq.replay import open_database
from practiq.schema_md import describe

log = logging.getLogger(__name__)

VALUE_MODES = ("lexicalOnly", "lexicalAndOracle")
MAX_SHOTS = 3


@dataclass(frozen=True)
class Shot:
    category: CategoryLabel
    schema: str
    question: str
    scratch: str


@lru_cache(maxsize=None)
def load_shots() -> dict:
    raw = json.loads(resources.files("practiq").joinpath("data/shots.json").read_text("utf-8"))
    out: dict = {c: [] for c in CategoryLabel}
    for s in raw["shots"]:
        cat = CategoryLabel(s["category"])
        out[cat].append(Shot(cat, s["schema"], s["question"], s["scratch"]))
    return {c: tuple(v) for c, v in out.items()}


def system_prompt() -> str:
    return load_prompt(Task.NINE_WAY_CLASSIFY).replace(
        "{category_with_explanation}", definition_block(MUTATED_CATEGORIES)
    )


def _user_message(schema_md: str, question: str) -> str:
    return tagged("schema", schema_md) + "\n\n" + tagged("question", question)


def build_classification_prompt(
    schema_md: str, question: str, k: int = 0, shots: dict | None = None, reference: str | None = None
) -> ProviderRequest:
    """System prompt with the category definitions, then ``k`` worked exemplars per category.

    Exemplars go round by round (one of each category per round) so no
    category sits next to the question in every setting.
    """
    if not 0 <= k <= MAX_SHOTS:
        raise ValueError(f"k must be in 0..{MAX_SHOTS}")
    shots = load_shots() if shots is None else shots
    for cat in CategoryLabel:
        if len(shots.get(cat, ())) < k:
            raise InsufficientShots(f"{cat.value}: need {k} exemplars, have {len(shots.get(cat, ()))}")
    messages = []
    for i in range(k):
        for cat in CategoryLabel:
            shot = shots[cat][i]
            messages.append(("user", _user_message(shot.schema, shot.question)))
            messages.append(("assistant", f"<scratch>{shot.scratch}</scratch>\n<result>{cat.value}</result>"))
    messages.append(("user", _user_message(schema_md, question)))
    return ProviderRequest(
        task=Task.NINE_WAY_CLASSIFY,
        system_prompt=system_prompt(),
        messages=tuple(messages),
        decode=Decode(max_tokens=1024),
        payload={"reference": reference},
    )


def parse_label(text: str) -> CategoryLabel | None:
    """Label inside ``<result>``; ``None`` when absent or not one of the nine tokens."""
    try:
        body = parse_tagged(text, "result")
    except TagMissing:
        return None
    body = body.strip().strip("`'\".").strip()
    try:
        return CategoryLabel.parse(body)
    except ValueError:
        return None


@dataclass
class ClassifyConfig:
    k: int = 0
    values: str = "lexicalOnly"
    link: valuelink.LinkConfig = field(default_factory=valuelink.LinkConfig)
    jobs: int = 1

    def __post_init__(self):
        if self.values not in VALUE_MODES:
            raise ValueError(f"values must be one of {VALUE_MODES}")


def classification_input(conv: Conversation, handle, config: ClassifyConfig) -> str:
    """Schema markdown of the conversation's database with the retrieved cell values."""
    index = valuelink.build_index(handle, config.link)
    found = valuelink.retrieve_values(conv.initial_question, index, config.link)
    if config.values == "lexicalAndOracle":
        found = valuelink.merge_values(found, valuelink.oracle_values(conv.mutation))
    return describe(handle, found or None)


def _classify_one(conv: Conversation, provider: Provider, config: ClassifyConfig, db_dir, workdir):
    try:
        handle = open_database(conv, db_dir, workdir)
    except PractiqError as exc:
        log.warning("%s: database replay failed (%s)", conv.id, exc)
        return None
    try:
        schema_md = classification_input(conv, handle, config)
    finally:
        handle.close()
    request = build_classification_prompt(schema_md, conv.initial_question, config.k, reference=conv.category.value)
    try:
        return parse_label(provider.complete(request).text)
    except (ProviderRefusal, RateLimited) as exc:
        log.info("%s: provider failed (%s)", conv.id, exc)
        return None


def run_classification(
    dataset: Sequence[Conversation], provider: Provider, config: ClassifyConfig, db_dir: str | os.PathLike
) -> EvalReport:
    """Classify every initial question; unparseable or failed calls count as wrong."""
    report = EvalReport("classification", config={"k": config.k, "values": config.values})
    with tempfile.TemporaryDirectory(prefix="practiq-cls-") as workdir:

        def one(conv):
            return _classify_one(conv, provider, config, db_dir, workdir)

        if config.jobs > 1:
            with ThreadPoolExecutor(max_workers=config.jobs) as pool:
                predictions = list(pool.map(one, dataset))
        else:
            predictions = [one(c) for c in dataset]
    for conv, pred in zip(dataset, predictions):
        report.add(conv.category, pred is conv.category, predicted=pred)
    return report
