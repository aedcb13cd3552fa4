"""Question-to-cell-value linking for the classification benchmark.

Lexical retrieval scores every question n-gram against every indexed cell
value; oracle retrieval reads the values a mutation introduced straight from
its record.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Mapping

from practiq.categories import CategoryLabel
from practiq.corpus import ColumnRef, DatabaseHandle
from practiq.records import MutationRecord

_NON_WORD = re.compile(r"[^0-9a-z]+")

# n-grams made only of these carry no value signal
STOPWORDS = frozenset(
    "a an and are as at be by did do does for from has have how i in is it many me much "
    "of on or show tell that the their them there these they this to was were what when "
    "where which who whose with".split()
)


def normalize(text) -> str:
    """Lowercase, punctuation to spaces, single-spaced."""
    return " ".join(_NON_WORD.sub(" ", str(text).lower()).split())


def levenshtein(a: str, b: str) -> int:
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


@lru_cache(maxsize=1 << 18)
def levenshtein_within(a: str, b: str, bound: int) -> int:
    """Exact distance when it is at most ``bound``; otherwise some value above ``bound``."""
    if abs(len(a) - len(b)) > bound:
        return bound + 1
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        if min(cur) > bound:
            return bound + 1
        prev = cur
    return prev[-1]


def edit_similarity(a: str, b: str) -> float:
    if not a and not b:
        return 1.0
    return 1.0 - levenshtein(a, b) / max(len(a), len(b))


def trigrams(text: str) -> frozenset:
    padded = f"  {text} "
    return frozenset(padded[i : i + 3] for i in range(len(padded) - 2))


def jaccard(x: frozenset, y: frozenset) -> float:
    if not x and not y:
        return 1.0
    return len(x & y) / len(x | y)


def containment(x: frozenset, y: frozenset) -> float:
    """Share of the smaller token set found in the larger one."""
    if not x or not y:
        return 1.0 if x == y else 0.0
    return len(x & y) / min(len(x), len(y))


def similarity(a, b) -> float:
    """Symmetric score in [0, 1]; 1.0 when the normalized strings are equal."""
    na, nb = normalize(a), normalize(b)
    if na == nb:
        return 1.0
    return max(
        edit_similarity(na, nb),
        jaccard(trigrams(na), trigrams(nb)),
        containment(frozenset(na.split()), frozenset(nb.split())),
    )


@dataclass(frozen=True)
class LinkConfig:
    threshold: float = 0.6
    min_ngram: int = 1
    max_ngram: int = 5
    top_k: int = 4
    cap: int = 2000  # distinct values indexed per column


@dataclass(frozen=True)
class _Entry:
    value: object
    norm: str
    grams: frozenset
    tokens: frozenset


@dataclass
class ValueIndex:
    text: dict = field(default_factory=dict)  # ColumnRef -> list[_Entry]
    numeric: dict = field(default_factory=dict)  # ColumnRef -> list of values

    @property
    def columns(self) -> list[ColumnRef]:
        return [*self.text, *self.numeric]

    def values(self, ref: ColumnRef) -> list:
        if ref in self.text:
            return [e.value for e in self.text[ref]]
        return list(self.numeric.get(ref, []))


def build_index(handle: DatabaseHandle, config: LinkConfig = LinkConfig()) -> ValueIndex:
    """Distinct cell values per column, capped, taken from the live database."""
    index = ValueIndex()
    schema = handle.schema
    for ref in schema.columns():
        values = [v for v in handle.distinct_values(ref, limit=config.cap) if v is not None]
        if schema.column_type(ref) == "text":
            entries = []
            for v in values:
                if not isinstance(v, str):
                    continue
                norm = normalize(v)
                if norm:
                    entries.append(_Entry(v, norm, trigrams(norm), frozenset(norm.split())))
            index.text[ref] = entries
        else:
            index.numeric[ref] = values
    return index


def question_ngrams(question: str, config: LinkConfig = LinkConfig()) -> list[str]:
    tokens = normalize(question).split()
    out = []
    for n in range(config.min_ngram, config.max_ngram + 1):
        for i in range(len(tokens) - n + 1):
            gram = tokens[i : i + n]
            if all(t in STOPWORDS for t in gram):
                continue
            out.append(" ".join(gram))
    return list(dict.fromkeys(out))


def _score(gram: str, gram_grams: frozenset, gram_tokens: frozenset, entry: _Entry, threshold: float) -> float:
    if gram == entry.norm:
        return 1.0
    best = max(jaccard(gram_grams, entry.grams), containment(gram_tokens, entry.tokens))
    if best >= 1.0:
        return best
    # only distances that would beat both the threshold and the current best matter
    longest = max(len(gram), len(entry.norm))
    bound = math.floor((1.0 - max(threshold, best)) * longest + 1e-9)
    dist = levenshtein_within(gram, entry.norm, bound)
    if dist <= bound:
        best = max(best, 1.0 - dist / longest)
    return best


def retrieve_values(question: str, index: ValueIndex, config: LinkConfig = LinkConfig()) -> dict:
    """Per-column values similar to some question n-gram, best first, ties lexicographic."""
    grams = question_ngrams(question, config)
    if not grams:
        return {}
    prepared = [(g, trigrams(g), frozenset(g.split())) for g in grams]
    out: dict = {}
    for ref, entries in index.text.items():
        scored = []
        for entry in entries:
            best = max(_score(g, gg, gt, entry, config.threshold) for g, gg, gt in prepared)
            if best >= config.threshold:
                scored.append((-best, entry.norm, str(entry.value), entry.value))
        if scored:
            scored.sort(key=lambda s: s[:3])
            out[ref] = [s[3] for s in scored[: config.top_k]]
    tokens = set(normalize(question).split())
    for ref, values in index.numeric.items():
        hits = sorted({v for v in values if _number_text(v) in tokens}, key=lambda v: (str(v)))
        if hits:
            out[ref] = hits[: config.top_k]
    return out


def _number_text(value) -> str:
    if isinstance(value, float) and value.is_integer():
        value = int(value)
    return normalize(value)


def oracle_values(record: MutationRecord | None) -> dict:
    """The cell values a category's ambiguity or absence hinges on.

    Categories whose signal lives in the schema (removed, duplicated or
    disconnected columns) or in the question wording get nothing.
    """
    if record is None or record.target is None:
        return {}
    cat = record.category
    if cat is CategoryLabel.AMBIGUOUS_VALUES_WITHIN_COLUMN:
        return {record.target: list(record.introduced)}
    if cat is CategoryLabel.AMBIGUOUS_WHERE_COLUMN:
        return {ref: [record.target_value] for ref in record.introduced}
    if cat is CategoryLabel.NONEXISTENT_FILTER_VALUE:
        return {record.target: list(record.details.get("surviving_values") or [])}
    return {}


def merge_values(*maps: Mapping) -> dict:
    """Union of value maps, order of first appearance kept."""
    out: dict = {}
    for m in maps:
        for ref, values in m.items():
            bucket = out.setdefault(ref, [])
            for v in values:
                if v not in bucket:
                    bucket.append(v)
    return out

