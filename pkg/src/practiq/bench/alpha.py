"""Krippendorff's alpha over a unit-by-rater matrix with missing entries."""

from __future__ import annotations

import csv
import math
import os
from collections import defaultdict

import numpy as np

from practiq.errors import DegenerateData, ParseError

LEVELS = ("nominal", "ordinal", "interval")


def _missing(v) -> bool:
    return v is None or (isinstance(v, float) and math.isnan(v))


def _delta2(values: np.ndarray, marginals: np.ndarray, level: str) -> np.ndarray:
    """Squared distance between every pair of distinct rated values."""
    k = len(values)
    if level == "nominal":
        return 1.0 - np.eye(k)
    if level == "interval":
        diff = values[:, None] - values[None, :]
        return diff * diff
    # ordinal: marginal mass between the two ranks, ends counted by half
    cum = np.concatenate([[0.0], np.cumsum(marginals)])
    d = np.zeros((k, k))
    for c in range(k):
        for j in range(c, k):
            between = cum[j + 1] - cum[c] - (marginals[c] + marginals[j]) / 2.0
            d[c, j] = d[j, c] = between * between
    return d


def coincidence_matrix(ratings) -> tuple[np.ndarray, np.ndarray]:
    """(sorted distinct values, coincidence matrix); units with fewer than two ratings drop out."""
    units = [[v for v in row if not _missing(v)] for row in ratings]
    units = [u for u in units if len(u) >= 2]
    values = np.array(sorted({v for u in units for v in u}), dtype=float)
    pos = {v: i for i, v in enumerate(values.tolist())}
    o = np.zeros((len(values), len(values)))
    for u in units:
        m = len(u)
        counts = np.zeros(len(values))
        for v in u:
            counts[pos[float(v)]] += 1
        # ordered pairs of different raters within the unit
        o += (np.outer(counts, counts) - np.diag(counts)) / (m - 1)
    return values, o


def krippendorff_alpha(ratings, level: str = "ordinal") -> float:
    """``ratings[u][r]`` is rater r's score for unit u, ``None``/NaN when missing."""
    if level not in LEVELS:
        raise ValueError(f"level must be one of {LEVELS}")
    values, o = coincidence_matrix(ratings)
    marginals = o.sum(axis=1)
    n = marginals.sum()
    if n < 2:
        raise DegenerateData("fewer than two pairable ratings")
    d2 = _delta2(values, marginals, level)
    observed = float((o * d2).sum())
    expected = float((np.outer(marginals, marginals) * d2).sum()) / (n - 1)
    if expected == 0.0:
        if observed == 0.0:
            return 1.0
        raise DegenerateData("expected disagreement is zero")
    return 1.0 - observed / expected


def ratings_from_csv(path: str | os.PathLike) -> list[list]:
    """Read ``unit_id,rater_id,score`` rows into a unit-by-rater matrix (sorted ids)."""
    table: dict = defaultdict(dict)
    raters = set()
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            missing = {"unit_id", "rater_id", "score"} - set(reader.fieldnames or [])
            if missing:
                raise ParseError(f"{path}: missing columns {sorted(missing)}")
            for lineno, row in enumerate(reader, 2):
                score = (row["score"] or "").strip()
                if not score:
                    continue
                try:
                    value = float(score)
                except ValueError:
                    raise ParseError(f"{path}:{lineno}: score {score!r} is not a number") from None
                table[row["unit_id"]][row["rater_id"]] = value
                raters.add(row["rater_id"])
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    order = sorted(raters)
    return [[table[u].get(r) for r in order] for u in sorted(table)]
