"""Command-line entry point: ``practiq <command> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from practiq import __version__
from practiq.categories import CategoryLabel
from practiq.errors import (
    DegenerateData,
    MissingDatabase,
    ParseError,
    PractiqError,
    ProviderRefusal,
    RateLimited,
    ResolutionError,
    SchemaVersionMismatch,
)

log = logging.getLogger("practiq")

EXIT_OK, EXIT_INPUT, EXIT_VALIDATION, EXIT_PROVIDER = 0, 2, 3, 4
INPUT_ERRORS = (ParseError, ResolutionError, MissingDatabase, SchemaVersionMismatch, DegenerateData, OSError, ValueError)


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _categories(text: str | None):
    if not text:
        return None
    return tuple(CategoryLabel.parse(t) for t in text.split(",") if t.strip())


def _quotas(items) -> dict:
    out = {}
    for item in items or ():
        name, _, n = item.partition("=")
        if not n:
            raise ValueError(f"quota {item!r} must look like CATEGORY=N")
        out[CategoryLabel.parse(name)] = int(n)
    return out


def _provider(args, **mock_kwargs):
    from practiq.provider import make_provider

    if args.provider == "mock":
        return make_provider("mock", seed=getattr(args, "seed", 0), **mock_kwargs)
    return make_provider("live")


def _write(text: str, out: str | None) -> None:
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)


# ---------------------------------------------------------------- commands


def cmd_generate(args) -> int:
    from practiq.corpus import load_catalog, load_examples
    from practiq.pipeline import ALL_CATEGORIES, GenConfig, load_existing, run_generation, write_outputs

    catalog = load_catalog(args.catalog)
    examples = load_examples(args.examples)
    config = GenConfig(
        db_dir=args.db_dir,
        seed=args.seed,
        categories=_categories(args.categories) or ALL_CATEGORIES,
        quotas=_quotas(args.quota),
        helpful_fraction=args.helpful_fraction,
        jobs=args.jobs,
        refine=not args.no_refine,
        binary_gate=not args.no_binary_gate,
    )
    provider = _provider(args)
    existing = load_existing(args.out) if args.resume else []
    conversations, stats = run_generation(catalog, examples, config, provider, existing)
    stats_file = write_outputs(args.out, conversations, stats)
    log.info("wrote %d conversations to %s (stats: %s)", len(conversations), args.out, stats_file)
    print(f"{len(conversations)} conversations -> {args.out}")
    return EXIT_OK if conversations else EXIT_VALIDATION


def cmd_validate(args) -> int:
    from practiq.corpus import read_conversations
    from practiq.replay import validate_dataset

    conversations = read_conversations(args.dataset)
    violations = validate_dataset(conversations, args.db_dir)
    for v in violations:
        print(f"VIOLATION {v}")
    print(f"{len(conversations)} conversations checked, {len(violations)} violations")
    return EXIT_VALIDATION if violations else EXIT_OK


def stats_rows(conversations) -> list[tuple[str, int]]:
    counts = {c: 0 for c in CategoryLabel}
    for conv in conversations:
        counts[conv.category] += 1
    return [(c.title, counts[c]) for c in CategoryLabel]


def cmd_stats(args) -> int:
    from practiq.corpus import read_conversations

    conversations = read_conversations(args.dataset)
    rows = stats_rows(conversations)
    helpful = sum(c.helpful_sql is not None for c in conversations)
    if args.json:
        print(json.dumps({"counts": dict(rows), "helpful_sql": helpful, "total": len(conversations)}, indent=2))
        return EXIT_OK
    width = max(len(name) for name, _ in rows)
    print(f"{'Category':<{width}}  Count")
    for name, n in rows:
        print(f"{name:<{width}}  {n:>5}")
    print(f"{'Total':<{width}}  {len(conversations):>5}")
    print(f"{'(helpful SQL)':<{width}}  {helpful:>5}")
    return EXIT_OK


def cmd_bench_classify(args) -> int:
    from practiq.bench import ClassifyConfig, run_classification
    from practiq.corpus import read_conversations

    dataset = read_conversations(args.dataset)
    provider = _provider(args, classify=args.mock_answer)
    report = run_classification(dataset, provider, ClassifyConfig(k=args.k, values=args.values, jobs=args.jobs), args.db_dir)
    _write(report.to_json(), args.out)
    if args.confusion_csv:
        Path(args.confusion_csv).write_text(report.confusion_csv(), encoding="utf-8")
    return EXIT_OK


def cmd_bench_sql(args) -> int:
    from practiq.bench import SqlConfig, run_sql_prediction
    from practiq.corpus import read_conversations

    dataset = read_conversations(args.dataset)
    provider = _provider(args, predict_sql=args.mock_answer)
    report = run_sql_prediction(dataset, provider, SqlConfig(strategy=args.strategy, jobs=args.jobs), args.db_dir)
    _write(report.to_json(), args.out)
    return EXIT_OK


def cmd_alpha(args) -> int:
    from practiq.bench import krippendorff_alpha, ratings_from_csv

    print(f"{krippendorff_alpha(ratings_from_csv(args.ratings), args.level):.6f}")
    return EXIT_OK


def cmd_minicorpus(args) -> int:
    from practiq.minicorpus import materialize

    paths = materialize(args.dest)
    print(json.dumps({"catalog": str(paths.catalog), "examples": str(paths.examples), "db_dir": str(paths.db_dir)}))
    return EXIT_OK


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    jobs_default = os.cpu_count() or 1
    parser = argparse.ArgumentParser(prog="practiq", description="Clarification-dialogue text-to-SQL data generation and benchmarks.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="repeat for more detail")
    sub = parser.add_subparsers(dest="command", required=True)

    def provider_flags(p, mock_answer_help: str):
        p.add_argument("--provider", choices=("mock", "live"), default="mock")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--mock-answer", default="echo", help=mock_answer_help)
        p.add_argument("--jobs", type=int, default=jobs_default)

    g = sub.add_parser("generate", help="generate the conversation dataset")
    g.add_argument("--catalog", required=True, help="Spider-style tables.json")
    g.add_argument("--examples", required=True, help="Spider-style examples JSON")
    g.add_argument("--db-dir", required=True, help="directory holding <db_id>/<db_id>.sqlite")
    g.add_argument("--out", required=True, help="output JSONL; stats go to <stem>.stats.json")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--provider", choices=("mock", "live"), default="mock")
    g.add_argument("--categories", help="comma-separated category names (default: all nine)")
    g.add_argument("--helpful-fraction", type=float, default=0.3)
    g.add_argument("--quota", action="append", metavar="CATEGORY=N", help="cap emitted conversations per category")
    g.add_argument("--resume", action="store_true", help="keep conversations already in --out")
    g.add_argument("--no-refine", action="store_true")
    g.add_argument("--no-binary-gate", action="store_true")
    g.add_argument("--jobs", type=int, default=jobs_default)
    g.set_defaults(func=cmd_generate)

    v = sub.add_parser("validate", help="replay and re-check every conversation")
    v.add_argument("--dataset", required=True)
    v.add_argument("--db-dir", required=True)
    v.set_defaults(func=cmd_validate)

    s = sub.add_parser("stats", help="per-category counts")
    s.add_argument("--dataset", required=True)
    s.add_argument("--json", action="store_true")
    s.set_defaults(func=cmd_stats)

    b = sub.add_parser("bench", help="run a benchmark over a dataset")
    bsub = b.add_subparsers(dest="bench_command", required=True)
    bc = bsub.add_parser("classify", help="nine-way question classification")
    bc.add_argument("--dataset", required=True)
    bc.add_argument("--db-dir", required=True)
    bc.add_argument("--k", type=int, choices=range(4), default=0)
    bc.add_argument("--values", choices=("lexicalOnly", "lexicalAndOracle"), default="lexicalOnly")
    bc.add_argument("--out", help="report JSON path (default: stdout)")
    bc.add_argument("--confusion-csv")
    provider_flags(bc, "mock label: 'echo' returns the gold label, anything else is returned verbatim")
    bc.set_defaults(func=cmd_bench_classify)

    bs = bsub.add_parser("sql", help="final-SQL prediction scored by execution accuracy")
    bs.add_argument("--dataset", required=True)
    bs.add_argument("--db-dir", required=True)
    bs.add_argument("--strategy", choices=("single", "dinsql"), default="single")
    bs.add_argument("--out", help="report JSON path (default: stdout)")
    provider_flags(bs, "mock SQL: 'echo' returns the gold SQL, anything else is returned verbatim")
    bs.set_defaults(func=cmd_bench_sql)

    a = sub.add_parser("alpha", help="Krippendorff's alpha from unit_id,rater_id,score CSV")
    a.add_argument("--ratings", required=True)
    a.add_argument("--level", choices=("ordinal", "nominal", "interval"), default="ordinal")
    a.set_defaults(func=cmd_alpha)

    m = sub.add_parser("minicorpus", help="write the bundled five-database corpus to a directory")
    m.add_argument("--dest", required=True)
    m.set_defaults(func=cmd_minicorpus)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=(logging.WARNING, logging.INFO, logging.DEBUG)[min(args.verbose, 2)],
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (ProviderRefusal, RateLimited) as exc:
        print(f"provider failure: {exc}", file=sys.stderr)
        return EXIT_PROVIDER
    except INPUT_ERRORS as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except PractiqError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
