"""Benchmarks over a generated dataset: question classification and final-SQL prediction."""

from practiq.bench.alpha import coincidence_matrix, krippendorff_alpha, ratings_from_csv
from practiq.bench.classify import (
    ClassifyConfig,
    build_classification_prompt,
    load_shots,
    parse_label,
    run_classification,
)
from practiq.bench.report import EvalReport, FailureKind
from practiq.bench.sqlpred import (
    SqlConfig,
    classify_failure,
    execution_accuracy,
    extract_sql,
    results_match,
    run_sql_prediction,
)
from practiq.schema_md import render_schema_markdown

__all__ = [
    "ClassifyConfig",
    "EvalReport",
    "FailureKind",
    "SqlConfig",
    "build_classification_prompt",
    "classify_failure",
    "coincidence_matrix",
    "execution_accuracy",
    "extract_sql",
    "krippendorff_alpha",
    "load_shots",
    "parse_label",
    "ratings_from_csv",
    "render_schema_markdown",
    "results_match",
    "run_classification",
    "run_sql_prediction",
]
