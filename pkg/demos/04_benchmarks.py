"""Score classification and final-SQL prediction on a generated dataset."""

# %% Build a small dataset first
import tempfile

from practiq.bench import (
    ClassifyConfig,
    SqlConfig,
    build_classification_prompt,
    classify_failure,
    run_classification,
    run_sql_prediction,
)
from practiq.corpus import load_catalog, load_examples
from practiq.minicorpus import materialize
from practiq.pipeline import GenConfig, run_generation
from practiq.provider import MockProvider
from practiq.replay import open_database

paths = materialize(tempfile.mkdtemp(prefix="practiq-demo-"))
data, _ = run_generation(load_catalog(paths.catalog), load_examples(paths.examples),
                         GenConfig(db_dir=paths.db_dir), MockProvider())

# %% A three-shot prompt carries 27 worked exemplars before the question
req = build_classification_prompt("(schema)", "What is the capacity?", k=3)
print(len(req.messages), "messages")

# %% An echoing mock is a harness check: it must score perfectly
print("classify echo:", run_classification(data, MockProvider(), ClassifyConfig(k=3), paths.db_dir).overall)
print("sql echo     :", run_sql_prediction(data, MockProvider(), SqlConfig(strategy="dinsql"), paths.db_dir).overall)

# %% A model that always says "answerable" only gets the answerable rows right
rep = run_classification(data, MockProvider(classify="answerable"), ClassifyConfig(), paths.db_dir)
print(f"always-answerable: overall={rep.overall:.3f}, excluding answerable={rep.overall_excluding_answerable}")
print(rep.confusion_csv())

# %% Wrong SQL gets a failure kind
conv = next(c for c in data if c.category.value == "Ambiguous_SELECT_Column" and c.helpful_sql is None)
with open_database(conv, paths.db_dir) as db:
    for sql in (conv.mutation.seed_sql, conv.mutation.clarified_sql_candidates[1], "SELECT count(*) FROM singer"):
        print(f"{classify_failure(sql, db.schema, conv.mutation, db).value:<17} {sql}")
