"""Generate clarification dialogues over the bundled five-database corpus.

Run with ``python demos/01_generate_dataset.py``. Everything is offline: the
mock provider answers from bundled fixtures, so the output is reproducible.
"""

# %% Materialize the corpus into a scratch directory
import tempfile
from collections import Counter

from practiq.corpus import load_catalog, load_examples
from practiq.minicorpus import materialize
from practiq.pipeline import GenConfig, run_generation
from practiq.provider import MockProvider

work = tempfile.mkdtemp(prefix="practiq-demo-")
paths = materialize(work)
catalog = load_catalog(paths.catalog)
examples = load_examples(paths.examples)
print(f"{len(catalog)} databases, {len(examples)} seed questions")

# %% Run every category operator, then assemble and gate the conversations
conversations, stats = run_generation(catalog, examples, GenConfig(db_dir=paths.db_dir, seed=0), MockProvider())
for cat, n in sorted(Counter(c.category.title for c in conversations).items()):
    print(f"  {cat:<32} {n:>4}")
print("binary gate:", stats.to_dict()["binary_gate"])

# %% Show one clarification exchange and one helpful-SQL reply
def show(conv):
    print(f"\n--- {conv.id} ({conv.category.title})")
    for t in conv.turns:
        line = t.sql if t.kind == "final_sql" else t.text
        print(f"{t.role:>9}: {line}")


show(next(c for c in conversations if c.category.value == "Ambiguous_WHERE_Column" and c.helpful_sql is None))
show(next(c for c in conversations if c.helpful_sql is not None))
show(next(c for c in conversations if c.category.value == "Unsupported_Join"))

# %% Replay every conversation against its rebuilt database
from practiq.replay import validate_dataset

print("\nviolations:", validate_dataset(conversations, paths.db_dir))
