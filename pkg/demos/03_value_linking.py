"""Retrieve database cell values that a question mentions, even loosely."""

# %%
import tempfile

from practiq import valuelink
from practiq.corpus import checkout_database
from practiq.minicorpus import materialize
from practiq.schema_md import describe

paths = materialize(tempfile.mkdtemp(prefix="practiq-demo-"))

with checkout_database("battle_death", paths.db_dir) as db:
    index = valuelink.build_index(db)
    for q in ["Which ships were lost in the english chanel?", "How many ships were captured?", "battles in 1205"]:
        print(q, "->", valuelink.retrieve_values(q, index))

    # %% The retrieved values are appended to the schema description shown to a model
    found = valuelink.retrieve_values("ships lost in the English Channel", index)
    print(describe(db, found))

# %% The three similarity signals
for a, b in [("english chanel", "English Channel"), ("useful cv", "useful CV template"), ("paris", "london")]:
    print(f"{a!r} vs {b!r}: {valuelink.similarity(a, b):.3f}")
