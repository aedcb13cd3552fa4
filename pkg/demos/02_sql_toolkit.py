"""Parse, inspect, rewrite and execute SQL with the toolkit used by the mutators."""

# %% Parse and extract references against a schema
import tempfile

from practiq import sqlkit
from practiq.corpus import ColumnRef, checkout_database, load_catalog
from practiq.minicorpus import materialize

paths = materialize(tempfile.mkdtemp(prefix="practiq-demo-"))
schema = {s.db_id: s for s in load_catalog(paths.catalog)}["battle_death"]

sql = ("SELECT T1.name, T1.result FROM battle AS T1 JOIN ship AS T2 ON T1.id = T2.lost_in_battle "
       "WHERE T2.location = 'English Channel'")
tree = sqlkit.parse(sql)
refs = sqlkit.extract_refs(tree, schema)
print("select:", refs.select_columns)
print("where :", refs.where_atoms)
print("joins :", refs.joined_tables)

# %% Rewrites return new trees; the input is left alone
loc = ColumnRef("ship", "location")
widened = sqlkit.rewrite(tree, sqlkit.WidenPredicate(loc, (ColumnRef("ship", "origin"), ColumnRef("ship", "destination"))))
print(sqlkit.render(widened))
print(sqlkit.render(sqlkit.rewrite(tree, sqlkit.SubstituteLiteral("English Channel", "Bay of Biscay"))))
print(sqlkit.render(sqlkit.mirror_projections(sqlkit.parse("SELECT max(tonnage) FROM ship"),
                                              ColumnRef("ship", "tonnage"), ColumnRef("ship", "tonnage_2"))))

# %% Execution keeps at most 30 rows and labels errors
with checkout_database("battle_death", paths.db_dir) as db:
    print(sqlkit.execute(db, sql).rows)
    try:
        sqlkit.execute(db, "SELECT hull FROM ship")
    except sqlkit.ExecError as exc:
        print("error kind:", exc.kind.value)

# %% Round-trip stability over the bundled query set
from practiq.minicorpus import spider_style_sql

report = sqlkit.roundtrip_report(spider_style_sql())
print(f"round trip: {report.ok}/{report.total}, skipped={len(report.skipped)}, corrupt={len(report.corrupt)}")
