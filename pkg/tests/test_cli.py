import json

import pytest

from practiq.cli import main


@pytest.fixture(scope="module")
def dataset(mini, tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "data.jsonl"
    code = main([
        "generate", "--catalog", str(mini.catalog), "--examples", str(mini.examples),
        "--db-dir", str(mini.db_dir), "--out", str(out), "--seed", "0", "--jobs", "2",
        "--categories", "Ambiguous_SELECT_Column,Nonexistent_Filter_Value,answerable",
    ])
    assert code == 0
    return out


def test_generate_writes_stats(dataset):
    stats = json.loads(dataset.with_name("data.stats.json").read_text())
    assert set(stats["per_category"]) == {"Ambiguous_SELECT_Column", "Nonexistent_Filter_Value", "answerable"}


def test_validate_ok(dataset, mini, capsys):
    assert main(["validate", "--dataset", str(dataset), "--db-dir", str(mini.db_dir)]) == 0
    assert "0 violations" in capsys.readouterr().out


def test_validate_flags_tampering(dataset, mini, tmp_path, capsys):
    rows = [json.loads(l) for l in dataset.read_text().splitlines()]
    rows[0]["gold_sql"] = "SELECT 1"
    bad = tmp_path / "bad.jsonl"
    bad.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
    assert main(["validate", "--dataset", str(bad), "--db-dir", str(mini.db_dir)]) == 3
    assert "VIOLATION" in capsys.readouterr().out


def test_stats_table_and_json(dataset, capsys):
    assert main(["stats", "--dataset", str(dataset)]) == 0
    text = capsys.readouterr().out
    assert "Ambiguous SELECT Column" in text and "Total" in text
    assert main(["stats", "--dataset", str(dataset), "--json"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data["total"] == sum(data["counts"].values())


def test_bench_commands(dataset, mini, tmp_path):
    cls_out, csv_out, sql_out = tmp_path / "c.json", tmp_path / "c.csv", tmp_path / "s.json"
    assert main(["bench", "classify", "--dataset", str(dataset), "--db-dir", str(mini.db_dir), "--k", "2",
                 "--out", str(cls_out), "--confusion-csv", str(csv_out), "--jobs", "1"]) == 0
    assert json.loads(cls_out.read_text())["overall"] == 1.0
    assert csv_out.read_text().startswith("gold,")
    assert main(["bench", "sql", "--dataset", str(dataset), "--db-dir", str(mini.db_dir), "--out", str(sql_out)]) == 0
    assert json.loads(sql_out.read_text())["overall"] == 1.0


def test_alpha_command(tmp_path, capsys):
    p = tmp_path / "r.csv"
    p.write_text("unit_id,rater_id,score\n1,a,3\n1,b,3\n2,a,5\n2,b,5\n")
    assert main(["alpha", "--ratings", str(p)]) == 0
    assert capsys.readouterr().out.strip() == "1.000000"


def test_input_errors_exit_2(tmp_path, mini):
    assert main(["stats", "--dataset", str(tmp_path / "missing.jsonl")]) == 2
    assert main(["alpha", "--ratings", str(tmp_path / "missing.csv")]) == 2
    assert main(["generate", "--catalog", str(mini.catalog), "--examples", str(mini.examples), "--db-dir",
                 str(tmp_path), "--out", str(tmp_path / "o.jsonl"), "--quota", "bogus"]) == 2


def test_generate_nothing_exits_3(mini, tmp_path):
    code = main(["generate", "--catalog", str(mini.catalog), "--examples", str(mini.examples), "--db-dir",
                 str(mini.db_dir), "--out", str(tmp_path / "o.jsonl"), "--categories", "answerable",
                 "--quota", "answerable=0"])
    assert code == 3


def test_live_without_env_exits_4(dataset, mini, monkeypatch):
    monkeypatch.delenv("PRACTIQ_LLM_ENDPOINT", raising=False)
    code = main(["bench", "sql", "--dataset", str(dataset), "--db-dir", str(mini.db_dir), "--provider", "live"])
    assert code == 4


def test_minicorpus_command(tmp_path, capsys):
    assert main(["minicorpus", "--dest", str(tmp_path / "mc")]) == 0
    paths = json.loads(capsys.readouterr().out)
    from pathlib import Path

    assert Path(paths["catalog"]).exists() and Path(paths["db_dir"]).is_dir()
