import json
import os

import pytest

from qaccel.cli import main
from qaccel.sql import WorkloadEntry, write_workload_log
from qaccel.synth import generate_store, write_csv_dir

Q13 = """select c_count, count(*) as custdist
         from (select c_custkey, count(o_orderkey) as c_count
               from customer left join orders on c_custkey = o_custkey
               and o_comment not like '%special%requests%'
               group by c_custkey) as t
         group by c_count"""

Q_SIMPLE = "select count(*) as n from orders"

Q_CDF = ("select l_returnflag, sum(l_quantity) as s from lineitem "
         "where l_shipdate >= date '1994-01-01' "
         "and l_shipdate <= date '1996-01-01' group by l_returnflag")


@pytest.fixture(scope="module")
def project(tmp_path_factory):
    root = tmp_path_factory.mktemp("cliproj")
    data_dir = root / "data"
    store = generate_store(seed=77, customers=80, orders=800, lineitems=1600)
    write_csv_dir(store, data_dir)
    write_workload_log(root / "workload.jsonl", [
        WorkloadEntry("q13", Q13),
        WorkloadEntry("qsimple", Q_SIMPLE),
        WorkloadEntry("qcdf", Q_CDF),
    ])
    (root / "run.toml").write_text(f"""
[data]
catalog = "{data_dir}/catalog.json"
data_dir = "{data_dir}"
workload = "{root}/workload.jsonl"

[run]
out_dir = "{root}/out"
seed = 3

[planner]
budget = "10%"
adapter = "oracle"
strategy = "model"
cost_mode = "truth"

[models]
bootstrap_instances = 12
max_epochs = 4
""")
    return root


def run_cli(project, *argv):
    return main(["--config", str(project / "run.toml"), *argv])


def test_cli_missing_config_is_exit_2(capsys):
    assert main(["--config", "/nonexistent.toml", "load"]) == 2


def test_cli_bad_config_value(project, tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text('[planner]\nstrategy = "wild-guess"\n')
    assert main(["--config", str(bad), "load"]) == 2


def test_cli_load(project, capsys):
    assert run_cli(project, "load") == 0
    out = capsys.readouterr().out
    assert "orders: 800 rows" in out
    assert os.path.exists(project / "out" / "catalog_with_stats.json")


def test_cli_plan_offline_and_run(project, capsys):
    assert run_cli(project, "plan-offline") == 0
    manifest = json.loads((project / "out" / "manifest.json").read_text())
    assert manifest["budget_bytes"] > 0
    assert run_cli(project, "run", "--sql", Q_SIMPLE) == 0
    out = capsys.readouterr().out
    assert "800" in out  # the count(*) result


def test_cli_run_no_match_single_option(project, capsys):
    assert run_cli(project, "plan-offline") == 0
    capsys.readouterr()
    sql = "select c_name from customer where c_custkey = 7"
    assert run_cli(project, "run", "--sql", sql) == 0
    out = capsys.readouterr().out
    doc = json.loads(out[out.index("{"):])
    assert doc["options_considered"] == 1
    assert doc["fallback"] is None


def test_cli_bench_verify(project, capsys):
    assert run_cli(project, "plan-offline") == 0
    assert run_cli(project, "bench", "--verify") == 0
    out = capsys.readouterr().out
    assert "geomean speedup" in out
    assert "MISMATCH" not in out


def test_cli_explain(project, capsys):
    assert run_cli(project, "explain", "--sql", Q13, "--matches") == 0
    out = capsys.readouterr().out
    assert "saturation:" in out
    assert "options considered" in out


def test_cli_explain_egraph_dump(project, capsys):
    assert run_cli(project, "explain", "--sql", Q_SIMPLE, "--egraph") == 0
    out = capsys.readouterr().out
    assert "class" in out and "GroupByAgg" in out


def test_cli_rebuild(project, capsys):
    assert run_cli(project, "plan-offline") == 0
    assert run_cli(project, "rebuild") == 0
    out = capsys.readouterr().out
    assert "rebuilt" in out


def test_cli_bootstrap_and_train(project, capsys):
    assert run_cli(project, "bootstrap") == 0
    out = capsys.readouterr().out
    assert "labeled" in out
    datasets = os.listdir(project / "out" / "datasets")
    assert {"domain_negation.csv", "cdf.csv", "ordered_index.csv",
            "known_groupby.csv"} <= set(datasets)
    assert run_cli(project, "train") == 0
    out = capsys.readouterr().out
    assert "q-error" in out
    models = os.listdir(project / "out" / "models")
    assert any(m.endswith(".json") for m in models)


def test_cli_zero_budget_empty_manifest(project, capsys, monkeypatch):
    monkeypatch.setenv("QACCEL_PLANNER_BUDGET", "0")
    assert run_cli(project, "plan-offline") == 0
    manifest = json.loads((project / "out" / "manifest.json").read_text())
    assert manifest["instances"] == []
    monkeypatch.delenv("QACCEL_PLANNER_BUDGET")
    run_cli(project, "plan-offline")  # restore states for later tests


def test_env_override(project, monkeypatch):
    from qaccel.config import load_config
    monkeypatch.setenv("QACCEL_PLANNER_BUDGET", "12345")
    cfg = load_config(str(project / "run.toml"))
    assert cfg.budget == "12345"
    assert cfg.budget_bytes(10**6) == 12345.0
