import csv
import json

import pytest

from skillroute.cli import run
from skillroute.config import ConfigError, EngineConfig, load_config, parse_config_text
from skillroute.predictor import PredictorModel
from skillroute.records import parse_dataset


def _err(capsys):
    lines = [ln for ln in capsys.readouterr().err.splitlines() if ln.startswith("{")]
    assert len(lines) == 1
    return json.loads(lines[0])


def _rec(out):
    return json.loads(out.split("\n\n", 1)[0])


def test_select_skills_on_fixture(capsys):
    assert run(["select", "--skills", "numerical calculation", "--budget", "1.0"]) == 0
    out = capsys.readouterr().out
    rec = _rec(out)
    assert rec["cost"] <= 1.0
    assert rec["qualifying_skills"] == ["numerical calculation"]
    assert len(rec["rejected"]) == 3
    assert "Selected " + rec["model_id"] in out


def test_select_paraphrase_resolves(capsys):
    assert run(["select", "--skills", "numerical calculations", "--budget", "1.0"]) == 0
    assert _rec(capsys.readouterr().out)["qualifying_skills"] == ["numerical calculation"]


def test_select_infeasible_exit_2(capsys):
    assert run(["select", "--skills", "numerical calculation", "--budget", "0.0"]) == 2
    err = _err(capsys)
    assert err["error"] == "infeasible" and err["constraint"] == "budget"


def test_tau_out_of_range_exit_1(capsys):
    assert run(["select", "--task", "finqa_numeric", "--budget", "1", "--tau", "1.5"]) == 1
    err = _err(capsys)
    assert err["error"] == "config" and "tau" in err["message"]


def test_unknown_subcommand_exit_1(capsys):
    assert run(["bogus"]) == 1
    captured = capsys.readouterr()
    assert "usage" in captured.err
    assert json.loads(captured.err.strip().splitlines()[-1])["error"] == "usage"


def test_unknown_skill_exit_1(capsys):
    assert run(["select", "--skills", "interpretive dance", "--budget", "5"]) == 1
    assert _err(capsys)["error"] == "validation"


def test_select_needs_budget_outside_pareto(capsys):
    assert run(["select", "--task", "finqa_numeric"]) == 1
    assert run(["select", "--task", "finqa_numeric", "--mode", "pareto"]) == 0


def test_config_precedence(tmp_path):
    cfg_file = tmp_path / "engine.cfg"
    cfg_file.write_text("# engine\ntau = 0.7\nrho = 0.4\nlatency-budget = 900\nweights = 0.5, 0.5, 0\n")
    cfg = load_config(cfg_file, {"tau": "0.9", "budget": None})
    assert cfg.tau == 0.9                 # flag beats file
    assert cfg.rho == 0.4                 # file beats default
    assert cfg.latency_budget == 900.0
    assert cfg.weights == (0.5, 0.5, 0.0)
    assert cfg.kappa == EngineConfig().kappa  # default
    with pytest.raises(ConfigError):
        parse_config_text("nonsense = 3")
    with pytest.raises(ConfigError):
        parse_config_text("tau 0.3")


def test_config_file_through_cli(tmp_path, capsys):
    cfg_file = tmp_path / "engine.cfg"
    cfg_file.write_text("budget = 0.0\n")
    assert run(["select", "--task", "finqa_numeric", "--config", str(cfg_file)]) == 2
    assert run(["select", "--task", "finqa_numeric", "--config", str(cfg_file),
                "--budget", "100"]) == 0


def test_profile_with_mock_critic(tmp_path, capsys):
    triples = tmp_path / "triples.jsonl"
    triples.write_text(json.dumps({
        "task_input": "Revenue rose from 100 to 120. Growth?",
        "reference_solution": "compute (120-100)/100 = 20%",
        "model_output": "I compute 20%", "model_id": "m", "task_id": "t", "instance_id": "1",
    }) + "\n")
    rules = tmp_path / "rules.json"
    rules.write_text(json.dumps({"compute": "numerical calculation", "table": "table extraction"}))
    out = tmp_path / "profiles.jsonl"
    assert run(["profile", "--triples", str(triples), "--out", str(out), "--rulebook", str(rules)]) == 0
    row = json.loads(out.read_text())
    assert row["mentions"] == [{"phrase": "numerical calculation", "status": "demonstrated",
                                "criticality": 1.0}]


def test_profile_live_without_env(tmp_path, capsys, monkeypatch):
    for var in ("CRITIC_ENDPOINT", "CRITIC_MODEL", "CRITIC_API_KEY"):
        monkeypatch.delenv(var, raising=False)
    triples = tmp_path / "t.jsonl"
    triples.write_text("")
    assert run(["profile", "--triples", str(triples), "--out", str(tmp_path / "o"),
                "--critic", "live"]) == 1
    assert "CRITIC_ENDPOINT" in _err(capsys)["message"]


def test_synth_taxonomy_matrices_train(tmp_path, capsys):
    data = tmp_path / "synth"
    assert run(["synth", "--M", "3", "--S", "2", "--T", "3", "--n", "8", "--seed", "1",
                "--out", str(data)]) == 0
    d = parse_dataset(data)
    assert len(d.models) == 3 and len(d.tasks) == 3
    assert json.loads((data / "truth.json").read_text())["seed"] == 1

    tax = tmp_path / "tax.json"
    assert run(["taxonomy", "--dataset", str(data), "--out", str(tax)]) == 0
    mats, factors = tmp_path / "m.json", tmp_path / "f.json"
    assert run(["matrices", "build", "--dataset", str(data), "--taxonomy", str(tax),
                "--out", str(mats), "--factors-out", str(factors), "--k", "2"]) == 0
    m = json.loads(mats.read_text())
    assert set(m) == {"model_ids", "task_ids", "skills", "C", "observed", "R", "c", "latency"}
    assert json.loads(factors.read_text())["k"] == 2

    model = tmp_path / "p.json"
    assert run(["train", "--dataset", str(data), "--out", str(model), "--scheme", "poly2"]) == 0
    p = PredictorModel.from_dict(json.loads(model.read_text()))
    assert p.scheme == "poly2" and len(p.weights) == 2 + 3


def test_subcommands_deterministic(tmp_path, capsys):
    outs = []
    for name in ("a", "b"):
        path = tmp_path / f"{name}.json"
        assert run(["train", "--out", str(path)]) == 0
        outs.append(path.read_bytes())
    assert outs[0] == outs[1]


def test_evaluate(tmp_path, capsys):
    out = tmp_path / "report.json"
    assert run(["evaluate", "--budget", "2", "--out", str(out)]) == 0
    report = json.loads(out.read_text())
    assert len(report["folds"]) == 3
    assert "skill:similarity" in report["summary"]
    assert report["primary_policy"] == "skill:similarity"


def test_frontier(tmp_path, capsys):
    out = tmp_path / "f.csv"
    assert run(["frontier", "--out", str(out)]) == 0
    rows = list(csv.DictReader(out.open()))
    assert [r["model_id"] for r in rows] == ["llama-3.1-8b", "llama-3.3-70b", "qwen-2.5-72b", "gpt-5"]


def test_missing_dataset_dir(tmp_path, capsys):
    assert run(["frontier", "--dataset", str(tmp_path / "nope"), "--out", str(tmp_path / "x")]) == 1
    assert _err(capsys)["error"] == "dataset"
