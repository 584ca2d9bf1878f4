import csv
import json
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from sba_lab.cli import main
from sba_lab.harness import (
    ConfigError,
    ExperimentConfig,
    aggregate,
    child_seed,
    emit_plot_data,
    load_config,
    parse_levers,
    read_curve_csv,
    reproduce_fig4,
    run_experiment,
)
from sba_lab.learner import TrainConfig, TrainingCurve
from sba_lab.populations import load_population


def small_config(**kw):
    return ExperimentConfig(train=TrainConfig(epochs=3), num_seeds=3, root_seed=11, **kw)


def tree_bytes(root):
    root = Path(root)
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_child_seed_stable():
    assert child_seed(0, 0) == child_seed(0, 0)
    assert len({child_seed(0, i) for i in range(100)}) == 100
    assert child_seed(1, 0) != child_seed(0, 0)


def test_child_seed_independent_of_sweep_size():
    a = run_experiment(replace(small_config(), num_seeds=2), workers=1)
    b = run_experiment(small_config(), workers=1)
    assert a.seeds == b.seeds[:2]
    assert a.curves[1].train_returns == b.curves[1].train_returns


@pytest.mark.parametrize("spec,expected", [
    ("0-4", [0, 1, 2, 3, 4]),
    ("0,2,5-7", [0, 2, 5, 6, 7]),
    ([3, 1], [3, 1]),
    ("9", [9]),
])
def test_parse_levers(spec, expected):
    assert parse_levers(spec) == expected


def test_parse_levers_bad():
    with pytest.raises(ConfigError):
        parse_levers("a-b")


def test_config_roundtrip(tmp_path):
    cfg = small_config(sba=True)
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg.to_dict()))
    back = load_config(path)
    assert back.to_dict() == cfg.to_dict()


def test_config_errors(tmp_path):
    with pytest.raises(ConfigError, match="schema_version"):
        ExperimentConfig.from_dict({"schema_version": 2})
    with pytest.raises(ConfigError, match="unknown"):
        ExperimentConfig.from_dict({"schema_version": 1, "bogus": 1})
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "missing.json")
    with pytest.raises(ConfigError, match="population file"):
        ExperimentConfig.from_dict({"schema_version": 1, "train_pop": {"file": "nope.json"}}, str(tmp_path))
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"schema_version": 1, "train": {"epochs": 0}})


def test_population_from_file(tmp_path):
    from sba_lab.lever_game import make_deterministic_population
    from sba_lab.populations import save_population

    save_population(make_deterministic_population([2, 3]), tmp_path / "p.json")
    cfg = ExperimentConfig.from_dict({"schema_version": 1, "train_pop": {"file": "p.json"}}, str(tmp_path))
    assert [m.constant_action() for m in cfg.population("train_pop")] == [2, 3]


def test_sem_single_seed():
    c = TrainingCurve(0)
    c.append(0, 1.0, 0.5)
    agg = aggregate([c])
    assert agg.sem_train[0] == 0.0 and agg.sem_eval[0] == 0.0


def test_sem_formula():
    curves = []
    for k, v in enumerate([1.0, 2.0, 4.0]):
        c = TrainingCurve(k)
        c.append(0, v, -v)
        curves.append(c)
    agg = aggregate(curves)
    assert agg.mean_train[0] == pytest.approx(7 / 3)
    assert agg.sem_train[0] == pytest.approx(np.std([1, 2, 4], ddof=1) / np.sqrt(3))


def test_experiment_outputs(tmp_path):
    res = run_experiment(small_config(), tmp_path, workers=1)
    names = sorted(p.name for p in tmp_path.iterdir())
    assert names == ["aggregate.csv", "config.json", "policies.json", "seed_000.csv", "seed_001.csv", "seed_002.csv"]
    curves = [read_curve_csv(tmp_path / f"seed_{i:03d}.csv") for i in range(3)]
    agg = aggregate(curves)
    with open(tmp_path / "aggregate.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 3
    for k, row in enumerate(rows):
        assert float(row["mean_train"]) == pytest.approx(agg.mean_train[k], abs=1e-12)
        assert float(row["sem_eval"]) == pytest.approx(agg.sem_eval[k], abs=1e-12)
    pols = load_population(tmp_path / "policies.json")
    assert [p.name for p in pols] == ["seed_000", "seed_001", "seed_002"]
    assert np.array_equal(pols.members[0].table, res.policies[0].table)
    cfg = json.loads((tmp_path / "config.json").read_text())
    assert cfg["child_seeds"] == res.seeds


def test_workers_do_not_change_results(tmp_path):
    run_experiment(small_config(), tmp_path / "a", workers=1)
    run_experiment(small_config(), tmp_path / "b", workers=2)
    assert tree_bytes(tmp_path / "a") == tree_bytes(tmp_path / "b")


def test_emit_plot_data(tmp_path):
    curves = {}
    for name, shift in (("br", 0.0), ("sba", 1.0)):
        cs = []
        for s in range(2):
            c = TrainingCurve(s)
            c.append(0, shift + s, shift - s)
            c.append(1, shift + 2 * s, shift)
            cs.append(c)
        curves[name] = aggregate(cs)
    emit_plot_data(curves, tmp_path / "plot.csv")
    with open(tmp_path / "plot.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 8
    final = {r["series"]: float(r["mean"]) for r in rows if r["epoch"] == "1"}
    assert final == {"br_train": 1.0, "br_eval": 0.0, "sba_train": 2.0, "sba_eval": 1.0}


def test_reproduce_fig4_layout(tmp_path):
    reproduce_fig4(small_config(), 5, tmp_path, workers=1)
    assert (tmp_path / "fig4_plot_data.csv").exists()
    assert json.loads((tmp_path / "br" / "config.json").read_text())["sba"] is False
    assert json.loads((tmp_path / "sba" / "config.json").read_text())["sba"] is True


def write_config(tmp_path, **kw):
    doc = small_config(**kw).to_dict()
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(doc))
    return str(path)


def test_cli_train(tmp_path, capsys):
    cfg = write_config(tmp_path)
    assert main(["train", "--config", cfg, "--out", str(tmp_path / "run"), "--format", "json", "--workers", "1"]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["num_seeds"] == 3
    assert (tmp_path / "run" / "aggregate.csv").exists()


def test_cli_eval(tmp_path, capsys):
    from sba_lab.learner import tabular_br_oracle
    from sba_lab.lever_game import make_deterministic_population, make_env
    from sba_lab.populations import Population, save_population

    env = make_env()
    oracle = tabular_br_oracle(env, make_deterministic_population(range(5)))
    save_population(Population("p", (oracle,)), tmp_path / "p.json")
    assert main(["eval", "--policy", str(tmp_path / "p.json"), "--format", "json"]) == 0
    rows = json.loads(capsys.readouterr().out)
    assert rows[0]["value"] == pytest.approx(0.6, abs=1e-12)


def test_cli_augimp(capsys):
    assert main(["augimp", "--levers", "0-9"]) == 0
    out = capsys.readouterr().out
    assert out.strip().splitlines()[-1].startswith("# augimp=0.36")
    assert main(["augimp", "--levers", "0-9", "--identity-group", "--format", "json"]) == 0
    assert json.loads(capsys.readouterr().out)["augimp"] == 0.0


def test_cli_crossplay(capsys):
    assert main(["crossplay", "--levers", "0-2", "--format", "json"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["matrix"] == [[2.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 2.0]]


def test_cli_verify(capsys):
    assert main(["verify", "--trials", "3"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 4 and all(l.startswith("PASS") for l in lines)


def test_cli_sigtest(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    a.write_text("seed,value\n0,1\n1,1\n2,1\n3,1\n4,1\n")
    b.write_text("seed,value\n0,0\n1,0\n2,0\n3,0\n4,0\n")
    assert main(["sigtest", str(a), str(b), "--exact", "--format", "json"]) == 0
    assert json.loads(capsys.readouterr().out)["p_value"] == 0.0625


def test_cli_reproduce(tmp_path, capsys):
    cfg = write_config(tmp_path)
    assert main(["reproduce-fig4", "--config", cfg, "--seed", "3", "--out", str(tmp_path / "f"), "--workers", "1"]) == 0
    assert "sba: final train" in capsys.readouterr().out


def test_cli_exit_codes(tmp_path, capsys):
    assert main(["train", "--no-such-flag"]) == 1
    assert main([]) == 1
    assert main(["sigtest", "missing_a.csv", "missing_b.csv"]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text('{"schema_version": 7}')
    assert main(["train", "--config", str(bad)]) == 2
    assert main(["augimp", "--levers", "0-10"]) == 2
    capsys.readouterr()
