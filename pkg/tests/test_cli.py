import csv
import io
import json

import numpy as np
import pytest

from brl.cli import main
from brl.config import ConfigError, ExperimentConfig
from brl.constructions import random_mdp
from brl.mdp import save_mdp

BASE = {
    "mdp": {"generator": "random", "num_states": 3, "num_actions": 2, "gamma": 0.8, "seed": 1},
    "q_class": {"type": "perturbed", "size": 6, "scale": 0.5, "seed": 2},
    "algorithms": ["msbo"],
    "n": 300,
    "seeds": [0, 1],
    "t_max": 40,
}


def _write(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def _rows(path):
    return list(csv.DictReader(open(path)))


def test_no_command_is_usage_error(capsys):
    assert main([]) == 2


def test_unknown_flag_is_usage_error():
    with pytest.raises(SystemExit) as exc:
        main(["chain", "--length", "2", "--gamma", "0.5", "--bogus"])
    assert exc.value.code == 2


def test_chain_rows(tmp_path):
    out = tmp_path / "chain.csv"
    assert main(["chain", "--length", "2", "--gamma", "0.5", "--out", str(out)]) == 0
    rows = list(csv.reader(open(out)))
    assert rows[0] == ["t", "C_t_computed", "C_t_formula"]
    assert [(int(r[0]), float(r[1]), float(r[2])) for r in rows[1:4]] == [(0, 2, 2), (1, 4, 4), (2, 4, 4)]
    assert rows[4][0] == "c_eff" and float(rows[4][1]) == pytest.approx(1.0, abs=1e-12)
    assert rows[5][0] == "c_inf" and float(rows[5][1]) == pytest.approx(1.0, abs=1e-12)


def test_chain_header_stable_and_json(tmp_path, capsys):
    main(["chain", "--length", "5", "--gamma", "0.9"])
    first = capsys.readouterr().out
    main(["chain", "--length", "5", "--gamma", "0.9"])
    assert capsys.readouterr().out == first
    assert main(["chain", "--length", "3", "--gamma", "0.7", "--format", "json"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["match"] and len(report["rows"]) == 4


@pytest.mark.parametrize("args", [["--length", "0", "--gamma", "0.5"], ["--length", "2", "--gamma", "1.0"]])
def test_chain_invalid_arguments(args):
    assert main(["chain", *args]) == 2


def test_verify_writes_report(tmp_path):
    out = tmp_path / "v.json"
    assert main(["verify", "telescoping", "--seed", "7", "--out", str(out)]) == 0
    report = json.loads(out.read_text())
    assert report["all_passed"] and report["suite"] == "telescoping"
    for check in report["checks"]:
        assert {"check_name", "status", "measured", "threshold"} <= set(check)
        assert check["status"] == "pass"


def test_verify_suite_flag_and_unknown(tmp_path):
    out = tmp_path / "v.json"
    assert main(["verify", "--suite", "span", "--out", str(out)]) == 0
    assert json.loads(out.read_text())["suite"] == "span"
    assert main(["verify", "nonsense"]) == 2


def test_verify_lowrank_seed3(tmp_path):
    out = tmp_path / "v.json"
    assert main(["verify", "lowrank", "--seed", "3", "--out", str(out)]) == 0
    checks = json.loads(out.read_text())["checks"]
    eps = [c["measured"] for c in checks if "eps_w" in c["check_name"]]
    assert eps and max(eps) <= 1e-8


def test_fqi_gap_output(tmp_path):
    out = tmp_path / "g.csv"
    assert main(["fqi-gap", "--iters", "20", "--out", str(out)]) == 0
    rows = _rows(out)
    assert len(rows) == 21
    assert min(float(r["bellman_error"]) for r in rows[1:]) >= 0.01


def test_run_two_seeds_two_rows_and_determinism(tmp_path):
    path = _write(tmp_path, BASE)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["run", "--config", path, "--out", str(a)]) == 0
    assert main(["run", "--config", path, "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    rows = _rows(a)
    assert [r["seed"] for r in rows] == ["0", "1"]
    assert all(r["algorithm"] == "msbo" for r in rows)
    assert float(rows[0]["eps_stat"]) > 0


def test_run_rows_recomputable_from_seed(tmp_path):
    one = dict(BASE, seeds=[1])
    path_all, path_one = _write(tmp_path, BASE), _write(tmp_path, one, "one.csv.json")
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    main(["run", "--config", path_all, "--out", str(a)])
    main(["run", "--config", path_one, "--out", str(b)])
    assert _rows(a)[1] == _rows(b)[0]


def test_run_population_mode(tmp_path):
    cfg = dict(BASE, mode="population", algorithms=["fqi", "msbo", "mabo"], seeds=[0])
    out = tmp_path / "p.csv"
    assert main(["run", "--config", _write(tmp_path, cfg), "--out", str(out)]) == 0
    rows = _rows(out)
    assert len(rows) == 3
    for r in rows:
        assert float(r["eps_stat"]) == 0.0 and r["n"] == ""
        assert float(r["suboptimality"]) <= float(r["thm5_rhs"]) + 1e-9


def test_run_json_and_append(tmp_path):
    cfg = dict(BASE, output={"path": "out.jsonl", "format": "json", "append": True})
    path = _write(tmp_path, cfg)
    assert main(["run", "--config", path]) == 0
    assert main(["run", "--config", path]) == 0
    lines = (tmp_path / "out.jsonl").read_text().splitlines()
    assert len(lines) == 4 and json.loads(lines[0])["seed"] == 0


def test_run_mdp_file_relative_to_config(tmp_path):
    sub = tmp_path / "cfgs"
    sub.mkdir()
    save_mdp(random_mdp(3, 2, 0.8, seed=5), sub / "m.json")
    cfg = dict(BASE, mdp={"file": "m.json"}, seeds=[0])
    out = tmp_path / "r.csv"
    assert main(["run", "--config", _write(sub, cfg), "--out", str(out)]) == 0
    assert len(_rows(out)) == 1


def test_run_config_errors_have_field_paths(tmp_path, capsys):
    cfg = dict(BASE, n=0, algorithms=["sarsa"])
    assert main(["run", "--config", _write(tmp_path, cfg)]) == 2
    err = capsys.readouterr().err
    assert "n: 0 is less than the minimum of 1" in err
    assert "algorithms.0:" in err


def test_run_missing_files(tmp_path, capsys):
    assert main(["run", "--config", str(tmp_path / "absent.json")]) == 2
    cfg = dict(BASE, mdp={"file": "nope.json"})
    assert main(["run", "--config", _write(tmp_path, cfg)]) == 2
    assert "mdp.file: file not found" in capsys.readouterr().err


def test_config_validation_direct():
    with pytest.raises(ConfigError) as exc:
        ExperimentConfig.from_dict(dict(BASE, delta=1.5, extra_key=1))
    text = " ".join(exc.value.errors)
    assert "delta:" in text and "extra_key" in text
    cfg = ExperimentConfig.from_dict(BASE)
    assert cfg.mode == "empirical" and cfg.algorithms == ["msbo"]


def test_state_action_cap_env(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("BRL_MAX_STATE_ACTIONS", "4")
    assert main(["run", "--config", _write(tmp_path, BASE)]) == 2
    assert "BRL_MAX_STATE_ACTIONS" in capsys.readouterr().err


def test_occupancy_mu_builds_full_support():
    cfg = ExperimentConfig.from_dict(dict(BASE, mu={"type": "occupancy", "policy": "optimal"}))
    mdp = cfg.build_mdp()
    mu = cfg.build_mu(mdp)
    assert np.all(mu.mu > 0) and mu.mu.sum() == pytest.approx(1.0)
