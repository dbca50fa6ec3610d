import json

import pytest

from snaplab.cli import main


def write(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


def test_theory_commands(tmp_path):
    out = str(tmp_path / "o")
    assert main(["theory", "queries", "--config", write(tmp_path / "q.json", {"alpha": 0.2, "beta": 0.2, "epsilon": 0.001}), "--out", out]) == 0
    assert json.loads((tmp_path / "o" / "queries.json").read_text())["queries"] == 54
    pair = {"mu0": -1.0, "sigma0": 1.0, "mu1": 1.0, "sigma1": 1.0}
    assert main(["theory", "threshold", "--config", write(tmp_path / "t.json", pair), "--out", out]) == 0
    assert json.loads((tmp_path / "o" / "threshold.json").read_text())["T"] == 0.0
    params = {"t0": 0.01, "t1": 0.035, "pi_v": 0.9, "mu": -1.8, "sigma": 0.9}
    assert main(["theory", "pstar", "--config", write(tmp_path / "p.json", params), "--out", out]) == 0
    assert main(["theory", "curves", "--config", write(tmp_path / "c.json", {**params, "p_max": 0.002}), "--out", out]) == 0
    lines = (tmp_path / "o" / "curves.csv").read_text().splitlines()
    assert lines[0] == "world,t,p,mu_tilde,sigma_tilde_sq" and len(lines) == 1 + 2 * 3


def test_errors_exit_nonzero(tmp_path, capsys):
    assert main(["theory", "pstar", "--out", str(tmp_path)]) == 2
    assert "missing config key" in capsys.readouterr().err
    bad = {"alpha": 0.6, "beta": 0.1, "epsilon": 0.1}
    assert main(["theory", "queries", "--config", write(tmp_path / "q.json", bad), "--out", str(tmp_path)]) == 2
    assert main(["train", "--dataset", str(tmp_path / "missing.csv"), "--out", str(tmp_path)]) == 2


def test_synth_train_poison(tmp_path):
    out = tmp_path / "s"
    assert main(["synth", "--samples", "3000", "--seed", "1", "--out", str(out)]) == 0
    csv_path = str(out / "samples.csv")
    assert main(["train", "--dataset", csv_path, "--out", str(tmp_path / "m"), "--config", write(tmp_path / "tc.json", {"train": {"epochs": 2}})]) == 0
    assert (tmp_path / "m" / "model.json").exists()
    pc = {"poison": {"target_property": [{"feature": "segment", "value": "P"}], "count": 5}, "n": 1000}
    assert main(["poison", "--dataset", csv_path, "--config", write(tmp_path / "p.json", pc), "--out", str(tmp_path / "p")]) == 0
    rows = (tmp_path / "p" / "poison.csv").read_text().splitlines()
    assert len(rows) == 6 and all(r.startswith("P,") for r in rows[1:])


ATTACK = {
    "attack": {
        "f": [{"feature": "segment", "value": "P"}], "t0": 0.01, "t1": 0.05, "n": 3000, "k": 2,
        "query_size": 200, "shadow_query_size": 400, "poison": {"rate": 0.02},
        "train": {"epochs": 5, "learning_rate": 0.01},
    },
    "synth": {"census_like": {"property_share": 0.1}, "samples": 40000},
}


@pytest.mark.parametrize("mode", ["distinguish", "label-only"])
def test_attack_modes(tmp_path, mode):
    out = tmp_path / mode
    assert main(["attack", mode, "--config", write(tmp_path / "a.json", ATTACK), "--seed", "4", "--out", str(out), "--dump-logits"]) == 0
    res = json.loads((out / "result.json").read_text())
    assert res["outcome"]["guess"] in (0, 1) and res["root_seed"] == 4
    assert (out / "logits.csv").exists() == (mode == "distinguish")


def test_attack_exist_requires_count(tmp_path):
    cfg = json.loads(json.dumps(ATTACK))
    cfg["attack"]["t0"] = 0.0
    assert main(["attack", "exist", "--config", write(tmp_path / "a.json", cfg), "--out", str(tmp_path)]) == 2
    cfg["attack"]["poison"] = {"count": 8}
    assert main(["attack", "exist", "--config", write(tmp_path / "a.json", cfg), "--out", str(tmp_path)]) == 0


def test_attack_estimate(tmp_path):
    cfg = json.loads(json.dumps(ATTACK))
    cfg["attack"].update(t0=0.0, t1=0.5)
    cfg.update(target_t=0.05, estimate={"max_iter": 2}, synth={"census_like": {"property_share": 0.5}, "samples": 40000})
    assert main(["attack", "estimate", "--config", write(tmp_path / "a.json", cfg), "--out", str(tmp_path)]) == 0
    res = json.loads((tmp_path / "result.json").read_text())
    assert len(res["iterations"]) <= 2 and res["shadow_models"] == 2 * len(res["iterations"])


def test_experiment_run_and_plot(tmp_path, capsys):
    plan = {"plan": {"attack": ATTACK["attack"], "axis": "k", "values": [1], "trials": 1, "targets_per_world": 1, "query_sets_per_target": 2},
            "synth": ATTACK["synth"]}
    out = tmp_path / "runs"
    assert main(["experiment", "run", "--config", write(tmp_path / "e.json", plan), "--out", str(out)]) == 0
    run_dir = capsys.readouterr().out.strip().splitlines()[-1]
    assert main(["experiment", "plot", "--run", run_dir, "--out", str(tmp_path / "plots"), "--kind", "accuracy_curve"]) == 0
    assert (tmp_path / "plots" / "accuracy_curve.csv").read_text().startswith("axis_value,accuracy")
