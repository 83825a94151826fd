import json

import pytest

from nlsctl import __version__
from nlsctl.cli import main
from nlsctl.config import (ConfigError, ExperimentConfig, build_state, load_config, standard_set)


def write(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


def run(tmp_path, *argv, config=None):
    args = list(argv) + ["--out", str(tmp_path / "out")]
    if config is not None:
        args += ["--config", write(tmp_path / "cfg.json", config)]
    return main(args)


def test_standard_set_has_d_vectors():
    assert standard_set(2) == [[1, 0], [1, 1]]
    assert standard_set(3) == [[1, 0, 0], [0, 1, 0], [1, 1, 1]]


def test_saturate_default_set(tmp_path, capsys):
    assert run(tmp_path, "saturate", config={"saturate": {"cutoff": 2.0}}) == 0
    report = json.loads((tmp_path / "out" / "saturation.json").read_text())
    assert report["is_saturating"] and report["unreachable"] == []
    assert len(report["levels"]) == 12


def test_saturate_orthogonal_pair(tmp_path, capsys):
    fset = write(tmp_path / "I.json", {"d": 2, "members": [[1, 0], [0, 1]]})
    assert run(tmp_path, "saturate", "--freqset", fset, "--cutoff", "2") == 1
    out = json.loads(capsys.readouterr().out)
    assert out["witness"]["kind"] == "partition"


@pytest.mark.parametrize("argv,config", [
    (["saturate"], {"saturate": {"freqset": {"d": 2, "members": []}}}),
    (["saturate"], {"saturate": {"freqset": {"d": 2, "members": [[1]]}}}),
    (["bogus"], None),
    (["saturate", "--seed", "x"], None),
])
def test_usage_errors_exit_2(tmp_path, capsys, argv, config):
    assert run(tmp_path, *argv, config=config) == 2


def test_unreadable_config_exits_2(tmp_path, capsys):
    assert main(["saturate", "--config", str(tmp_path / "missing.json")]) == 2


def test_synthesize_constant_phase(tmp_path, capsys):
    theta = write(tmp_path / "theta.json", {"d": 1, "constant": 0.4, "terms": []})
    code = run(tmp_path, "synthesize", "--theta", theta, "--eps", "1e-6",
               config={"synthesize": {"solver": {"N": 32}}})
    assert code == 0
    out = json.loads(capsys.readouterr().out)
    assert out["error"] < 1e-6 and out["segments"] == 1
    names = {p.name for p in (tmp_path / "out").iterdir()}
    assert names == {"schedule.json", "errors.csv", "plan.txt", "manifest.json"}


def test_synthesize_json_out_names_schedule(tmp_path, capsys):
    target = tmp_path / "res" / "my_schedule.json"
    code = main(["synthesize", "--out", str(target), "--config",
                 write(tmp_path / "c.json", {"synthesize": {"solver": {"N": 64}, "eps": 5e-2}})])
    assert code == 0
    assert target.exists() and (tmp_path / "res" / "errors.csv").exists()


def test_synthesize_non_saturating_exits_1(tmp_path, capsys):
    cfg = {"synthesize": {"freqset": {"d": 2, "members": [[1, 0], [0, 1]]},
                          "theta": {"d": 2, "constant": 0.0,
                                    "terms": [{"k": [1, 1], "cos": 0.3, "sin": 0.0}]},
                          "psi0": {"plane_wave": [0, 0]}, "solver": {"N": 8}}}
    assert run(tmp_path, "synthesize", config=cfg) == 1


def test_limit_flags_large_deltas(tmp_path, capsys):
    cfg = {"limit": {"deltas": [1e-1, 1e-2], "steps_per_delta": 16,
                     "solver": {"N": 32, "B_max": 1.05}}}
    assert run(tmp_path, "limit", config=cfg) == 0
    rows = (tmp_path / "out" / "limit.csv").read_text().splitlines()
    assert len(rows) == 3
    summary = json.loads((tmp_path / "out" / "limit.json").read_text())
    assert summary["flagged"]


def test_growth_zero_noise(tmp_path, capsys):
    cfg = {"growth": {"m_traj": 3, "n_units": 2, "M_levels": [5.0],
                      "noise": {"amplitudes": [[0.0]] * 3, "cells": 5},
                      "solver": {"kappa": 0.0}}}
    assert run(tmp_path, "growth", "--workers", "2", config=cfg) == 0
    lines = (tmp_path / "out" / "ensemble.csv").read_text().splitlines()[1:]
    assert all(line.split(",")[2] == "1.0" for line in lines)


def test_evolve_schedule_file(tmp_path, capsys):
    sched = write(tmp_path / "s.json", [{"dt": 0.5, "u": [0.0, 0.2, 0.1]}])
    assert run(tmp_path, "evolve", "--schedule", sched) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["status"] == "completed" and abs(out["final_l2"] - 1) < 1e-10


def test_evolve_bad_schedule_exits_2(tmp_path, capsys):
    sched = write(tmp_path / "s.json", [{"dt": -1, "u": [0.0, 0.0, 0.0]}])
    assert run(tmp_path, "evolve", "--schedule", sched) == 2


def test_manifest_reproduces_run(tmp_path, capsys):
    assert run(tmp_path, "evolve", "--seed", "3") == 0
    manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert manifest["version"] == __version__ and manifest["seed"] == 3
    first = (tmp_path / "out" / "trajectory.csv").read_bytes()
    cfg = tmp_path / "replay.json"
    cfg.write_text(json.dumps(manifest["config"]))
    assert main(["evolve", "--config", str(cfg)]) == 0
    assert (tmp_path / "out" / "trajectory.csv").read_bytes() == first


def test_precedence_flags_over_env_over_file(tmp_path):
    path = write(tmp_path / "c.json", {"seed": 1, "out": "from_file", "workers": 1})
    env = {"NLSCTL_SEED": "2", "NLSCTL_OUT": "from_env"}
    cfg = load_config("growth", path, env=env)
    assert (cfg.seed, cfg.out, cfg.workers) == (2, "from_env", 1)
    cfg = load_config("growth", path, seed=5, env=env)
    assert cfg.seed == 5 and cfg.out == "from_env"
    assert load_config("growth", path, env={}).seed == 1
    with pytest.raises(ConfigError):
        load_config("growth", path, env={"NLSCTL_WORKERS": "many"})
    with pytest.raises(ConfigError):
        load_config("growth", path, workers=0, env={})


def test_config_round_trip():
    cfg = load_config("synthesize", None, seed=4, env={})
    again = ExperimentConfig.from_dict(json.loads(cfg.to_json()))
    assert again == cfg


def test_solver_block_merges_key_by_key():
    cfg = ExperimentConfig.from_dict({"growth": {"solver": {"N": 8}}}, "growth")
    assert cfg.block["solver"]["N"] == 8 and cfg.block["solver"]["R"] == 50.0


def test_state_builders():
    assert build_state({"plane_wave": [1]}, 1, 4).l2_norm() == pytest.approx(1.0)
    f = build_state({"modes": [[0, 1.0, 0.0], [1, 1.0, 0.0]], "normalize": True}, 1, 4)
    assert f.l2_norm() == pytest.approx(1.0)
    with pytest.raises(ConfigError):
        build_state({"modes": [[0]]}, 1, 4)
