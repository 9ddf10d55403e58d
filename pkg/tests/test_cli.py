"""Command-line interface and exit codes."""

import json

import numpy as np
import pytest

from convexify import cli, verification
from convexify.config import RunConfig
from convexify.io import read_tensor


@pytest.fixture()
def tiny(tmp_path):
    cfg = RunConfig(n_x=9, n_k=11, N=3, max_iter=3, eta=1e-4, eps=1e-3, output_dir=str(tmp_path / "out"))
    path = tmp_path / "cfg.json"
    cfg.save(path)
    return tmp_path, str(path)


def test_pipeline_commands(tiny, capsys):
    tmp, cfg = tiny
    assert cli.main(["gen-data", "--config", cfg]) == 0
    data = tmp / "out" / "data"
    assert (data / "f.bin").exists() and (data / "c_true.bin").exists()
    assert cli.main(["init", "--config", cfg]) == 0
    assert read_tensor(tmp / "out" / "V0.bin").shape == (3, 9, 9, 9)
    assert cli.main(["reconstruct", "--config", cfg]) == 0
    out = tmp / "out"
    assert read_tensor(out / "c.bin").shape == (9, 9, 9)
    m = json.loads((out / "metrics.json").read_text())
    assert "relative_error_max_c" in m
    assert len((out / "trace.csv").read_text().splitlines()) == 4
    assert json.loads((out / "params.json").read_text())["n_x"] == 9
    assert "max c" in capsys.readouterr().out


def test_seed_and_out_override(tiny):
    tmp, cfg = tiny
    assert cli.main(["gen-data", "--config", cfg, "--seed", "3", "--out", str(tmp / "o2")]) == 0
    meta = json.loads((tmp / "o2" / "data" / "meta.json").read_text())
    assert meta["seed"] == 3


def test_reconstruct_without_data_is_config_error(tiny):
    tmp, cfg = tiny
    assert cli.main(["reconstruct", "--config", cfg]) == 2


def test_bad_config_exit_code(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps({"n_x": 2}))
    assert cli.main(["init", "--config", str(p)]) == 2
    p.write_text(json.dumps({"unknown": 1}))
    assert cli.main(["init", "--config", str(p)]) == 2
    assert cli.main(["init", "--config", str(tmp_path / "missing.json")]) == 2


def test_numerical_failure_exit_code(tiny):
    tmp, cfg = tiny
    assert cli.main(["gen-data", "--config", cfg]) == 0
    d = json.loads(open(cfg).read())
    d["lam"] = 800.0  # the weight overflows
    p = tmp / "overflow.json"
    p.write_text(json.dumps(d))
    assert cli.main(["reconstruct", "--config", str(p), "--out", d["output_dir"]]) == 3


def test_verify_exit_codes(monkeypatch, capsys):
    assert cli.main(["verify", "basis"]) == 0
    assert "[PASS]" in capsys.readouterr().out
    monkeypatch.setitem(verification.SUITES, "basis",
                        lambda: [verification.Check("forced", 1.0, 0.5, False)])
    assert cli.main(["verify", "basis"]) == 1
    assert "[FAIL] forced" in capsys.readouterr().out


def test_noise_sweep_and_ablate(tiny, capsys):
    tmp, cfg = tiny
    assert cli.main(["noise-sweep", "--config", cfg, "--deltas", "0.05,0.1"]) == 0
    rows = (tmp / "out" / "noise_sweep.csv").read_text().splitlines()
    assert rows[0].startswith("delta") and len(rows) == 3
    assert cli.main(["ablate", "--config", cfg]) == 0
    summary = json.loads((tmp / "out" / "ablation.json").read_text())
    assert set(summary) == {"lambda=1.1", "lambda=0"}
    assert (tmp / "out" / "lambda0" / "c.bin").exists()


def test_empty_delta_list_is_config_error(tiny):
    _, cfg = tiny
    assert cli.main(["noise-sweep", "--config", cfg, "--deltas", ","]) == 2
