import json
import shutil
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from nsk import cli
from nsk.grid import Grid, SpectralField, save_snapshot
from nsk.trajio import read_csv, write_csv

SMALL = {
    "grid": {"d": 2, "n": 16, "L": 20.0},
    "params": {"mu": 1.0, "lam": 0.0, "kappa": 1.0},
    "initial": {"amplitude": 1e-3, "width": 1.5},
    "time": {"dt": 0.1, "t_final": 2.0, "n_snapshots": 4, "n_records": 8},
    "norms": [{"component": "a", "s": 0.0, "p": 2.0, "sigma": 1.0},
              {"component": "m", "s": 0.5, "p": 1.5, "sigma": 2.0}],
    "seed": 7,
}


def _cfg(tmp_path, data, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(data))
    return str(p)


def test_norms_on_zero_snapshot(tmp_path):
    g = Grid.cube(2, 16, 20.0)
    snap = tmp_path / "zero.nskf"
    save_snapshot(snap, g, 0.0, {"a": SpectralField.zeros(g), "m1": SpectralField.zeros(g),
                                 "m2": SpectralField.zeros(g)})
    out = tmp_path / "out"
    rc = cli.main(["norms", "--config", _cfg(tmp_path, SMALL), "--snapshot", str(snap), "--out", str(out)])
    assert rc == 0
    _, cols = read_csv(out / "norms.csv")
    assert cols["value"].size == 2 and np.all(cols["value"] == 0)


def test_decay_fit_on_planted_csv(tmp_path):
    t = np.geomspace(1, 100, 30)
    src = tmp_path / "planted.csv"
    write_csv(src, ["t", "a_B0"], zip(t.tolist(), (2.0 * t**-0.75).tolist()))
    out = tmp_path / "out"
    cfg = dict(SMALL, grid={"d": 3, "n": 16, "L": 20.0}, decay={"columns": ["a_B0"]})
    rc = cli.main(["decay-fit", "--config", _cfg(tmp_path, cfg), "--csv", str(src), "--out", str(out)])
    assert rc == 0
    rep = json.loads((out / "decay_fit.json").read_text())
    assert abs(rep["fits"][0]["slope"] + 0.75) <= 1e-12 and rep["pass"]
    # no config needed when the CSV is given; defaults are d = 3, p = 2, so the target is -3/4
    assert cli.main(["decay-fit", "--csv", str(src), "--out", str(tmp_path / "o2")]) == 0
    rep = json.loads((tmp_path / "o2" / "decay_fit.json").read_text())
    assert [f["name"] for f in rep["fits"]] == ["a_B0"] and rep["fits"][0]["target"] == -0.75


def test_decay_fit_wrong_slope_is_a_fail_verdict(tmp_path):
    t = np.geomspace(1, 100, 30)
    src = tmp_path / "flat.csv"
    write_csv(src, ["t", "a_B0"], zip(t.tolist(), (t**-0.1).tolist()))
    cfg = dict(SMALL, grid={"d": 3, "n": 16, "L": 20.0}, decay={"columns": ["a_B0"]})
    assert cli.main(["decay-fit", "--config", _cfg(tmp_path, cfg), "--csv", str(src),
                     "--out", str(tmp_path / "o")]) == 3


def test_linear_verify_overdamped(tmp_path):
    cfg = dict(SMALL, grid={"d": 3, "n": 16, "L": 20.0}, params={"mu": 1.0, "lam": 1.0, "kappa": 2.0},
               linear_verify={"samples": 40})
    out = tmp_path / "out"
    assert cli.main(["linear-verify", "--config", _cfg(tmp_path, cfg), "--out", str(out)]) == 0
    rep = json.loads((out / "linear_verify.json").read_text())
    assert rep["regime"] == "overdamped" and rep["c0_fit"] > 0 and rep["pass"]


@pytest.mark.parametrize("bad, path", [
    ({"grid": {"d": 2, "n": 15, "L": 1.0}}, "grid"),
    ({"params": {"mu": 1.0, "lam": -3.0}}, "params"),
    ({"time": {"dt": -1.0}}, "time.dt"),
    ({"grid": {"d": 2, "n": 16, "L": 1.0, "bogus": 1}}, "grid.bogus"),
    ({"asymptotics": {"p": 3.0}}, "asymptotics"),
    ({"colour": "red"}, "colour"),
])
def test_config_errors_exit_one_with_field_path(tmp_path, capsys, bad, path):
    rc = cli.main(["simulate", "--config", _cfg(tmp_path, bad), "--out", str(tmp_path / "o")])
    assert rc == 1
    assert path in capsys.readouterr().err


def test_usage_errors_exit_one(tmp_path, capsys):
    with pytest.raises(SystemExit) as e:
        cli.main(["acceptance", "--level", "medium"])
    assert e.value.code == 1
    with pytest.raises(SystemExit) as e:
        cli.main(["frobnicate"])
    assert e.value.code == 1
    assert cli.main(["simulate", "--out", str(tmp_path / "o")]) == 1
    assert cli.main(["simulate", "--config", str(tmp_path / "missing.json")]) == 1


def test_guard_abort_exit_two(tmp_path):
    cfg = dict(SMALL, initial={"amplitude": 0.9, "width": 1.0}, pressure={"coeffs": [1.0], "radius": 1.0})
    out = tmp_path / "out"
    assert cli.main(["simulate", "--config", _cfg(tmp_path, cfg), "--out", str(out)]) == 2
    assert json.loads((out / "abort.json").read_text())["guard"]
    assert (out / "abort_state.nskf").exists() and (out / "manifest-simulate.json").exists()


def test_manifest_written_before_work(tmp_path, monkeypatch):
    out = tmp_path / "out"
    seen = {}

    def spy(*a, **k):
        seen["manifest"] = (out / "manifest-simulate.json").exists()
        raise RuntimeError("stop")

    monkeypatch.setattr(cli, "simulate", spy)
    with pytest.raises(RuntimeError):
        cli.main(["simulate", "--config", _cfg(tmp_path, SMALL), "--out", str(out)])
    assert seen["manifest"]
    man = json.loads((out / "manifest-simulate.json").read_text())
    assert man["seed"] == 7 and "config" in man["inputs_sha256"] and man["config"]["grid"]["n"] == 16


def _tree(root: Path) -> dict:
    files = {}
    for p in sorted(root.rglob("*")):
        if p.is_file():
            data = p.read_bytes()
            if p.name.startswith("manifest-"):
                doc = json.loads(data)
                doc.pop("timestamp")
                data = json.dumps(doc, sort_keys=True).encode()
            files[str(p.relative_to(root))] = data
    return files


def test_reruns_are_byte_identical(tmp_path):
    cfg = dict(SMALL, asymptotics={"window": [0.2, 2.0]}, gevrey={"window": [0.2, 2.0]})
    path = _cfg(tmp_path, cfg)
    trees = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        for cmd in ("simulate", "norms", "asymptotics", "gevrey"):
            assert cli.main([cmd, "--config", path, "--out", str(out)]) in (0, 3)
        trees.append(_tree(out))
    assert trees[0].keys() == trees[1].keys() and len(trees[0]) > 8
    for name in trees[0]:
        assert trees[0][name] == trees[1][name], name


def test_simulate_then_analyse_saved_run(tmp_path):
    cfg = dict(SMALL, asymptotics={"window": [0.2, 2.0]})
    path = _cfg(tmp_path, cfg)
    run = tmp_path / "run"
    assert cli.main(["simulate", "--config", path, "--out", str(run)]) == 0
    _, cols = read_csv(run / "steps.csv")
    assert np.all(np.abs(cols["mass"] - cols["mass"][0]) <= 1e-15)
    out = tmp_path / "ana"
    assert cli.main(["asymptotics", "--config", path, "--traj", str(run), "--out", str(out),
                     "--s", "0.5"]) in (0, 3)
    rep = json.loads((out / "report.json").read_text())
    assert rep["weighted_error_series"][0]["s"] == 0.5
    man = json.loads((out / "manifest-asymptotics.json").read_text())
    assert "traj/trajectory.json" in man["inputs_sha256"]
    # the comparator index range is enforced
    assert cli.main(["asymptotics", "--config", path, "--traj", str(run), "--out", str(out),
                     "--s", "-1.0", "--p", "2"]) == 1


def test_console_script_runs(tmp_path):
    exe = shutil.which("nsk")
    cmd = [exe] if exe else [sys.executable, "-m", "nsk.cli"]
    r = subprocess.run(cmd + ["decay-fit", "--out", str(tmp_path)], capture_output=True, text=True)
    assert r.returncode == 1 and "--config is required" in r.stderr
