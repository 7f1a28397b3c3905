import json
import subprocess
import sys

import pytest

from bestnet import cli
from bestnet import meanfield as mf
from bestnet import simulator as sim


def _run(argv, capsys):
    code = cli.main([str(a) for a in argv])
    return code, capsys.readouterr()


@pytest.fixture
def star_spec(tmp_path, capsys):
    code, _ = _run(["gen", "star", "--n", 8, "--rho", 0.6, "--out-dir", tmp_path / "gen"], capsys)
    assert code == 0
    return tmp_path / "gen" / "spec.json"


def test_gen_writes_spec_loads_and_manifest(tmp_path, capsys):
    code, out = _run(["gen", "star", "--n", 100, "--rho", 0.9, "--out-dir", tmp_path], capsys)
    assert code == 0
    summary = json.loads(out.out)
    assert summary["routes"] == 2450
    assert summary["max_load"] == pytest.approx(0.882)
    assert summary["classification"] == "Ergodic"
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["command"] == "gen" and len(manifest["input_hash"]) == 64
    assert {p.split("/")[-1] for p in manifest["output_paths"]} == {"spec.json", "loads.json"}


def test_gen_asym_reports_both_loads(tmp_path, capsys):
    code, out = _run(["gen", "asym-star", "--out-dir", tmp_path], capsys)
    assert code == 0
    assert {"rho_in", "rho_out"} <= set(json.loads(out.out))


def test_gen_invalid_is_exit_2(tmp_path, capsys):
    code, out = _run(["gen", "star", "--n", 7, "--out-dir", tmp_path], capsys)
    assert code == 2
    assert "error" in out.err


def test_simulate_and_compare(tmp_path, star_spec, capsys):
    code, out = _run(["simulate", star_spec, "--seed", 3, "--measure", 200, "--out-dir", tmp_path / "sim"], capsys)
    assert code == 0
    assert json.loads(out.out)["policy"] == "Min"
    code, _ = _run(["meanfield", "--rho", 0.6, "--L", 2, "--out-dir", tmp_path / "mf"], capsys)
    assert code == 0
    code, out = _run(["compare", tmp_path / "sim" / "occupancy.csv", tmp_path / "mf" / "meanfield.csv"], capsys)
    assert code == 0
    report = json.loads(out.out)
    assert 0 <= report["sup_cdf_distance"] <= 1


def test_coupled_writes_both_policies(tmp_path, star_spec, capsys):
    code, out = _run(["simulate", star_spec, "--coupled", "--measure", 100, "--out-dir", tmp_path], capsys)
    assert code == 0
    assert json.loads(out.out)["dominance_violations"] == 0
    for name in ("stats_maxmin.json", "stats_min.json", "occupancy_min.csv", "coupled.json"):
        assert (tmp_path / name).exists()


def test_coupled_violation_is_exit_4(tmp_path, star_spec, capsys, monkeypatch):
    real = sim.run_coupled

    def fake(spec, config):
        mm, mn, _ = real(spec, config)
        return mm, mn, 1

    monkeypatch.setattr(sim, "run_coupled", fake)
    code, _ = _run(["simulate", star_spec, "--coupled", "--measure", 20, "--out-dir", tmp_path], capsys)
    assert code == 4


def test_meanfield_unstable_is_exit_2(tmp_path, capsys):
    code, out = _run(["meanfield", "--rho", 1.2, "--out-dir", tmp_path], capsys)
    assert code == 2
    assert "stable" in out.err


def test_nonconvergence_is_exit_3(tmp_path, capsys, monkeypatch):
    def boom(problem):
        raise mf.ConvergenceError("no", 1.0, 5)

    monkeypatch.setattr(mf, "fixed_point_solve", boom)
    code, _ = _run(["meanfield", "--rho", 0.5, "--out-dir", tmp_path], capsys)
    assert code == 3


def test_meanfield_sweep_in_parallel(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("BESTNET_THREADS", "2")
    code, out = _run(["meanfield", "--rho", 0.5, 0.6, "--L", 2, 3, "--out-dir", tmp_path], capsys)
    assert code == 0
    assert len(out.out.strip().splitlines()) == 4
    assert (tmp_path / "meanfield_rho0.6_L3.csv").exists()


def test_const_a(tmp_path, capsys):
    code, out = _run(["const-a", "--out-dir", tmp_path], capsys)
    assert code == 0
    A = float(out.out.split("=")[1])
    assert 1.25 <= A <= 1.40
    assert (tmp_path / "trajectory.csv").read_text().startswith("z,c,v,v_prime")


def test_alloc(star_spec, capsys):
    counts = ",".join(["1"] * 12)
    code, out = _run(["alloc", star_spec, "--counts", counts, "--policy", "maxmin"], capsys)
    assert code == 0
    d = json.loads(out.out)
    assert d["feasible"] and d["maxmin_conditions"]


def test_replay_reproduces_output(tmp_path, star_spec, capsys):
    out_dir = tmp_path / "sim"
    _run(["simulate", star_spec, "--seed", 5, "--measure", 100, "--out-dir", out_dir], capsys)
    first = (out_dir / "occupancy.csv").read_text()
    (out_dir / "occupancy.csv").unlink()
    code, _ = _run(["replay", out_dir / "manifest.json"], capsys)
    assert code == 0
    assert (out_dir / "occupancy.csv").read_text() == first


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "bestnet", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    assert "meanfield" in res.stdout
