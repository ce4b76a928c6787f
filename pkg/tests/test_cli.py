import json
import subprocess
import sys

import numpy as np
import pytest

from conftest import oracle_scenario
from wavetraj.data_io import (
    load_profiles,
    load_report,
    load_trajectories_csv,
    save_scenario,
)

CLI = [sys.executable, "-m", "wavetraj"]


def run_cli(*args):
    return subprocess.run(
        CLI + [str(a) for a in args], capture_output=True, text=True
    )


def write_tight_config(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({
        "kind": "config",
        "format_version": 1,
        "calibration": {"accept_threshold": 0.05},
    }))
    return path


def test_synth_writes_scenario_and_manifest(tmp_path):
    out = tmp_path / "run"
    res = run_cli("synth", "--vehicles", 12, "--duration", 80, "--seed", 3, "--out", out)
    assert res.returncode == 0, res.stderr
    assert (out / "scenario.json").exists()
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["subcommand"] == "synth"
    assert manifest["seed"] == 3
    assert "scenario.json" in manifest["outputs"]


def test_synth_reruns_are_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        res = run_cli("synth", "--vehicles", 12, "--duration", 80, "--seed", 3, "--out", out)
        assert res.returncode == 0, res.stderr
    assert (a / "scenario.json").read_bytes() == (b / "scenario.json").read_bytes()


def test_synth_rejects_too_few_vehicles(tmp_path):
    res = run_cli("synth", "--vehicles", 1, "--out", tmp_path / "run")
    assert res.returncode == 2
    assert res.stderr.strip()


def test_calibrate_recovers_oracle_waves(tmp_path):
    scenario, _ = oracle_scenario(n=12, w_star=6.0, seed=0)
    scenario_path = tmp_path / "scenario.json"
    save_scenario(scenario_path, scenario)
    out = tmp_path / "cal"
    res = run_cli(
        "calibrate", "--scenario", scenario_path,
        "--config", write_tight_config(tmp_path), "--seed", 0, "--out", out,
    )
    assert res.returncode == 0, res.stderr
    profiles = load_profiles(out / "profiles.json")
    assert len(profiles) == 1
    assert np.all(np.abs(profiles[0].shockwave_speeds() - 6.0) <= 0.3)
    assert (out / "calibration_summary.csv").exists()


def test_calibrate_exits_empty_when_no_cv_has_followers(tmp_path):
    scenario, _ = oracle_scenario(n=6, w_star=6.0, seed=0, cv_ids=(5,))
    scenario_path = tmp_path / "scenario.json"
    save_scenario(scenario_path, scenario)
    res = run_cli("calibrate", "--scenario", scenario_path, "--out", tmp_path / "cal")
    assert res.returncode == 3
    assert "skipping" in res.stderr or "no" in res.stderr.lower()


def test_calibrate_missing_scenario_file(tmp_path):
    res = run_cli("calibrate", "--scenario", tmp_path / "nope.json", "--out", tmp_path / "cal")
    assert res.returncode == 2


def _pipeline(tmp_path, smoother="mfc", sigma=None, seed=0):
    scenario, _ = oracle_scenario(n=12, w_star=6.0, seed=0, cv_ids=(0, 6))
    scenario_path = tmp_path / "scenario.json"
    save_scenario(scenario_path, scenario)
    cal = tmp_path / f"cal-{seed}"
    res = run_cli(
        "calibrate", "--scenario", scenario_path,
        "--config", write_tight_config(tmp_path), "--seed", seed, "--out", cal,
    )
    assert res.returncode == 0, res.stderr
    rec = tmp_path / f"rec-{smoother}-{sigma}-{seed}"
    args = [
        "reconstruct", "--scenario", scenario_path, "--profiles", cal / "profiles.json",
        "--smoother", smoother, "--seed", seed, "--out", rec,
    ]
    if sigma is not None:
        args += ["--sigma", sigma]
    res = run_cli(*args)
    assert res.returncode == 0, res.stderr
    return scenario_path, cal, rec


def test_reconstruct_writes_all_artifacts(tmp_path):
    _, _, rec = _pipeline(tmp_path)
    assert (rec / "reconstructed.csv").exists()
    assert (rec / "reference_points.json").exists()
    assert (rec / "unreconstructed.csv").exists()
    trajectories = load_trajectories_csv(rec / "reconstructed.csv")
    assert trajectories


def test_reconstruct_smoother_none_keeps_chain_vertices(tmp_path):
    scenario, _ = oracle_scenario(n=12, w_star=6.0, seed=0)
    _, _, rec = _pipeline(tmp_path, smoother="none", sigma=0)
    trajectories = load_trajectories_csv(rec / "reconstructed.csv")
    # with no noise the piecewise chains pass through the oracle truths
    for vid, tr in trajectories.items():
        truth = scenario.ground_truth[vid]
        for t, x in zip(tr.times, tr.positions):
            assert truth.position_at(float(t)) == pytest.approx(float(x), abs=1e-6)


def test_evaluate_writes_a_finite_report(tmp_path):
    scenario_path, cal, rec = _pipeline(tmp_path, sigma=0)
    out = tmp_path / "eval"
    res = run_cli(
        "evaluate", "--scenario", scenario_path,
        "--reconstructed", rec / "reconstructed.csv",
        "--profiles", cal / "profiles.json",
        "--refpoints", rec / "reference_points.json",
        "--svg", "--out", out,
    )
    assert res.returncode == 0, res.stderr
    report = load_report(out / "report.json")
    assert np.isfinite(report.mae_speed)
    assert np.isfinite(report.mae_headway)
    assert 0.0 <= report.overlap_ratio <= 100.0
    assert report.information
    svg = (out / "trajectories.svg").read_text()
    assert svg.lstrip().startswith("<?xml")


def test_unknown_subcommand_fails():
    res = run_cli("frobnicate")
    assert res.returncode != 0
