import json

import numpy as np
import pytest

from conftest import oracle_scenario, wavy_speeds
from wavetraj.calibration import CalibrationConfig, calibrate_cv
from wavetraj.data_io import (
    IdmParams,
    Perturbation,
    PipelineConfig,
    SynthConfig,
    equilibrium_gap,
    export_trajectories_csv,
    extract_detector,
    has_shockwave,
    load_config,
    load_ngsim,
    load_profiles,
    load_reference_points,
    load_report,
    load_scenario,
    load_trajectories_csv,
    save_config,
    save_profiles,
    save_reference_points,
    save_report,
    save_scenario,
    select_cvs,
    synth_idm,
    synth_oracle_constant_w,
)
from wavetraj.errors import EmptyLaneError, GenerationError, ParseError
from wavetraj.metrics import EvaluationReport
from wavetraj.model import Trajectory

FEET = 0.3048


def write_ngsim(path, rows):
    header = "Vehicle_ID,Frame_ID,Lane_ID,Local_Y,v_Vel\n"
    path.write_text(header + "".join(f"{v},{f},{l},{y},{s}\n" for v, f, l, y, s in rows))


def test_load_ngsim_converts_feet_and_frames(tmp_path):
    p = tmp_path / "trk.csv"
    rows = []
    for vid, offset in ((1, 0.0), (2, 100.0)):
        for frame in range(200):
            y = 10.0 * frame - offset
            rows.append((vid, frame, 2, y, 10.0))
    write_ngsim(p, rows)
    scenario = load_ngsim(p, lane=2)
    assert sorted(scenario.ground_truth) == [1, 2]
    tr = scenario.ground_truth[1]
    # 10 ft per 0.1 s frame is 100 ft/s; positions land on the metric grid
    assert tr.speeds[0] == pytest.approx(10.0 * FEET)
    assert np.all(np.diff(tr.times) > 0)


def test_load_ngsim_drops_lane_changers(tmp_path):
    p = tmp_path / "trk.csv"
    rows = [(1, f, 2, 10.0 * f, 10.0) for f in range(120)]
    rows += [(2, f, 2, 10.0 * f - 80.0, 10.0) for f in range(120)]
    rows += [(3, f, 2 if f < 60 else 3, 10.0 * f - 160.0, 10.0) for f in range(120)]
    write_ngsim(p, rows)
    scenario = load_ngsim(p, lane=2)
    assert 3 not in scenario.ground_truth


def test_load_ngsim_malformed_row_names_the_line(tmp_path):
    p = tmp_path / "trk.csv"
    p.write_text(
        "Vehicle_ID,Frame_ID,Lane_ID,Local_Y,v_Vel\n"
        "1,0,2,0.0,10.0\n"
        "1,one,2,10.0,10.0\n"
    )
    with pytest.raises(ParseError, match="line 3"):
        load_ngsim(p, lane=2)


def test_load_ngsim_missing_columns(tmp_path):
    p = tmp_path / "trk.csv"
    p.write_text("Vehicle_ID,Frame_ID\n1,0\n")
    with pytest.raises(ParseError):
        load_ngsim(p, lane=2)


def test_load_ngsim_empty_lane(tmp_path):
    p = tmp_path / "trk.csv"
    write_ngsim(p, [(1, f, 2, 10.0 * f, 10.0) for f in range(60)])
    with pytest.raises(EmptyLaneError):
        load_ngsim(p, lane=4)


def test_extract_detector_interpolates_the_crossing():
    tr = Trajectory(7, np.array([1.0, 1.2]), np.array([-1.0, 1.0]), np.array([10.0, 10.0]))
    records, truths = extract_detector([tr], 0.0)
    assert len(records) == 1
    assert records[0].arrival_time == pytest.approx(1.1)
    assert records[0].speed == pytest.approx(10.0)
    assert truths[7].times[0] == pytest.approx(1.1)
    assert truths[7].positions[0] == 0.0


def test_extract_detector_skips_vehicles_off_the_detector():
    never = Trajectory(1, np.array([0.0, 5.0]), np.array([-50.0, -10.0]), np.array([8.0, 8.0]))
    past = Trajectory(2, np.array([0.0, 5.0]), np.array([10.0, 50.0]), np.array([8.0, 8.0]))
    crossing = Trajectory(3, np.array([0.0, 5.0]), np.array([-10.0, 30.0]), np.array([8.0, 8.0]))
    records, truths = extract_detector([never, past, crossing], 0.0)
    assert [r.vehicle_id for r in records] == [3]
    assert set(truths) == {3}


def test_synth_idm_is_deterministic():
    cfg = SynthConfig(vehicle_count=12, duration=80.0, seed=5)
    a = synth_idm(cfg)
    b = synth_idm(cfg)
    assert a.cv_ids == b.cv_ids
    for vid in a.ground_truth:
        assert np.array_equal(a.ground_truth[vid].positions, b.ground_truth[vid].positions)


def test_synth_idm_without_perturbation_stays_at_equilibrium():
    cfg = SynthConfig(
        vehicle_count=6,
        perturbation=Perturbation(time=20.0, speed_drop=0.0, hold=10.0),
        initial_speed=14.0,
        duration=60.0,
        seed=1,
    )
    scenario = synth_idm(cfg)
    for tr in scenario.ground_truth.values():
        assert float(np.ptp(tr.speeds)) < 1e-9
    for r in scenario.records:
        assert r.speed == pytest.approx(14.0)
    assert not has_shockwave(scenario)


def test_synth_idm_wave_travels_backward_through_the_platoon():
    cfg = SynthConfig(
        vehicle_count=20,
        perturbation=Perturbation(time=20.0, speed_drop=10.0, hold=15.0),
        initial_speed=14.0,
        duration=150.0,
        seed=3,
    )
    scenario = synth_idm(cfg)
    assert has_shockwave(scenario)
    order = [r.vehicle_id for r in scenario.platoon()]
    minima_t, minima_x = [], []
    for vid in order:
        tr = scenario.ground_truth[vid]
        i = int(np.argmin(tr.speeds))
        minima_t.append(float(tr.times[i]))
        minima_x.append(float(tr.positions[i]))
    # the slowdown reaches each follower later than its leader
    assert np.all(np.diff(minima_t) > 0)
    slope = float(np.polyfit(minima_t, minima_x, 1)[0])
    assert slope < 0.0


def test_synth_idm_rejects_degenerate_configs():
    with pytest.raises(GenerationError):
        synth_idm(SynthConfig(vehicle_count=1))
    with pytest.raises(GenerationError):
        synth_idm(SynthConfig(vehicle_count=5, duration=-1.0))
    with pytest.raises(GenerationError):
        synth_idm(SynthConfig(vehicle_count=5, initial_speed=25.0))


def test_equilibrium_gap_holds_the_platoon_together():
    idm = IdmParams()
    gap = equilibrium_gap(idm, 14.0)
    assert gap > idm.min_gap + 14.0 * idm.time_headway - 1e-9


def test_select_cvs_every_mth_counts():
    rng = np.random.default_rng(0)
    ids = list(range(40))
    chosen = select_cvs(ids, 0.1, "every-mth", rng)
    assert len(chosen) == 4
    for i, cv in enumerate(sorted(chosen)):
        assert 10 * i <= cv < 10 * (i + 1)


def test_select_cvs_random_block_counts():
    rng = np.random.default_rng(0)
    chosen = select_cvs(list(range(40)), 0.15, "random-block", rng)
    assert len(chosen) == 6


def test_select_cvs_leaves_someone_unselected():
    rng = np.random.default_rng(0)
    chosen = select_cvs(list(range(4)), 0.9, "every-mth", rng)
    assert len(chosen) < 4


def test_select_cvs_validation():
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        select_cvs(list(range(10)), 0.0, "every-mth", rng)
    with pytest.raises(ValueError):
        select_cvs(list(range(10)), 1.0, "every-mth", rng)
    with pytest.raises(ValueError):
        select_cvs(list(range(10)), 0.1, "sometimes", rng)


def test_synth_oracle_traces_its_construction():
    n = 8
    scenario, trace = oracle_scenario(n=n, w_star=6.0, seed=0, headway=2.0)
    assert np.all(trace.w_per_gap == 6.0)
    assert trace.w_per_gap.size == n - 1
    assert np.allclose(np.diff(trace.arrival_times), 2.0)
    for r, v in zip(scenario.platoon(), trace.detector_speeds):
        assert r.speed == v


def test_synth_oracle_last_vehicle_runs_straight():
    scenario, _ = oracle_scenario(n=6, w_star=6.0, seed=0)
    tail = scenario.ground_truth[5]
    r = scenario.record_for(5)
    expected = scenario.detector_position + r.speed * (tail.times - r.arrival_time)
    assert np.allclose(tail.positions, expected, atol=1e-9)


def test_synth_oracle_piecewise_wave_speeds():
    w = np.array([4.0, 6.0, 8.0])
    scenario, trace = synth_oracle_constant_w(4, w, [8.0, 7.0, 6.0, 5.0])
    assert np.array_equal(trace.w_per_gap, w)


def test_synth_oracle_validation():
    with pytest.raises(GenerationError):
        synth_oracle_constant_w(1, 6.0, [8.0])
    with pytest.raises(GenerationError):
        synth_oracle_constant_w(3, 6.0, [8.0, 8.0])
    with pytest.raises(GenerationError):
        synth_oracle_constant_w(3, 6.0, [8.0, -1.0, 8.0])
    with pytest.raises(GenerationError):
        synth_oracle_constant_w(3, -6.0, [8.0, 8.0, 8.0])
    with pytest.raises(GenerationError):
        synth_oracle_constant_w(3, 6.0, [8.0, 8.0, 8.0], arrival_times=[0.0, 2.0, 1.0])


def test_scenario_round_trip_is_exact(tmp_path):
    scenario, _ = oracle_scenario(n=9, w_star=7.0, seed=4, cv_ids=(0, 4))
    path = tmp_path / "scenario.json"
    save_scenario(path, scenario)
    loaded = load_scenario(path)
    assert loaded.detector_position == scenario.detector_position
    assert loaded.cv_ids == scenario.cv_ids
    assert loaded.end_time == scenario.end_time
    for a, b in zip(loaded.records, scenario.records):
        assert (a.vehicle_id, a.arrival_time, a.speed) == (b.vehicle_id, b.arrival_time, b.speed)
    for vid, tr in scenario.ground_truth.items():
        got = loaded.ground_truth[vid]
        assert np.array_equal(got.times, tr.times)
        assert np.array_equal(got.positions, tr.positions)
        assert np.array_equal(got.speeds, tr.speeds)


def test_profiles_round_trip_is_exact(tmp_path):
    scenario, _ = oracle_scenario(n=8, w_star=6.0, seed=0)
    profile = calibrate_cv(scenario, 0, CalibrationConfig(accept_threshold=0.05))
    path = tmp_path / "profiles.json"
    save_profiles(path, [profile])
    loaded = load_profiles(path)
    assert len(loaded) == 1
    got = loaded[0]
    assert got.cv_id == profile.cv_id
    assert np.array_equal(got.shockwave_speeds(), profile.shockwave_speeds())
    for a, b in zip(got.steps, profile.steps):
        assert a == b


def test_reference_points_round_trip_is_exact(tmp_path):
    from wavetraj.geometry import reconstruct_constant_w

    scenario, _ = oracle_scenario(n=6, w_star=6.0, seed=2)
    chains = {0: {1: reconstruct_constant_w(scenario, 1, 6.0)}}
    path = tmp_path / "refpoints.json"
    save_reference_points(path, chains)
    loaded = load_reference_points(path)
    saved = chains[0][1]
    got = loaded[0][1]
    assert len(got) == len(saved)
    for a, b in zip(got, saved):
        assert (a.time, a.position, a.segment_speed, a.source_step) == (
            b.time, b.position, b.segment_speed, b.source_step
        )


def test_report_round_trip(tmp_path):
    report = EvaluationReport(
        mae_speed=1.25, mae_headway=3.5, mae_fuel=0.4, mae_co2=956.8,
        overlap_ratio=87.5, per_vehicle={}, st_areas={0: 120.5}, information={0: 7},
    )
    path = tmp_path / "report.json"
    save_report(path, report)
    loaded = load_report(path)
    assert loaded.mae_speed == report.mae_speed
    assert loaded.overlap_ratio == report.overlap_ratio
    assert loaded.st_areas == report.st_areas
    assert loaded.information == report.information


def test_trajectories_csv_round_trip_is_exact(tmp_path):
    rng = np.random.default_rng(1)
    trs = {}
    for vid in (2, 5):
        n = 20
        times = np.cumsum(rng.uniform(0.05, 0.3, n))
        speeds = rng.uniform(0.0, 20.0, n)
        positions = np.cumsum(speeds * 0.1)
        trs[vid] = Trajectory(vid, times, positions, speeds)
    path = tmp_path / "trajectories.csv"
    export_trajectories_csv(path, trs.values())
    loaded = load_trajectories_csv(path)
    assert set(loaded) == set(trs)
    for vid, tr in trs.items():
        assert np.array_equal(loaded[vid].times, tr.times)
        assert np.array_equal(loaded[vid].positions, tr.positions)
        assert np.array_equal(loaded[vid].speeds, tr.speeds)


def test_config_round_trip_and_overrides(tmp_path):
    path = tmp_path / "config.json"
    save_config(path, PipelineConfig())
    cfg = load_config(path)
    assert cfg.calibration == CalibrationConfig()

    override = tmp_path / "override.json"
    override.write_text(json.dumps({
        "kind": "config", "format_version": 1,
        "calibration": {"w_lower": 0.5, "accept_threshold": 0.05},
        "reconstruction": {"speed_sigma": 0.15},
        "synth": {"idm": {"time_headway": 0.7}},
    }))
    cfg = load_config(override)
    assert cfg.calibration.w_lower == 0.5
    assert cfg.reconstruction.speed_sigma == 0.15
    assert cfg.synth.idm.time_headway == 0.7
    # untouched sections keep their defaults
    assert cfg.vehicle.max_decel == 3.5


def test_config_rejects_unknown_keys(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"kind": "config", "format_version": 1, "calibration": {"w_floor": 1.0}}))
    with pytest.raises(ParseError):
        load_config(path)
    path.write_text(json.dumps({"kind": "config", "format_version": 1, "calibrations": {}}))
    with pytest.raises(ParseError):
        load_config(path)


def test_scenario_file_rejects_wrong_kind(tmp_path):
    scenario, _ = oracle_scenario(n=5, seed=0)
    path = tmp_path / "scenario.json"
    save_scenario(path, scenario)
    doc = json.loads(path.read_text())
    doc["kind"] = "profiles"
    path.write_text(json.dumps(doc))
    with pytest.raises(ParseError):
        load_scenario(path)
