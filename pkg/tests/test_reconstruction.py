import numpy as np
import pytest

from conftest import oracle_scenario, wavy_speeds
from wavetraj.calibration import CalibrationConfig, ShockwaveSpeedProfile, calibrate_cv
from wavetraj.data_io import synth_oracle_constant_w
from wavetraj.errors import BeyondCoverageError, NoLeadingCvError
from wavetraj.reconstruction import (
    Assignment,
    ReconstructionConfig,
    assign_leading_cv,
    perturbed_speed,
    reference_points,
)

CAL = CalibrationConfig(samples_per_step=200, accept_threshold=0.05, rng_seed=0)


def test_assign_leading_cv_prefers_the_nearest_probe():
    scenario, _ = oracle_scenario(n=5, seed=0, cv_ids=(0, 3))
    assert assign_leading_cv(scenario, 2) == Assignment(2, 0, 2)
    assert assign_leading_cv(scenario, 4) == Assignment(4, 3, 1)
    assert assign_leading_cv(scenario, 1) == Assignment(1, 0, 1)


def test_assign_leading_cv_no_probe_ahead_raises():
    scenario, _ = oracle_scenario(n=5, seed=0, cv_ids=(3,))
    with pytest.raises(NoLeadingCvError):
        assign_leading_cv(scenario, 1)


def test_perturbed_speed_is_clamped_at_zero():
    rng = np.random.default_rng(0)
    draws = np.array([perturbed_speed(rng, 0.5, 5.0) for _ in range(300)])
    assert np.all(draws >= 0.0)
    assert np.any(draws == 0.0)
    # sigma zero reproduces the input exactly
    assert perturbed_speed(np.random.default_rng(1), 12.5, 0.0) == 12.5


def test_noiseless_offset_zero_reproduces_probe_chain():
    scenario, _ = oracle_scenario(n=10, w_star=6.0, seed=0)
    profile = calibrate_cv(scenario, 0, CAL)
    cfg = ReconstructionConfig(speed_sigma=0.0)
    points = reference_points(scenario, Assignment(0, 0, 0), profile, cfg)
    expected = [(scenario.record_for(0).arrival_time, scenario.detector_position)]
    expected += [(s.reference_time, s.reference_position) for s in profile.steps]
    assert len(points) == len(expected)
    for p, (t, x) in zip(points, expected):
        assert p.time == pytest.approx(t, abs=1e-6)
        assert p.position == pytest.approx(x, abs=1e-6)


def test_noiseless_chain_matches_ground_truth_downstream():
    scenario, _ = oracle_scenario(n=10, w_star=6.0, seed=0)
    profile = calibrate_cv(scenario, 0, CAL)
    cfg = ReconstructionConfig(speed_sigma=0.0)
    for ncv in (1, 2, 3):
        points = reference_points(scenario, Assignment(ncv, 0, ncv), profile, cfg)
        truth = scenario.ground_truth[ncv]
        assert len(points) >= 2
        for p in points:
            assert truth.position_at(p.time) == pytest.approx(p.position, abs=0.5)


def test_chains_advance_strictly_at_any_noise_level():
    scenario, _ = oracle_scenario(n=12, w_star=6.0, seed=5)
    profile = calibrate_cv(scenario, 0, CAL)
    for sigma in (0.0, 0.5, 5.0):
        for seed in range(10):
            cfg = ReconstructionConfig(speed_sigma=sigma, rng_seed=seed)
            points = reference_points(scenario, Assignment(3, 0, 3), profile, cfg)
            times = np.array([p.time for p in points])
            positions = np.array([p.position for p in points])
            assert np.all(np.diff(times) > 0)
            assert np.all(np.diff(positions) > 0)


def test_heavy_noise_can_drop_steps_but_never_reorders():
    scenario, _ = oracle_scenario(n=12, w_star=6.0, seed=5)
    profile = calibrate_cv(scenario, 0, CAL)
    full = reference_points(
        scenario, Assignment(1, 0, 1), profile, ReconstructionConfig(speed_sigma=0.0)
    )
    dropped_somewhere = False
    for seed in range(40):
        cfg = ReconstructionConfig(speed_sigma=5.0, rng_seed=seed)
        pts = reference_points(scenario, Assignment(1, 0, 1), profile, cfg)
        if len(pts) < len(full):
            dropped_somewhere = True
            break
    assert dropped_somewhere


def test_reconstruction_is_deterministic_per_seed():
    scenario, _ = oracle_scenario(n=10, w_star=6.0, seed=1)
    profile = calibrate_cv(scenario, 0, CAL)
    cfg = ReconstructionConfig(speed_sigma=0.5, rng_seed=42)
    a = reference_points(scenario, Assignment(2, 0, 2), profile, cfg)
    b = reference_points(scenario, Assignment(2, 0, 2), profile, cfg)
    assert [(p.time, p.position) for p in a] == [(p.time, p.position) for p in b]


def test_offset_beyond_profile_coverage_raises():
    scenario, _ = oracle_scenario(n=8, w_star=6.0, seed=1)
    profile = calibrate_cv(scenario, 0, CAL)
    short = ShockwaveSpeedProfile(0, profile.steps[:2])
    with pytest.raises(BeyondCoverageError):
        reference_points(scenario, Assignment(3, 0, 3), short,
                         ReconstructionConfig(speed_sigma=0.0))


def test_profile_and_assignment_must_name_the_same_probe():
    scenario, _ = oracle_scenario(n=8, w_star=6.0, seed=1, cv_ids=(0, 4))
    profile = calibrate_cv(scenario, 0, CAL)
    with pytest.raises(ValueError):
        reference_points(scenario, Assignment(5, 4, 1), profile,
                         ReconstructionConfig(speed_sigma=0.0))


def test_offset_must_match_platoon_order():
    scenario, _ = oracle_scenario(n=8, w_star=6.0, seed=1)
    profile = calibrate_cv(scenario, 0, CAL)
    with pytest.raises(ValueError):
        reference_points(scenario, Assignment(3, 0, 2), profile,
                         ReconstructionConfig(speed_sigma=0.0))


def test_w_index_policies_differ_once_waves_vary():
    n = 12
    w_per_gap = np.where(np.arange(n - 1) < 4, 6.0, 4.0)
    scenario, _ = synth_oracle_constant_w(
        n, w_per_gap, wavy_speeds(n, np.random.default_rng(3), base=4.0, swing=1.5),
        x0=0.0, headway=2.0, cv_ids=(0,),
    )
    profile = calibrate_cv(scenario, 0, CAL)
    prose = reference_points(
        scenario, Assignment(2, 0, 2), profile,
        ReconstructionConfig(speed_sigma=0.0, w_index_policy="prose"),
    )
    algo = reference_points(
        scenario, Assignment(2, 0, 2), profile,
        ReconstructionConfig(speed_sigma=0.0, w_index_policy="algorithm"),
    )
    pa = [(p.time, p.position) for p in prose]
    pb = [(p.time, p.position) for p in algo]
    assert pa[0] == pb[0]
    assert pa != pb


def test_reconstruction_config_validation():
    with pytest.raises(ValueError):
        ReconstructionConfig(speed_sigma=-0.1)
    with pytest.raises(ValueError):
        ReconstructionConfig(completion_fraction=0.0)
    with pytest.raises(ValueError):
        ReconstructionConfig(w_index_policy="nonsense")
