"""Shared builders for the test suite."""

import numpy as np
import pytest

from wavetraj.data_io import synth_oracle_constant_w
from wavetraj.model import DetectorRecord, Scenario, Trajectory


def wavy_speeds(n, rng, base=8.0, swing=4.0, noise=0.5, floor=2.0):
    """Detector speed draw with a deterministic oscillation plus noise."""
    k = np.arange(n)
    return np.clip(base + swing * np.sin(0.7 * k) + rng.normal(0.0, noise, n), floor, None)


def crawl_speeds(n, rng):
    """Slow congested-regime speeds, bounded away from zero."""
    k = np.arange(n)
    return np.clip(1.0 + 0.4 * np.sin(0.9 * k) + rng.normal(0.0, 0.1, n), 0.3, None)


def oracle_scenario(n=20, w_star=6.0, seed=0, x0=50.0, headway=2.5, cv_ids=(0,)):
    """Chain-consistent scenario whose exact wave speeds are known."""
    rng = np.random.default_rng(seed)
    return synth_oracle_constant_w(
        n, w_star, wavy_speeds(n, rng), x0=x0, headway=headway, cv_ids=cv_ids
    )


def straight_trajectory(vehicle_id, t0, x0, speed, duration, dt=1.0):
    times = t0 + dt * np.arange(int(round(duration / dt)) + 1)
    return Trajectory(
        vehicle_id, times, x0 + speed * (times - t0), np.full(times.size, float(speed))
    )


def bare_scenario(records, x0=0.0, cv_ids=(0,), ground_truth=None, end_time=None):
    """Scenario wrapper for geometry tests that never touch ground truth."""
    recs = tuple(DetectorRecord(*r) for r in records)
    if end_time is None:
        end_time = recs[-1].arrival_time + 100.0
    return Scenario(
        detector_position=x0,
        records=recs,
        cv_ids=tuple(cv_ids),
        ground_truth=ground_truth or {},
        end_time=end_time,
    )


@pytest.fixture
def small_oracle():
    scenario, trace = oracle_scenario(n=8, w_star=6.0, seed=1)
    return scenario, trace
