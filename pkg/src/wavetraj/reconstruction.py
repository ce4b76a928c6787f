"""Propagating calibrated wave speeds to vehicles without trajectories.

A non-connected vehicle k positions behind its probe inherits the probe's
wave-speed profile. Its chain seeds at its own detector entry; each step
perturbs the relevant follower's detector speed with Gaussian noise (the
reading is a point measurement, not the speed held over the whole segment)
and intersects the segment line with the inherited wave line. Steps that fail
to advance strictly in both time and position are dropped.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .calibration import ShockwaveSpeedProfile
from .errors import BeyondCoverageError, NoLeadingCvError
from .geometry import ReferencePoint, intersect, shockwave_line, trajectory_line
from .model import Scenario

W_INDEX_POLICIES = ("prose", "algorithm")


@dataclass(frozen=True)
class ReconstructionConfig:
    """Noise level and bookkeeping for non-connected-vehicle chains.

    ``w_index_policy`` selects which profile entry drives step m of a chain
    that starts k positions behind the probe: ``"prose"`` reuses the wave the
    probe experienced at absolute step k+m, ``"algorithm"`` indexes the
    profile from its start (entry m).
    """

    speed_sigma: float = 0.5
    rng_seed: int = 0
    completion_fraction: float = 0.8
    w_index_policy: str = "prose"

    def __post_init__(self) -> None:
        if self.speed_sigma < 0:
            raise ValueError("speed_sigma must be nonnegative")
        if not 0 < self.completion_fraction <= 1:
            raise ValueError("completion_fraction must be in (0, 1]")
        if self.w_index_policy not in W_INDEX_POLICIES:
            raise ValueError(f"w_index_policy must be one of {W_INDEX_POLICIES}")


@dataclass(frozen=True)
class Assignment:
    """A non-connected vehicle, its probe, and the platoon offset between them."""

    ncv_id: int
    cv_id: int
    offset: int


def assign_leading_cv(scenario: Scenario, ncv_id: int) -> Assignment:
    """Closest probe that passed the detector strictly before the vehicle."""
    idx = scenario.platoon_index(ncv_id)
    platoon = scenario.platoon()
    own_arrival = platoon[idx].arrival_time
    cvs = set(scenario.cv_ids)
    for i in range(idx - 1, -1, -1):
        r = platoon[i]
        if r.vehicle_id in cvs and r.arrival_time < own_arrival:
            return Assignment(ncv_id, r.vehicle_id, idx - i)
    raise NoLeadingCvError(f"no CV passed the detector before vehicle {ncv_id}")


def perturbed_speed(rng: np.random.Generator, speed: float, sigma: float) -> float:
    """Gaussian draw around a detector speed, clamped at zero."""
    return max(0.0, float(rng.normal(speed, sigma)))


def reference_points(
    scenario: Scenario,
    assignment: Assignment,
    profile: ShockwaveSpeedProfile,
    config: ReconstructionConfig,
    rng: np.random.Generator | None = None,
) -> list:
    """Chain of reference points for one non-connected vehicle.

    Returns the detector entry point followed by every accepted intersection.
    With ``speed_sigma`` 0 and offset 0 this reproduces the probe's own chain
    exactly. When ``rng`` is omitted the stream is seeded with
    ``config.rng_seed XOR ncv_id``.
    """
    if profile.cv_id != assignment.cv_id:
        raise ValueError(
            f"profile belongs to CV {profile.cv_id}, assignment names {assignment.cv_id}"
        )
    k = assignment.offset
    if k < 0:
        raise ValueError("offset must be nonnegative")
    kappa = len(profile.steps) - 1
    if k > kappa:
        raise BeyondCoverageError(
            f"vehicle {assignment.ncv_id} sits {k} positions behind CV "
            f"{assignment.cv_id}, but the profile covers only {kappa + 1} steps"
        )
    if rng is None:
        rng = np.random.default_rng(config.rng_seed ^ assignment.ncv_id)
    platoon = scenario.platoon()
    j = scenario.platoon_index(assignment.cv_id)
    if scenario.platoon_index(assignment.ncv_id) != j + k:
        raise ValueError("assignment offset does not match the platoon order")
    x0 = scenario.detector_position
    own = platoon[j + k]
    points = [ReferencePoint(own.arrival_time, x0, own.speed, -1)]
    for m in range(k, kappa + 1):
        if j + m + 1 >= len(platoon):
            break
        v = perturbed_speed(rng, platoon[j + m].speed, config.speed_sigma)
        w_index = m if config.w_index_policy == "prose" else m - k
        w = profile.steps[w_index].shockwave_speed
        g = trajectory_line(m - k, v, points[-1])
        h = shockwave_line(w, platoon[j + m + 1].arrival_time, x0)
        tau, x = intersect(g, h)
        prev = points[-1]
        if tau > prev.time and x > prev.position:
            points.append(ReferencePoint(tau, x, v, m - k))
    return points
