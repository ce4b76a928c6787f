"""Core domain types: trajectories, detector records, scenarios.

All quantities are SI (seconds, meters, meters per second). Positions grow in
the direction of travel; the detector sits at a fixed position ``x0`` and every
reconstruction happens downstream of it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .errors import InsufficientPointsError, PositionOutOfRangeError

# Anchoring tolerance between a ground-truth trajectory and its detector record.
POSITION_ATOL = 1e-6
TIME_ATOL = 1e-6


@dataclass(frozen=True)
class TrajectoryPoint:
    """One (time, position, speed) sample of a single vehicle."""

    time: float
    position: float
    speed: float


@dataclass(frozen=True)
class DetectorRecord:
    """Arrival of one vehicle at the detector: Eulerian observation (t_i, v_i)."""

    vehicle_id: int
    arrival_time: float
    speed: float


@dataclass
class Trajectory:
    """Time-ordered samples of one vehicle, stored as parallel arrays.

    Construction only checks structural consistency (equal lengths, 1-d);
    semantic invariants (strictly increasing times, nondecreasing positions,
    nonnegative speeds) are reported by :func:`validate_scenario` so that a
    malformed scenario can still be inspected. Treat instances as immutable.
    """

    vehicle_id: int
    times: np.ndarray
    positions: np.ndarray
    speeds: np.ndarray

    def __post_init__(self) -> None:
        self.times = np.asarray(self.times, dtype=float)
        self.positions = np.asarray(self.positions, dtype=float)
        self.speeds = np.asarray(self.speeds, dtype=float)
        if self.times.ndim != 1:
            raise ValueError("trajectory arrays must be one-dimensional")
        if not (self.times.size == self.positions.size == self.speeds.size):
            raise ValueError("times, positions and speeds must have equal length")

    @classmethod
    def from_points(cls, vehicle_id: int, points: Iterable[TrajectoryPoint]) -> "Trajectory":
        pts = list(points)
        return cls(
            vehicle_id,
            np.array([p.time for p in pts], dtype=float),
            np.array([p.position for p in pts], dtype=float),
            np.array([p.speed for p in pts], dtype=float),
        )

    def __len__(self) -> int:
        return int(self.times.size)

    def point(self, index: int) -> TrajectoryPoint:
        return TrajectoryPoint(
            float(self.times[index]),
            float(self.positions[index]),
            float(self.speeds[index]),
        )

    @property
    def duration(self) -> float:
        return float(self.times[-1] - self.times[0])

    def position_at(self, t):
        """Linearly interpolated position; clamped outside the time support."""
        return np.interp(t, self.times, self.positions)

    def speed_at(self, t):
        """Linearly interpolated speed; clamped outside the time support."""
        return np.interp(t, self.times, self.speeds)

    def times_at_positions(self, xs, *, out_of_range: str = "raise") -> np.ndarray:
        """Earliest time at which the trajectory reaches each position.

        Positions must be nondecreasing along the trajectory. Where the
        position is held during a stop, the earliest crossing is returned.
        Queries outside ``[positions[0], positions[-1]]`` either raise
        :class:`PositionOutOfRangeError` or yield NaN, per ``out_of_range``.
        """
        xs = np.atleast_1d(np.asarray(xs, dtype=float))
        p, t = self.positions, self.times
        if p.size < 2:
            raise InsufficientPointsError("need at least two samples")
        bad = (xs < p[0]) | (xs > p[-1])
        if bad.any() and out_of_range == "raise":
            raise PositionOutOfRangeError(
                f"position {xs[bad][0]:.6g} outside [{p[0]:.6g}, {p[-1]:.6g}]"
            )
        idx = np.searchsorted(p, xs, side="left")
        idx = np.clip(idx, 0, p.size - 1)
        exact = p[idx] == xs
        lo = np.clip(idx - 1, 0, p.size - 2)
        p0, p1 = p[lo], p[lo + 1]
        t0, t1 = t[lo], t[lo + 1]
        denom = np.where(p1 > p0, p1 - p0, 1.0)
        out = t0 + (xs - p0) / denom * (t1 - t0)
        out = np.where(exact, t[idx], out)
        return np.where(bad, np.nan, out)

    def time_at_position(self, x: float) -> float:
        """Scalar convenience wrapper around :meth:`times_at_positions`."""
        return float(self.times_at_positions([x])[0])


@dataclass(frozen=True)
class FundamentalDiagram:
    """Triangular flow-density relation.

    The congested-branch wave speed must satisfy
    ``w = v_f * k_m / (k_j - k_m)`` so that both branches meet at capacity.
    """

    free_flow_speed: float
    critical_density: float
    jam_density: float
    backward_wave_speed: float

    def __post_init__(self) -> None:
        if self.free_flow_speed <= 0 or self.critical_density <= 0:
            raise ValueError("free_flow_speed and critical_density must be positive")
        if self.jam_density <= self.critical_density:
            raise ValueError("jam_density must exceed critical_density")
        expected = self.free_flow_speed * self.critical_density / (
            self.jam_density - self.critical_density
        )
        if abs(self.backward_wave_speed - expected) > 1e-6 * expected:
            raise ValueError(
                f"inconsistent wave speed: got {self.backward_wave_speed!r}, "
                f"triangle implies {expected!r}"
            )

    @classmethod
    def from_triangle(
        cls, free_flow_speed: float, critical_density: float, jam_density: float
    ) -> "FundamentalDiagram":
        w = free_flow_speed * critical_density / (jam_density - critical_density)
        return cls(free_flow_speed, critical_density, jam_density, w)

    @property
    def capacity(self) -> float:
        return self.free_flow_speed * self.critical_density


@dataclass
class Scenario:
    """One detector plus everything observed around it.

    ``records`` are expected sorted by arrival time; ``cv_ids`` is the subset of
    vehicles whose full trajectory is observed (the probe vehicles);
    ``ground_truth`` maps vehicle id to its known trajectory (all vehicles for
    synthetic data, probes only in a real deployment).
    """

    detector_position: float
    records: tuple
    cv_ids: tuple
    ground_truth: dict
    end_time: float

    def __post_init__(self) -> None:
        self.records = tuple(self.records)
        self.cv_ids = tuple(sorted(set(int(i) for i in self.cv_ids)))

    @cached_property
    def _platoon(self) -> tuple:
        # Detector arrival order; ties broken by vehicle id.
        return tuple(sorted(self.records, key=lambda r: (r.arrival_time, r.vehicle_id)))

    def platoon(self) -> tuple:
        """Records in platoon order (arrival time, ties by id)."""
        return self._platoon

    @cached_property
    def _platoon_index(self) -> dict:
        return {r.vehicle_id: i for i, r in enumerate(self._platoon)}

    def platoon_index(self, vehicle_id: int) -> int:
        try:
            return self._platoon_index[vehicle_id]
        except KeyError:
            raise KeyError(f"vehicle {vehicle_id} has no detector record") from None

    def record_for(self, vehicle_id: int) -> DetectorRecord:
        return self._platoon[self.platoon_index(vehicle_id)]

    @property
    def vehicle_ids(self) -> tuple:
        return tuple(r.vehicle_id for r in self._platoon)


def validate_scenario(scenario: Scenario) -> list:
    """Check every scenario invariant; return human-readable violations.

    An empty list means the scenario satisfies all type invariants and every
    downstream operation's preconditions on it hold.
    """
    violations: list = []
    ids = [r.vehicle_id for r in scenario.records]
    if len(set(ids)) != len(ids):
        violations.append("duplicate vehicle ids in records")
    arrivals = [r.arrival_time for r in scenario.records]
    if any(b < a for a, b in zip(arrivals, arrivals[1:])):
        violations.append("records not sorted by arrival time")
    for r in scenario.records:
        if not (math.isfinite(r.arrival_time) and math.isfinite(r.speed)):
            violations.append(f"vehicle {r.vehicle_id}: non-finite detector record")
        elif r.speed <= 0:
            violations.append(f"vehicle {r.vehicle_id}: detector speed must be positive")
    known = set(ids)
    for cv in scenario.cv_ids:
        if cv not in known:
            violations.append(f"CV id {cv} has no detector record")
    if known and set(scenario.cv_ids) >= known:
        violations.append("every vehicle is a CV; nothing left to reconstruct")
    for vid, traj in scenario.ground_truth.items():
        if len(traj) == 0:
            violations.append(f"vehicle {vid}: empty trajectory")
            continue
        if not (
            np.isfinite(traj.times).all()
            and np.isfinite(traj.positions).all()
            and np.isfinite(traj.speeds).all()
        ):
            violations.append(f"vehicle {vid}: non-finite trajectory samples")
            continue
        if np.any(np.diff(traj.times) <= 0):
            violations.append(f"vehicle {vid}: times not strictly increasing")
        if np.any(np.diff(traj.positions) < 0):
            violations.append(f"vehicle {vid}: positions decrease")
        if np.any(traj.speeds < 0):
            violations.append(f"vehicle {vid}: negative speed")
        if vid in known:
            rec = scenario.record_for(vid)
            if abs(traj.positions[0] - scenario.detector_position) > POSITION_ATOL:
                violations.append(
                    f"vehicle {vid}: trajectory does not start at the detector"
                )
            if abs(traj.times[0] - rec.arrival_time) > TIME_ATOL:
                violations.append(
                    f"vehicle {vid}: trajectory start differs from detector arrival"
                )
    return violations


def uniform_grid(start: float, stop: float, dt: float) -> np.ndarray:
    """Uniform grid on [start, stop] with exact endpoints.

    The last interval may be shorter than ``dt`` when the span is not an exact
    multiple of it.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if stop < start:
        raise ValueError("stop must not precede start")
    n = int(math.floor((stop - start) / dt + 1e-9))
    grid = start + dt * np.arange(n + 1)
    if stop - grid[-1] > 1e-9 * max(dt, 1.0):
        grid = np.append(grid, stop)
    else:
        grid[-1] = stop
    return grid


def resample_trajectory(trajectory: Trajectory, dt: float) -> Trajectory:
    """Resample onto a uniform grid by linear interpolation, endpoints exact.

    Speed is interpolated independently of position; no consistency between
    the two is enforced or created.
    """
    if len(trajectory) < 2:
        raise InsufficientPointsError("cannot resample a trajectory with fewer than two samples")
    grid = uniform_grid(float(trajectory.times[0]), float(trajectory.times[-1]), dt)
    return Trajectory(
        trajectory.vehicle_id,
        grid,
        np.interp(grid, trajectory.times, trajectory.positions),
        np.interp(grid, trajectory.times, trajectory.speeds),
    )
