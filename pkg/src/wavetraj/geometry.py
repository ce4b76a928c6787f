"""Piecewise-linear reconstruction geometry.

A vehicle's trajectory downstream of the detector is built as a chain of
straight segments. Segment k runs at the detector speed of the k-th vehicle
behind the subject and ends where it meets the shockwave line anchored at the
next follower's arrival. Both line families and their intersection live here.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import NoFollowersError, ParallelLinesError
from .model import Scenario

# Slope difference below which two lines are treated as parallel (m/s).
PARALLEL_TOL = 1e-9


@dataclass(frozen=True)
class Line:
    """Line in the time-space plane through (anchor_time, anchor_position)."""

    slope: float
    anchor_time: float
    anchor_position: float

    def at(self, tau: float) -> float:
        return self.slope * (tau - self.anchor_time) + self.anchor_position


@dataclass(frozen=True)
class ReferencePoint:
    """Vertex of a reconstructed trajectory chain.

    ``segment_speed`` is the speed of the segment arriving at this point;
    ``source_step`` is the chain step that produced it (-1 for the detector
    entry point that seeds a chain).
    """

    time: float
    position: float
    segment_speed: float
    source_step: int


def _anchor(prev_point) -> tuple:
    if isinstance(prev_point, ReferencePoint):
        return prev_point.time, prev_point.position
    if hasattr(prev_point, "arrival_time"):
        raise TypeError("pass the detector entry as a (time, position) pair")
    t, x = prev_point
    return float(t), float(x)


def trajectory_line(step: int, speed: float, prev_point) -> Line:
    """Segment line of chain step ``step``: slope ``speed`` through the previous point.

    For step 0 the previous point is the subject's detector entry (t_i, x0).
    """
    if speed < 0:
        raise ValueError("segment speed must be nonnegative")
    t, x = _anchor(prev_point)
    return Line(float(speed), t, x)


def shockwave_line(w: float, follower_arrival: float, x0: float) -> Line:
    """Backward-running wave line: slope ``-w`` through (follower_arrival, x0)."""
    if w <= 0:
        raise ValueError("shockwave speed must be positive")
    return Line(-float(w), float(follower_arrival), float(x0))


def intersect(a: Line, b: Line) -> tuple:
    """Unique intersection of two non-parallel lines as ``(time, position)``."""
    ds = a.slope - b.slope
    if abs(ds) <= PARALLEL_TOL:
        raise ParallelLinesError(
            f"slopes {a.slope!r} and {b.slope!r} differ by no more than {PARALLEL_TOL}"
        )
    tau = (
        a.slope * a.anchor_time
        - a.anchor_position
        - b.slope * b.anchor_time
        + b.anchor_position
    ) / ds
    return tau, a.at(tau)


def reconstruct_constant_w(
    scenario: Scenario, subject: int, w: float, max_steps: int | None = None
) -> list:
    """Chain reconstruction of one vehicle under a single constant wave speed.

    Returns the detector entry point followed by the accepted intersections.
    The chain stops when follower records run out, when ``max_steps`` steps
    were taken, or when an intersection fails to advance strictly in both time
    and position (the chain is truncated there, never repaired).
    """
    if w <= 0:
        raise ValueError("shockwave speed must be positive")
    platoon = scenario.platoon()
    i = scenario.platoon_index(subject)
    followers = platoon[i + 1 :]
    if not followers:
        raise NoFollowersError(f"vehicle {subject} is the last one past the detector")
    x0 = scenario.detector_position
    own = platoon[i]
    points = [ReferencePoint(own.arrival_time, x0, own.speed, -1)]
    limit = len(followers) if max_steps is None else min(int(max_steps), len(followers))
    speed = own.speed
    for k in range(limit):
        g = trajectory_line(k, speed, points[-1])
        h = shockwave_line(w, followers[k].arrival_time, x0)
        tau, x = intersect(g, h)
        prev = points[-1]
        if not (tau > prev.time and x > prev.position):
            break
        points.append(ReferencePoint(tau, x, speed, k))
        speed = followers[k].speed
    return points
