"""Monte-Carlo calibration of a time-varying shockwave speed.

For each probe vehicle the constant-wave chain of :mod:`wavetraj.geometry` is
re-fit step by step against the probe's own observed trajectory. Every step
draws a batch of candidate wave speeds, intersects the current segment line
with each candidate wave line, and scores candidates by how far the
intersection lands from the observed trajectory along the time axis. If no
candidate scores below the acceptance threshold, the segment speed itself is
nudged (the detector reading may be stale by the time the wave arrives) and a
fresh batch is drawn.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyProfileError, PositionOutOfRangeError, StepTruncated
from .geometry import ReferencePoint
from .model import Scenario, Trajectory

# Temporal errors within this margin of the batch minimum count as ties.
# Ties are resolved toward the largest candidate wave speed, then pushed to
# the plateau's upper edge by bisection: on a piecewise-linear truth every
# wave slower than the true one lands its vertex on the trajectory and
# scores zero, so "first minimum" would pick an arbitrary sample from that
# plateau, and stopping at the largest sample would leave the next anchor
# short of the true vertex.
TIE_ATOL = 1e-9

# Bisection stops once the plateau edge is bracketed this tightly (m/s).
EDGE_WTOL = 1e-12

# Floor for the adjusted segment speed (m/s).
SPEED_FLOOR = 0.1

# Retention slack when checking whether a reference point overran the truth (s).
LAST_TIME_ATOL = 1e-6


@dataclass(frozen=True)
class CalibrationConfig:
    """Knobs of the per-step search.

    ``w_lower``/``w_upper`` bound the candidate wave speeds, ``samples_per_step``
    is the batch size, ``accept_threshold`` the temporal error (s) below which a
    candidate is accepted immediately, ``max_iterations`` the number of batches
    before the best candidate seen is accepted anyway, and ``speed_step`` the
    increment used when nudging the segment speed between batches.
    """

    w_lower: float = 3.0
    w_upper: float = 10.0
    samples_per_step: int = 200
    accept_threshold: float = 0.2
    max_iterations: int = 30
    speed_step: float = 0.25
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if not 0 < self.w_lower < self.w_upper:
            raise ValueError("need 0 < w_lower < w_upper")
        if self.samples_per_step < 1 or self.max_iterations < 1:
            raise ValueError("samples_per_step and max_iterations must be at least 1")
        if self.accept_threshold <= 0 or self.speed_step <= 0:
            raise ValueError("accept_threshold and speed_step must be positive")


@dataclass(frozen=True)
class CalibratedStep:
    """One accepted chain step: the wave speed that placed its vertex best."""

    step: int
    shockwave_speed: float
    adjusted_speed: float
    reference_time: float
    reference_position: float
    residual: float
    iterations_used: int


@dataclass(frozen=True)
class ShockwaveSpeedProfile:
    """Per-step wave speeds calibrated from one probe vehicle."""

    cv_id: int
    steps: tuple

    def __post_init__(self) -> None:
        object.__setattr__(self, "steps", tuple(self.steps))

    def __len__(self) -> int:
        return len(self.steps)

    def shockwave_speeds(self) -> np.ndarray:
        return np.array([s.shockwave_speed for s in self.steps], dtype=float)


def temporal_error(candidate: tuple, truth: Trajectory) -> float:
    """Time offset between a candidate vertex and the truth at equal position.

    ``candidate`` is a ``(time, position)`` pair. The truth's crossing time of
    the candidate position is found by linear interpolation (earliest crossing
    if the position is held during a stop). Positions outside the truth's span
    raise :class:`PositionOutOfRangeError`.
    """
    tau, x = candidate
    t_true = truth.times_at_positions([x])[0]
    return float(abs(tau - t_true))


def sample_speeds(config: CalibrationConfig, rng: np.random.Generator) -> np.ndarray:
    """One batch of candidate wave speeds, uniform over the configured bounds."""
    return rng.uniform(config.w_lower, config.w_upper, config.samples_per_step)


def _batch_vertices(v, anchor_t, anchor_x, arrival, x0, ws):
    # Intersection of the segment line (slope v through the anchor) with each
    # wave line (slope -w through (arrival, x0)), vectorized over ws.
    tau = (v * anchor_t - anchor_x + ws * arrival + x0) / (v + ws)
    x = v * (tau - anchor_t) + anchor_x
    return tau, x


def _batch_errors(truth, taus, xs, anchor_t, anchor_x):
    t_true = truth.times_at_positions(xs, out_of_range="nan")
    errs = np.abs(taus - t_true)
    errs[~np.isfinite(errs)] = np.inf
    # A vertex that fails to advance past its anchor can never join a valid
    # profile (reference times are strictly increasing), so it must not win.
    errs[(taus <= anchor_t) | (xs <= anchor_x)] = np.inf
    return errs


def _pick(errs, ws):
    # Index of the minimal error; near-ties resolved toward the largest w.
    m = errs.min()
    if not np.isfinite(m):
        return int(np.argmin(errs))
    tied = np.flatnonzero(errs <= m + TIE_ATOL)
    return int(tied[np.argmax(ws[tied])])


def _refine_edge(truth, v, anchor_t, anchor_x, arrival, x0, w_upper, ws, errs, n):
    """Push the accepted wave speed to the upper edge of its error plateau.

    Returns ``(w, tau, x, err)``. When the landscape has no plateau (noisy
    truth) the bracket is already tight and the value barely moves.
    """
    err_ref = errs[n] + TIE_ATOL

    def candidate(w):
        tau, x = _batch_vertices(v, anchor_t, anchor_x, arrival, x0, np.array([w]))
        tau, x = float(tau[0]), float(x[0])
        if tau <= anchor_t or x <= anchor_x:
            return tau, x, np.inf
        t_true = truth.times_at_positions([x], out_of_range="nan")[0]
        err = abs(tau - t_true)
        return tau, x, (err if np.isfinite(err) else np.inf)

    lo = float(ws[n])
    best = candidate(lo)
    above = ws[(ws > lo) & (errs > err_ref)]
    hi = float(above.min()) if above.size else w_upper
    if hi > lo:
        cand_hi = candidate(hi)
        if cand_hi[2] <= err_ref:
            lo, best = hi, cand_hi
        else:
            while hi - lo > EDGE_WTOL:
                mid = 0.5 * (lo + hi)
                cand_mid = candidate(mid)
                if cand_mid[2] <= err_ref:
                    lo, best = mid, cand_mid
                else:
                    hi = mid
    tau, x, err = best
    return lo, tau, x, err


def calibrate_step(
    cv_truth: Trajectory,
    prev_point: ReferencePoint,
    follower_speed: float,
    follower_next_arrival: float,
    x0: float,
    config: CalibrationConfig,
    rng: np.random.Generator,
    speed_cap: float | None = None,
) -> CalibratedStep:
    """Search one chain step for the wave speed that best matches the truth.

    ``follower_speed`` seeds the segment line slope (the subject's own detector
    speed for step 0). When a batch's best temporal error stays at or above the
    acceptance threshold, the working copy of the speed is nudged toward the
    truth: reconstructed vertex behind the truth at equal time raises it,
    ahead lowers it. The input value is never modified. Raises
    :class:`StepTruncated` when no candidate of any batch could be scored.
    """
    step = prev_point.source_step + 1
    anchor_t, anchor_x = prev_point.time, prev_point.position
    v = float(follower_speed)
    cap = float(speed_cap) if speed_cap is not None else np.inf
    best_err = np.inf
    best = None
    iterations = 0
    for iterations in range(1, config.max_iterations + 1):
        ws = sample_speeds(config, rng)
        taus, xs = _batch_vertices(v, anchor_t, anchor_x, follower_next_arrival, x0, ws)
        errs = _batch_errors(cv_truth, taus, xs, anchor_t, anchor_x)
        n = _pick(errs, ws)
        if errs[n] < best_err:
            best_err = float(errs[n])
            best = (v, ws, errs, n)
        if errs[n] < config.accept_threshold:
            w, tau, x, err = _refine_edge(
                cv_truth, v, anchor_t, anchor_x, follower_next_arrival, x0,
                config.w_upper, ws, errs, n,
            )
            if err >= config.accept_threshold:
                w, tau, x, err = float(ws[n]), float(taus[n]), float(xs[n]), float(errs[n])
            return CalibratedStep(step, w, v, tau, x, err, iterations)
        if not np.isfinite(errs[n]):
            v = min(max(v + config.speed_step, SPEED_FLOOR), cap)
            continue
        truth_x = float(cv_truth.position_at(taus[n]))
        if xs[n] < truth_x:
            v += config.speed_step
        elif xs[n] > truth_x:
            v -= config.speed_step
        v = min(max(v, SPEED_FLOOR), cap)
    if best is None or not np.isfinite(best_err):
        raise StepTruncated(f"step {step}: no candidate intersection could be scored")
    v_best, ws, errs, n = best
    w, tau, x, err = _refine_edge(
        cv_truth, v_best, anchor_t, anchor_x, follower_next_arrival, x0,
        config.w_upper, ws, errs, n,
    )
    return CalibratedStep(step, w, v_best, tau, x, err, iterations)


def calibrate_cv(
    scenario: Scenario,
    cv_id: int,
    config: CalibrationConfig,
    rng: np.random.Generator | None = None,
) -> ShockwaveSpeedProfile:
    """Calibrate the full wave-speed profile of one probe vehicle.

    Steps chain forward from the probe's detector entry. The profile ends at
    follower exhaustion, at the first step that cannot be scored at all, at
    the first step that fails to advance strictly in time and position, or
    once a reference point overruns the probe trajectory's temporal span.

    When ``rng`` is omitted, the stream is seeded with
    ``config.rng_seed XOR cv_id`` so that profiles of different probes are
    decorrelated and independent of calibration order.
    """
    truth = scenario.ground_truth.get(cv_id)
    if truth is None:
        raise ValueError(f"no ground-truth trajectory for CV {cv_id}")
    platoon = scenario.platoon()
    j = scenario.platoon_index(cv_id)
    followers = platoon[j + 1 :]
    if not followers:
        raise EmptyProfileError(f"CV {cv_id} has no followers")
    if rng is None:
        rng = np.random.default_rng(config.rng_seed ^ cv_id)
    x0 = scenario.detector_position
    own = platoon[j]
    speed_cap = 1.5 * max(r.speed for r in platoon)
    prev = ReferencePoint(own.arrival_time, x0, own.speed, -1)
    speed = own.speed
    last_time = float(truth.times[-1])
    steps: list = []
    for follower in followers:
        try:
            st = calibrate_step(
                truth,
                prev,
                speed,
                follower.arrival_time,
                x0,
                config,
                rng,
                speed_cap=speed_cap,
            )
        except StepTruncated:
            break
        if st.reference_time > last_time + LAST_TIME_ATOL:
            break
        if not (st.reference_time > prev.time and st.reference_position > prev.position):
            break
        steps.append(st)
        prev = ReferencePoint(
            st.reference_time, st.reference_position, st.adjusted_speed, st.step
        )
        speed = follower.speed
    return ShockwaveSpeedProfile(cv_id, tuple(steps))
