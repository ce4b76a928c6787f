"""Reconstruction quality metrics.

Accuracy is measured two ways: mean absolute error of speed on a common time
grid, and mean absolute error of crossing times on a common position grid
(how late or early the reconstruction passes each point of road). Oscillation
fidelity is compared in the frequency domain, coverage as the area swept in
the time-space plane, and information content as the number of calibrated
wave-speed steps.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .calibration import ShockwaveSpeedProfile
from .dynamics import FuelParams, estimate_energy
from .errors import (
    DegenerateSpectrumError,
    NoOverlapError,
    TooShortError,
    WavetrajError,
)
from .model import Scenario, Trajectory, resample_trajectory, uniform_grid

_trapz = getattr(np, "trapezoid", None) or np.trapz

MAE_QUANTITIES = ("speed", "headway_time")


@dataclass(frozen=True)
class Spectrum:
    """Single-sided magnitude spectrum of a speed series (DC bin retained)."""

    frequencies: np.ndarray
    amplitudes: np.ndarray


@dataclass(frozen=True)
class VehicleMetrics:
    vehicle_id: int
    mae_speed: float = float("nan")
    mae_headway: float = float("nan")
    fuel_truth: float = float("nan")
    fuel_recon: float = float("nan")
    co2_truth: float = float("nan")
    co2_recon: float = float("nan")
    unavailable: str | None = None


@dataclass
class EvaluationReport:
    """Aggregate and per-vehicle reconstruction quality."""

    mae_speed: float = float("nan")
    mae_headway: float = float("nan")
    mae_fuel: float = float("nan")
    mae_co2: float = float("nan")
    overlap_ratio: float = float("nan")
    per_vehicle: dict = field(default_factory=dict)
    st_areas: dict = field(default_factory=dict)
    information: dict = field(default_factory=dict)


def mae(
    reconstructed: Trajectory,
    truth: Trajectory,
    quantity: str,
    dt: float = 0.1,
    grid_points: int = 256,
) -> float:
    """Mean absolute error between a reconstruction and the truth.

    ``"speed"`` compares interpolated speeds on a uniform time grid over the
    common time support. ``"headway_time"`` compares crossing times on a
    uniform position grid over the common positional span. Raises
    :class:`NoOverlapError` when the supports do not intersect.
    """
    if quantity not in MAE_QUANTITIES:
        raise ValueError(f"quantity must be one of {MAE_QUANTITIES}")
    if quantity == "speed":
        t_lo = max(float(reconstructed.times[0]), float(truth.times[0]))
        t_hi = min(float(reconstructed.times[-1]), float(truth.times[-1]))
        if t_hi <= t_lo:
            raise NoOverlapError("no common time support")
        grid = uniform_grid(t_lo, t_hi, dt)
        return float(np.mean(np.abs(reconstructed.speed_at(grid) - truth.speed_at(grid))))
    x_lo = max(float(reconstructed.positions[0]), float(truth.positions[0]))
    x_hi = min(float(reconstructed.positions[-1]), float(truth.positions[-1]))
    if x_hi <= x_lo:
        raise NoOverlapError("no common positional span")
    xs = np.linspace(x_lo, x_hi, grid_points)
    t_rec = reconstructed.times_at_positions(xs)
    t_tru = truth.times_at_positions(xs)
    return float(np.mean(np.abs(t_rec - t_tru)))


def speed_spectrum(speeds: np.ndarray, dt: float) -> Spectrum:
    """Single-sided magnitude spectrum of a uniformly sampled speed series.

    Amplitudes are scaled so a pure sinusoid of amplitude A shows up as A in
    its bin and a constant series as its value in the DC bin.
    """
    speeds = np.asarray(speeds, dtype=float)
    if dt <= 0:
        raise ValueError("dt must be positive")
    n = speeds.size
    if n < 8:
        raise TooShortError(f"need at least 8 samples, got {n}")
    transform = np.fft.rfft(speeds)
    amplitudes = np.abs(transform) / n
    if n % 2 == 0:
        amplitudes[1:-1] *= 2.0
    else:
        amplitudes[1:] *= 2.0
    return Spectrum(np.fft.rfftfreq(n, dt), amplitudes)


def _on_union_grid(a: Spectrum, b: Spectrum):
    if a.frequencies.size == b.frequencies.size and np.array_equal(
        a.frequencies, b.frequencies
    ):
        return a.frequencies, a.amplitudes, b.amplitudes
    union = np.union1d(a.frequencies, b.frequencies)
    fa = np.interp(union, a.frequencies, a.amplitudes, left=0.0, right=0.0)
    fb = np.interp(union, b.frequencies, b.amplitudes, left=0.0, right=0.0)
    return union, fa, fb


def overlap_ratio(truth_spectrum: Spectrum, recon_spectrum: Spectrum) -> float:
    """Shared spectral area as a percentage of the reconstruction's area.

    Both spectra are brought onto the union frequency grid; the pointwise
    minimum is integrated and normalized by the reconstruction's own area.
    Identical spectra give exactly 100.0.
    """
    grid, a_truth, a_recon = _on_union_grid(truth_spectrum, recon_spectrum)
    whole = float(_trapz(a_recon, grid))
    if whole <= 0:
        raise DegenerateSpectrumError("reconstruction spectrum has zero area")
    shared = float(_trapz(np.minimum(a_truth, a_recon), grid))
    return 100.0 * shared / whole


def polygon_area(vertices) -> float:
    """Shoelace area of a simple polygon given as (t, x) vertex pairs."""
    pts = np.asarray(vertices, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 3 or pts.shape[1] != 2:
        raise ValueError("need at least three (t, x) vertices")
    t, x = pts[:, 0], pts[:, 1]
    return 0.5 * abs(float(np.dot(t, np.roll(x, -1)) - np.dot(x, np.roll(t, -1))))


@dataclass(frozen=True)
class StAreaResult:
    """Covered time-space area of one probe, with the reason when it is zero."""

    area: float
    last_ncv_id: int | None = None
    reason: str | None = None


def st_area(
    cv_profile: ShockwaveSpeedProfile,
    reconstructions: dict,
    scenario: Scenario,
    completion_fraction: float = 0.8,
) -> StAreaResult:
    """Time-space area covered by one probe's calibrated waves.

    A non-connected vehicle counts as recovered when its chain spans at least
    ``completion_fraction`` of the probe's own positional span. The area is
    the polygon enclosed by the probe's chain, the wave line of the farthest
    recovered vehicle's final step, and the detector line.
    """
    if not cv_profile.steps:
        return StAreaResult(0.0, None, "empty profile")
    x0 = scenario.detector_position
    j = scenario.platoon_index(cv_profile.cv_id)
    platoon = scenario.platoon()
    truth = scenario.ground_truth.get(cv_profile.cv_id)
    if truth is not None and len(truth) > 0:
        journey = float(truth.positions[-1]) - x0
    else:
        journey = cv_profile.steps[-1].reference_position - x0
    if journey <= 0:
        return StAreaResult(0.0, None, "probe covers no distance")
    best = None
    for ncv_id, points in reconstructions.items():
        pts = list(points)
        if len(pts) < 2:
            continue
        if (pts[-1].position - x0) / journey < completion_fraction:
            continue
        k = scenario.platoon_index(ncv_id) - j
        if k < 0:
            continue
        wave_index = k + pts[-1].source_step
        if best is None or k > best[1]:
            best = (ncv_id, k, wave_index)
    if best is None:
        return StAreaResult(0.0, None, "no vehicle reaches the completion fraction")
    ncv_id, _, wave_index = best
    wave_index = min(wave_index, len(cv_profile.steps) - 1)
    anchor = platoon[j + wave_index + 1].arrival_time
    own = platoon[j]
    vertices = [(own.arrival_time, x0)]
    vertices += [
        (s.reference_time, s.reference_position)
        for s in cv_profile.steps[: wave_index + 1]
    ]
    vertices.append((anchor, x0))
    return StAreaResult(polygon_area(vertices), ncv_id, None)


def information_amount(profile: ShockwaveSpeedProfile) -> int:
    """Number of follower detector readings consumed by the calibration."""
    return len(profile.steps)


def _mean_spectrum(spectra):
    if len(spectra) == 1:
        return spectra[0]
    union = spectra[0].frequencies
    for s in spectra[1:]:
        union = np.union1d(union, s.frequencies)
    acc = np.zeros_like(union)
    for s in spectra:
        acc += np.interp(union, s.frequencies, s.amplitudes, left=0.0, right=0.0)
    return Spectrum(union, acc / len(spectra))


def evaluate_reconstruction(
    scenario: Scenario,
    reconstructed: dict,
    fuel: FuelParams,
    dt: float = 0.1,
    grid_points: int = 256,
    profiles=None,
    reference_points=None,
    completion_fraction: float = 0.8,
) -> EvaluationReport:
    """Score a set of reconstructed trajectories against the scenario truth.

    Vehicles without usable ground truth are marked unavailable rather than
    failing the whole report. Spectra are computed per vehicle on the common
    time window of truth and reconstruction, then averaged amplitude-wise
    before the overlap ratio is taken. When ``profiles`` (and
    ``reference_points``, a mapping cv_id -> {ncv_id: chain}) are given, the
    covered time-space area and information amount are filled in per probe.
    """
    report = EvaluationReport()
    truth_spectra: list = []
    recon_spectra: list = []
    speed_errs: list = []
    headway_errs: list = []
    fuel_errs: list = []
    co2_errs: list = []
    for vid in sorted(reconstructed):
        recon = reconstructed[vid]
        truth = scenario.ground_truth.get(vid)
        if truth is None or len(truth) < 2:
            report.per_vehicle[vid] = VehicleMetrics(vid, unavailable="no ground truth")
            continue
        if len(recon) < 2:
            report.per_vehicle[vid] = VehicleMetrics(vid, unavailable="no reconstruction")
            continue
        try:
            m_speed = mae(recon, truth, "speed", dt=dt)
            m_headway = mae(recon, truth, "headway_time", dt=dt, grid_points=grid_points)
            fuel_t, co2_t = estimate_energy(resample_trajectory(truth, dt), fuel)
            fuel_r, co2_r = estimate_energy(resample_trajectory(recon, dt), fuel)
        except WavetrajError as exc:
            report.per_vehicle[vid] = VehicleMetrics(vid, unavailable=str(exc))
            continue
        report.per_vehicle[vid] = VehicleMetrics(
            vid, m_speed, m_headway, fuel_t, fuel_r, co2_t, co2_r
        )
        speed_errs.append(m_speed)
        headway_errs.append(m_headway)
        fuel_errs.append(abs(fuel_r - fuel_t))
        co2_errs.append(abs(co2_r - co2_t))
        t_lo = max(float(recon.times[0]), float(truth.times[0]))
        t_hi = min(float(recon.times[-1]), float(truth.times[-1]))
        n_window = int((t_hi - t_lo) / dt) + 1
        if n_window >= 8:
            grid = t_lo + dt * np.arange(n_window)
            truth_spectra.append(speed_spectrum(truth.speed_at(grid), dt))
            recon_spectra.append(speed_spectrum(recon.speed_at(grid), dt))
    if speed_errs:
        report.mae_speed = float(np.mean(speed_errs))
        report.mae_headway = float(np.mean(headway_errs))
        report.mae_fuel = float(np.mean(fuel_errs))
        report.mae_co2 = float(np.mean(co2_errs))
    if truth_spectra:
        report.overlap_ratio = overlap_ratio(
            _mean_spectrum(truth_spectra), _mean_spectrum(recon_spectra)
        )
    if profiles is not None:
        for profile in profiles:
            report.information[profile.cv_id] = information_amount(profile)
            pts = (reference_points or {}).get(profile.cv_id, {})
            result = st_area(profile, pts, scenario, completion_fraction)
            report.st_areas[profile.cv_id] = result.area
    return report
