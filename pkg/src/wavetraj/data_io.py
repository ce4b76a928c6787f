"""Scenario generation, field-data loading, and persistence.

Two synthetic generators are provided: a forward construction that builds
every ground truth from the chain geometry itself (so calibration against it
has a known zero-error wave speed), and a car-following simulation whose lead
vehicle briefly slows down, sending a stop-and-go wave backward through the
platoon. Field data is read from NGSIM-style trajectory CSVs. All artifacts
persist as versioned JSON documents; floats round-trip exactly.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .calibration import CalibratedStep, CalibrationConfig, ShockwaveSpeedProfile
from .dynamics import FuelParams, VehicleParams
from .errors import EmptyLaneError, GenerationError, ParseError
from .geometry import ReferencePoint, intersect, shockwave_line, trajectory_line
from .metrics import EvaluationReport, VehicleMetrics
from .model import (
    DetectorRecord,
    FundamentalDiagram,
    Scenario,
    Trajectory,
    TrajectoryPoint,
)
from .reconstruction import ReconstructionConfig

log = logging.getLogger(__name__)

FORMAT_VERSION = 1

FEET = 0.3048
NGSIM_FRAME_PERIOD = 0.1
NGSIM_COLUMNS = ("Vehicle_ID", "Frame_ID", "Lane_ID", "Local_Y", "v_Vel")

CV_POLICIES = ("every-mth", "random-block")


# ---------------------------------------------------------------------------
# synthetic scenarios


@dataclass(frozen=True)
class IdmParams:
    desired_speed: float = 20.0
    time_headway: float = 1.0
    min_gap: float = 2.0
    max_accel: float = 1.5
    comfortable_decel: float = 2.0


@dataclass(frozen=True)
class Perturbation:
    """Lead-vehicle slowdown that launches the backward wave."""

    time: float = 20.0
    speed_drop: float = 5.0
    hold: float = 10.0


@dataclass(frozen=True)
class SynthConfig:
    vehicle_count: int = 40
    fd: FundamentalDiagram = field(
        default_factory=lambda: FundamentalDiagram.from_triangle(20.0, 0.04, 0.2)
    )
    idm: IdmParams = field(default_factory=IdmParams)
    perturbation: Perturbation = field(default_factory=Perturbation)
    initial_speed: float = 14.0
    duration: float = 150.0
    dt: float = 0.1
    seed: int = 0
    penetration: float = 0.1
    cv_policy: str = "every-mth"


@dataclass(frozen=True)
class GenerationTrace:
    """Forward-construction bookkeeping: exactly what built each truth."""

    w_per_gap: np.ndarray
    detector_speeds: np.ndarray
    arrival_times: np.ndarray
    chains: dict


def select_cvs(
    vehicle_ids, penetration: float, policy: str, rng: np.random.Generator
) -> tuple:
    """Pick the probe subset from a platoon-ordered id sequence.

    ``every-mth`` draws one vehicle from each consecutive block of
    ``round(1/penetration)`` platoon positions; ``random-block`` draws
    ``round(20 * penetration)`` from each block of twenty. At least one
    vehicle always stays unselected.
    """
    ids = list(vehicle_ids)
    if not 0 < penetration < 1:
        raise ValueError("penetration must be in (0, 1)")
    if policy not in CV_POLICIES:
        raise ValueError(f"cv policy must be one of {CV_POLICIES}")
    if policy == "every-mth":
        block = max(2, round(1.0 / penetration))
        per_block = 1
    else:
        block = 20
        per_block = max(1, round(penetration * block))
    chosen: list = []
    for start in range(0, len(ids), block):
        chunk = ids[start : start + block]
        take = min(per_block, len(chunk))
        picks = rng.choice(len(chunk), size=take, replace=False)
        chosen.extend(chunk[p] for p in sorted(picks))
    if len(chosen) >= len(ids):
        chosen = chosen[: len(ids) - 1]
    return tuple(sorted(chosen))


def _forward_chain(records, start_index, w_per_gap, x0):
    """Chain of vehicle ``start_index`` with a per-gap wave speed."""
    own = records[start_index]
    points = [ReferencePoint(own.arrival_time, x0, own.speed, -1)]
    speed = own.speed
    for k in range(len(records) - start_index - 1):
        w = float(w_per_gap[start_index + k])
        g = trajectory_line(k, speed, points[-1])
        h = shockwave_line(w, records[start_index + k + 1].arrival_time, x0)
        tau, x = intersect(g, h)
        prev = points[-1]
        if not (tau > prev.time and x > prev.position):
            break
        points.append(ReferencePoint(tau, x, speed, k))
        speed = records[start_index + k + 1].speed
    return points


def synth_oracle_constant_w(
    n_vehicles: int,
    w_star,
    detector_speeds,
    x0: float = 0.0,
    headway: float = 2.0,
    arrival_times=None,
    cv_ids=(0,),
) -> tuple:
    """Scenario whose ground truths come from the chain geometry itself.

    ``w_star`` is either a single wave speed or one value per inter-vehicle
    gap (gap g sits between platoon positions g and g+1). Every vehicle's
    truth is its own forward chain, so calibrating a probe against it has a
    zero-error solution at the constructing wave speed. Returns the scenario
    plus a trace of the exact values used.
    """
    if n_vehicles < 2:
        raise GenerationError("need at least two vehicles")
    speeds = np.asarray(detector_speeds, dtype=float)
    if speeds.size != n_vehicles:
        raise GenerationError("need one detector speed per vehicle")
    if np.any(speeds <= 0):
        raise GenerationError("detector speeds must be positive")
    if arrival_times is None:
        arrivals = headway * np.arange(n_vehicles, dtype=float)
    else:
        arrivals = np.asarray(arrival_times, dtype=float)
        if arrivals.size != n_vehicles or np.any(np.diff(arrivals) <= 0):
            raise GenerationError("arrival times must be strictly increasing, one per vehicle")
    w_per_gap = np.broadcast_to(
        np.asarray(w_star, dtype=float), (n_vehicles - 1,)
    ).copy()
    if np.any(w_per_gap <= 0):
        raise GenerationError("wave speeds must be positive")
    records = tuple(
        DetectorRecord(i, float(arrivals[i]), float(speeds[i]))
        for i in range(n_vehicles)
    )
    chains: dict = {}
    ground_truth: dict = {}
    end_time = float(arrivals[-1])
    for i in range(n_vehicles - 1):
        chain = _forward_chain(records, i, w_per_gap, x0)
        chains[i] = chain
        ground_truth[i] = Trajectory.from_points(i, [
            _as_point(p) for p in chain
        ])
        end_time = max(end_time, chain[-1].time)
    # The last vehicle has no followers; extend it as a straight line so its
    # truth is still a usable two-point trajectory.
    tail = records[-1]
    tail_end = end_time + headway
    ground_truth[n_vehicles - 1] = Trajectory(
        n_vehicles - 1,
        np.array([tail.arrival_time, tail_end]),
        np.array([x0, x0 + tail.speed * (tail_end - tail.arrival_time)]),
        np.array([tail.speed, tail.speed]),
    )
    scenario = Scenario(
        detector_position=x0,
        records=records,
        cv_ids=tuple(cv_ids),
        ground_truth=ground_truth,
        end_time=tail_end,
    )
    trace = GenerationTrace(w_per_gap, speeds, arrivals, chains)
    return scenario, trace


def _as_point(p: ReferencePoint) -> TrajectoryPoint:
    return TrajectoryPoint(p.time, p.position, p.segment_speed)


def _idm_accel(idm: IdmParams, v, gap, dv):
    s_star = idm.min_gap + np.maximum(
        0.0,
        v * idm.time_headway
        + v * dv / (2.0 * math.sqrt(idm.max_accel * idm.comfortable_decel)),
    )
    return idm.max_accel * (1.0 - (v / idm.desired_speed) ** 4 - (s_star / gap) ** 2)


def equilibrium_gap(idm: IdmParams, speed: float) -> float:
    """Gap at which a vehicle holding ``speed`` has exactly zero acceleration."""
    if not 0 < speed < idm.desired_speed:
        raise ValueError("speed must be in (0, desired_speed)")
    s_star = idm.min_gap + speed * idm.time_headway
    return s_star / math.sqrt(1.0 - (speed / idm.desired_speed) ** 4)


def _lead_speed(t: float, cfg: SynthConfig) -> float:
    p = cfg.perturbation
    low = max(0.0, cfg.initial_speed - p.speed_drop)
    if t < p.time:
        return cfg.initial_speed
    if t < p.time + p.hold:
        return low
    return min(cfg.initial_speed, low + cfg.idm.max_accel * (t - p.time - p.hold))


def synth_idm(config: SynthConfig) -> Scenario:
    """Car-following platoon crossing the detector, with one stop-and-go wave.

    Vehicles start upstream at the equilibrium gap for ``initial_speed``; the
    lead vehicle follows a prescribed speed profile (cruise, drop, recover)
    and everyone else follows by the IDM rule. Vehicles that never cross the
    detector within the horizon are dropped with a log message. The seed only
    drives probe selection; the dynamics are deterministic.
    """
    n = config.vehicle_count
    if n < 2:
        raise GenerationError("need at least two vehicles")
    if config.duration <= 0 or config.dt <= 0:
        raise GenerationError("duration and dt must be positive")
    idm = config.idm
    if not 0 < config.initial_speed < idm.desired_speed:
        raise GenerationError("initial_speed must be below the desired speed")
    gap0 = equilibrium_gap(idm, config.initial_speed)
    steps = int(round(config.duration / config.dt)) + 1
    times = config.dt * np.arange(steps)
    pos = np.empty((steps, n))
    spd = np.empty((steps, n))
    pos[0] = -5.0 - gap0 * np.arange(n)
    spd[0] = config.initial_speed
    for s in range(1, steps):
        t = float(times[s])
        v_prev = spd[s - 1]
        x_prev = pos[s - 1]
        v_lead = _lead_speed(t, config)
        gaps = x_prev[:-1] - x_prev[1:]
        if np.any(gaps <= 0):
            bad = int(np.argmax(gaps <= 0)) + 1
            raise GenerationError(f"vehicle {bad} collided at t={t:.1f}s")
        accel = _idm_accel(idm, v_prev[1:], gaps, v_prev[1:] - v_prev[:-1])
        v_new = np.maximum(0.0, v_prev[1:] + accel * config.dt)
        spd[s, 0] = v_lead
        spd[s, 1:] = v_new
        pos[s, 0] = x_prev[0] + v_lead * config.dt
        pos[s, 1:] = x_prev[1:] + v_new * config.dt
    trajectories = [
        Trajectory(i, times, pos[:, i].copy(), spd[:, i].copy()) for i in range(n)
    ]
    records, truths = extract_detector(trajectories, 0.0)
    if len(records) < 2:
        raise GenerationError("fewer than two vehicles crossed the detector")
    rng = np.random.default_rng(config.seed)
    ordered = [r.vehicle_id for r in sorted(records, key=lambda r: (r.arrival_time, r.vehicle_id))]
    cv_ids = select_cvs(ordered, config.penetration, config.cv_policy, rng)
    return Scenario(
        detector_position=0.0,
        records=tuple(sorted(records, key=lambda r: (r.arrival_time, r.vehicle_id))),
        cv_ids=cv_ids,
        ground_truth=truths,
        end_time=float(config.duration),
    )


def extract_detector(trajectories, x0: float) -> tuple:
    """Virtual loop at ``x0``: crossing records plus truths trimmed to start there.

    Crossing time and speed are linearly interpolated. Vehicles that never
    reach the detector are excluded and reported. Returns ``(records, truths)``
    where each trimmed truth starts exactly at ``(crossing_time, x0)``.
    """
    records: list = []
    truths: dict = {}
    for traj in trajectories:
        p = traj.positions
        if p.size < 2 or p[-1] < x0 or p[0] > x0:
            if p.size and p[-1] < x0:
                log.warning("vehicle %s never crossed the detector; dropped", traj.vehicle_id)
            elif p.size:
                log.warning("vehicle %s started past the detector; dropped", traj.vehicle_id)
            continue
        t_cross = traj.time_at_position(x0)
        v_cross = float(traj.speed_at(t_cross))
        if v_cross <= 0:
            log.warning("vehicle %s crossed the detector stopped; dropped", traj.vehicle_id)
            continue
        keep = traj.times > t_cross
        records.append(DetectorRecord(traj.vehicle_id, float(t_cross), v_cross))
        truths[traj.vehicle_id] = Trajectory(
            traj.vehicle_id,
            np.concatenate(([t_cross], traj.times[keep])),
            np.concatenate(([x0], traj.positions[keep])),
            np.concatenate(([v_cross], traj.speeds[keep])),
        )
    records.sort(key=lambda r: (r.arrival_time, r.vehicle_id))
    return records, truths


def has_shockwave(
    scenario: Scenario, std_threshold: float = 2.0, range_threshold: float = 5.0
) -> bool:
    """Coarse screen: does this scenario carry a wave worth calibrating?

    True when the per-vehicle mean speeds spread widely, or any single vehicle
    sweeps a large speed range.
    """
    means = []
    for traj in scenario.ground_truth.values():
        if len(traj) < 2:
            continue
        means.append(float(np.mean(traj.speeds)))
        if float(np.ptp(traj.speeds)) > range_threshold:
            return True
    return len(means) >= 2 and float(np.std(means)) > std_threshold


# ---------------------------------------------------------------------------
# NGSIM-style field data


def load_ngsim(path: str, lane: int) -> Scenario:
    """Scenario from an NGSIM-style trajectory CSV, one lane at a time.

    Needs the columns Vehicle_ID, Frame_ID, Lane_ID, Local_Y (feet) and v_Vel
    (feet/s); anything else is ignored. Frames tick at 0.1 s. Vehicles that
    appear in more than one lane anywhere in the file (lane changers) are
    removed. The detector lands at the smallest position every retained
    vehicle has samples at.
    """
    lanes_seen: dict = {}
    rows: dict = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ParseError(f"{path}: empty file")
        missing = [c for c in NGSIM_COLUMNS if c not in reader.fieldnames]
        if missing:
            raise ParseError(f"{path}: missing columns {missing}")
        for lineno, row in enumerate(reader, start=2):
            try:
                vid = int(row["Vehicle_ID"])
                frame = int(row["Frame_ID"])
                lane_id = int(row["Lane_ID"])
                y = float(row["Local_Y"])
                v = float(row["v_Vel"])
            except (TypeError, ValueError) as exc:
                raise ParseError(f"{path}: line {lineno}: {exc}") from None
            lanes_seen.setdefault(vid, set()).add(lane_id)
            if lane_id == lane:
                rows.setdefault(vid, []).append((frame, y, v))
    keep = {vid for vid, ls in lanes_seen.items() if ls == {lane} and vid in rows}
    dropped = sorted(set(rows) - keep)
    if dropped:
        log.info("dropped %d lane-changing vehicles: %s", len(dropped), dropped)
    if not keep:
        raise EmptyLaneError(f"{path}: no single-lane vehicles in lane {lane}")
    trajectories = []
    for vid in sorted(keep):
        samples = sorted(rows[vid])
        frames = np.array([s[0] for s in samples], dtype=float)
        trajectories.append(
            Trajectory(
                vid,
                frames * NGSIM_FRAME_PERIOD,
                np.array([s[1] for s in samples]) * FEET,
                np.array([s[2] for s in samples]) * FEET,
            )
        )
    x0 = max(float(t.positions.min()) for t in trajectories)
    records, truths = extract_detector(trajectories, x0)
    if len(records) < 2:
        raise EmptyLaneError(f"{path}: fewer than two vehicles cross the detector")
    end_time = max(float(t.times[-1]) for t in truths.values())
    return Scenario(
        detector_position=x0,
        records=tuple(records),
        cv_ids=(),
        ground_truth=truths,
        end_time=end_time,
    )


# ---------------------------------------------------------------------------
# persistence

def _write_json(path: str, payload: dict) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        json.dump(payload, fh, indent=1)
        fh.write("\n")
    os.replace(tmp, path)


def _read_json(path: str, kind: str) -> dict:
    try:
        with open(path) as fh:
            payload = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from None
    if not isinstance(payload, dict) or payload.get("kind") != kind:
        raise ParseError(f"{path}: not a {kind} document")
    if payload.get("format_version") != FORMAT_VERSION:
        raise ParseError(
            f"{path}: format_version {payload.get('format_version')!r}, "
            f"expected {FORMAT_VERSION}"
        )
    return payload


def save_scenario(path: str, scenario: Scenario) -> None:
    _write_json(
        path,
        {
            "format_version": FORMAT_VERSION,
            "kind": "scenario",
            "detector_position": scenario.detector_position,
            "end_time": scenario.end_time,
            "cv_ids": list(scenario.cv_ids),
            "records": [
                {"vehicle_id": r.vehicle_id, "arrival_time": r.arrival_time, "speed": r.speed}
                for r in scenario.records
            ],
            "ground_truth": {
                str(vid): {
                    "times": scenario.ground_truth[vid].times.tolist(),
                    "positions": scenario.ground_truth[vid].positions.tolist(),
                    "speeds": scenario.ground_truth[vid].speeds.tolist(),
                }
                for vid in sorted(scenario.ground_truth)
            },
        },
    )


def load_scenario(path: str) -> Scenario:
    doc = _read_json(path, "scenario")
    try:
        records = tuple(
            DetectorRecord(int(r["vehicle_id"]), float(r["arrival_time"]), float(r["speed"]))
            for r in doc["records"]
        )
        truths = {
            int(vid): Trajectory(
                int(vid),
                np.asarray(t["times"], dtype=float),
                np.asarray(t["positions"], dtype=float),
                np.asarray(t["speeds"], dtype=float),
            )
            for vid, t in doc["ground_truth"].items()
        }
        return Scenario(
            detector_position=float(doc["detector_position"]),
            records=records,
            cv_ids=tuple(int(i) for i in doc["cv_ids"]),
            ground_truth=truths,
            end_time=float(doc["end_time"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"{path}: malformed scenario: {exc}") from None


def save_profiles(path: str, profiles) -> None:
    _write_json(
        path,
        {
            "format_version": FORMAT_VERSION,
            "kind": "profiles",
            "profiles": [
                {
                    "cv_id": p.cv_id,
                    "steps": [asdict(s) for s in p.steps],
                }
                for p in sorted(profiles, key=lambda p: p.cv_id)
            ],
        },
    )


def load_profiles(path: str) -> list:
    doc = _read_json(path, "profiles")
    try:
        return [
            ShockwaveSpeedProfile(
                int(p["cv_id"]),
                tuple(CalibratedStep(**s) for s in p["steps"]),
            )
            for p in doc["profiles"]
        ]
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"{path}: malformed profiles: {exc}") from None


def save_reference_points(path: str, chains: dict) -> None:
    """Persist chains as {cv_id: {ncv_id: [points]}}."""
    _write_json(
        path,
        {
            "format_version": FORMAT_VERSION,
            "kind": "reference_points",
            "chains": {
                str(cv): {
                    str(ncv): [asdict(p) for p in pts]
                    for ncv, pts in sorted(group.items())
                }
                for cv, group in sorted(chains.items())
            },
        },
    )


def load_reference_points(path: str) -> dict:
    doc = _read_json(path, "reference_points")
    try:
        return {
            int(cv): {
                int(ncv): [ReferencePoint(**p) for p in pts]
                for ncv, pts in group.items()
            }
            for cv, group in doc["chains"].items()
        }
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"{path}: malformed reference points: {exc}") from None


def save_report(path: str, report: EvaluationReport) -> None:
    _write_json(
        path,
        {
            "format_version": FORMAT_VERSION,
            "kind": "report",
            "aggregate": {
                "mae_speed": report.mae_speed,
                "mae_headway": report.mae_headway,
                "mae_fuel": report.mae_fuel,
                "mae_co2": report.mae_co2,
                "overlap_ratio": report.overlap_ratio,
            },
            "per_vehicle": {
                str(vid): asdict(vm) for vid, vm in sorted(report.per_vehicle.items())
            },
            "st_areas": {str(cv): a for cv, a in sorted(report.st_areas.items())},
            "information": {str(cv): n for cv, n in sorted(report.information.items())},
        },
    )


def load_report(path: str) -> EvaluationReport:
    doc = _read_json(path, "report")
    try:
        agg = doc["aggregate"]
        return EvaluationReport(
            mae_speed=agg["mae_speed"],
            mae_headway=agg["mae_headway"],
            mae_fuel=agg["mae_fuel"],
            mae_co2=agg["mae_co2"],
            overlap_ratio=agg["overlap_ratio"],
            per_vehicle={
                int(vid): VehicleMetrics(**vm) for vid, vm in doc["per_vehicle"].items()
            },
            st_areas={int(cv): a for cv, a in doc["st_areas"].items()},
            information={int(cv): n for cv, n in doc["information"].items()},
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"{path}: malformed report: {exc}") from None


def export_trajectories_csv(path: str, trajectories) -> None:
    """Plot-friendly CSV: vehicle_id, time_s, position_m, speed_mps."""
    tmp = f"{path}.tmp"
    with open(tmp, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["vehicle_id", "time_s", "position_m", "speed_mps"])
        for traj in sorted(trajectories, key=lambda t: t.vehicle_id):
            for i in range(len(traj)):
                writer.writerow(
                    [
                        traj.vehicle_id,
                        repr(float(traj.times[i])),
                        repr(float(traj.positions[i])),
                        repr(float(traj.speeds[i])),
                    ]
                )
    os.replace(tmp, path)


def load_trajectories_csv(path: str) -> dict:
    out: dict = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for lineno, row in enumerate(reader, start=2):
            try:
                vid = int(row["vehicle_id"])
                out.setdefault(vid, []).append(
                    (float(row["time_s"]), float(row["position_m"]), float(row["speed_mps"]))
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise ParseError(f"{path}: line {lineno}: {exc}") from None
    return {
        vid: Trajectory(
            vid,
            np.array([s[0] for s in samples]),
            np.array([s[1] for s in samples]),
            np.array([s[2] for s in samples]),
        )
        for vid, samples in out.items()
    }


# ---------------------------------------------------------------------------
# configuration document


@dataclass(frozen=True)
class PipelineConfig:
    calibration: CalibrationConfig = field(default_factory=CalibrationConfig)
    reconstruction: ReconstructionConfig = field(default_factory=ReconstructionConfig)
    vehicle: VehicleParams = field(default_factory=VehicleParams)
    fuel: FuelParams = field(default_factory=FuelParams)
    synth: SynthConfig = field(default_factory=SynthConfig)


def _merge(instance, overrides: dict, path: str, section: str):
    known = {f for f in instance.__dataclass_fields__}
    unknown = set(overrides) - known
    if unknown:
        raise ParseError(f"{path}: unknown keys in [{section}]: {sorted(unknown)}")
    try:
        return replace(instance, **overrides)
    except (TypeError, ValueError) as exc:
        raise ParseError(f"{path}: invalid [{section}]: {exc}") from None


def load_config(path: str) -> PipelineConfig:
    """Configuration document with per-section overrides of the defaults."""
    doc = _read_json(path, "config")
    cfg = PipelineConfig()
    sections = dict(doc)
    sections.pop("format_version", None)
    sections.pop("kind", None)
    known = {"calibration", "reconstruction", "vehicle", "fuel", "synth"}
    unknown = set(sections) - known
    if unknown:
        raise ParseError(f"{path}: unknown sections {sorted(unknown)}")
    out = {}
    for name in known:
        overrides = dict(sections.get(name, {}))
        base = getattr(cfg, name)
        if name == "synth":
            if "fd" in overrides:
                fd = overrides.pop("fd")
                try:
                    base = replace(base, fd=FundamentalDiagram(**fd))
                except (TypeError, ValueError) as exc:
                    raise ParseError(f"{path}: invalid [synth.fd]: {exc}") from None
            if "idm" in overrides:
                base = replace(base, idm=_merge(base.idm, overrides.pop("idm"), path, "synth.idm"))
            if "perturbation" in overrides:
                base = replace(
                    base,
                    perturbation=_merge(
                        base.perturbation, overrides.pop("perturbation"), path, "synth.perturbation"
                    ),
                )
        out[name] = _merge(base, overrides, path, name)
    return PipelineConfig(**out)


def save_config(path: str, cfg: PipelineConfig) -> None:
    payload = {
        "format_version": FORMAT_VERSION,
        "kind": "config",
        "calibration": asdict(cfg.calibration),
        "reconstruction": asdict(cfg.reconstruction),
        "vehicle": asdict(cfg.vehicle),
        "fuel": asdict(cfg.fuel),
        "synth": asdict(cfg.synth),
    }
    _write_json(path, payload)
