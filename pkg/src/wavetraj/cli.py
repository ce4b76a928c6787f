"""Command-line pipeline: synth, calibrate, reconstruct, evaluate.

Every subcommand writes its artifacts plus a run manifest into ``--out``.
With a fixed seed and fixed inputs the data artifacts are byte-identical
across invocations; the manifest additionally records wall-clock duration.

Exit codes: 0 success, 2 invalid input or configuration, 3 valid input from
which nothing could be produced.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import __version__
from .calibration import CalibrationConfig, calibrate_cv
from .data_io import (
    FORMAT_VERSION,
    PipelineConfig,
    export_trajectories_csv,
    load_config,
    load_profiles,
    load_reference_points,
    load_scenario,
    load_trajectories_csv,
    save_profiles,
    save_reference_points,
    save_report,
    save_scenario,
    select_cvs,
    synth_idm,
)
from .dynamics import desired_speed_series, fit_polynomial, simulate_follow
from .errors import (
    BeyondCoverageError,
    EmptyProfileError,
    GenerationError,
    NoLeadingCvError,
    ParseError,
    StepTruncated,
    WavetrajError,
)
from .geometry import NoFollowersError, reconstruct_constant_w
from .metrics import evaluate_reconstruction, information_amount
from .model import Scenario, Trajectory, validate_scenario
from .reconstruction import (
    ReconstructionConfig,
    assign_leading_cv,
    reference_points,
)

SMOOTHERS = ("mfc", "poly", "none")

# The dynamics-constrained smoother stands in for an optimizing controller,
# so its speed target is low-passed over this window before tracking;
# following the raw segment steps would keep every chain kink in the output.
# The width sits well below stop-and-go periods (tens of seconds).
MFC_WINDOW_S = 3.0

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_EMPTY = 3


@dataclass
class RunManifest:
    subcommand: str
    inputs: list
    config: str | None
    seed: int | None
    out_dir: str
    outputs: list
    duration_s: float = 0.0

    def write(self, path: str) -> None:
        payload = {
            "format_version": FORMAT_VERSION,
            "kind": "manifest",
            "subcommand": self.subcommand,
            "inputs": self.inputs,
            "config": self.config,
            "seed": self.seed,
            "out_dir": self.out_dir,
            "tool_version": __version__,
            "duration_s": self.duration_s,
            "outputs": self.outputs,
        }
        tmp = f"{path}.tmp"
        with open(tmp, "w") as fh:
            json.dump(payload, fh, indent=1)
            fh.write("\n")
        os.replace(tmp, path)


def _load_pipeline_config(path: str | None) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    return load_config(path)


def chain_to_trajectory(points, vehicle_id: int) -> Trajectory:
    return Trajectory(
        vehicle_id,
        np.array([p.time for p in points]),
        np.array([p.position for p in points]),
        np.array([p.segment_speed for p in points]),
    )


def _lowpass(values: np.ndarray, dt: float, window_s: float) -> np.ndarray:
    """Centered moving average with edge padding; output length is preserved."""
    width = int(round(window_s / dt))
    if width <= 1 or values.size < 3:
        return values
    if width % 2 == 0:
        width += 1
    width = min(width, values.size if values.size % 2 == 1 else values.size - 1)
    half = width // 2
    padded = np.pad(values, half, mode="edge")
    kernel = np.full(width, 1.0 / width)
    return np.convolve(padded, kernel, mode="valid")


def smooth_chain(points, smoother: str, cfg: PipelineConfig, dt: float, vehicle_id: int) -> Trajectory:
    """Turn a reference-point chain into an output trajectory."""
    if smoother == "none":
        return chain_to_trajectory(points, vehicle_id)
    if smoother == "poly":
        degree = min(5, len(points) - 1)
        return fit_polynomial(points, degree, dt=dt, vehicle_id=vehicle_id)
    desired = _lowpass(desired_speed_series(points, dt), dt, MFC_WINDOW_S)
    # Starting on the filtered target avoids a spurious correction pulse.
    start = (points[0].time, points[0].position, float(desired[0]))
    return simulate_follow(desired, start, cfg.vehicle, dt, vehicle_id=vehicle_id)


def _calibrate_one(args):
    scenario, cv_id, config = args
    try:
        return cv_id, calibrate_cv(scenario, cv_id, config), None
    except (EmptyProfileError, StepTruncated) as exc:
        return cv_id, None, str(exc)


def calibrate_all(scenario: Scenario, config: CalibrationConfig, workers: int = 1) -> list:
    """Profiles for every CV that has ground truth and at least one step."""
    jobs = []
    skipped = []
    for cv_id in scenario.cv_ids:
        if cv_id not in scenario.ground_truth:
            skipped.append((cv_id, "no ground truth"))
            continue
        jobs.append((scenario, cv_id, config))
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_calibrate_one, jobs))
    else:
        results = [_calibrate_one(job) for job in jobs]
    profiles = []
    for cv_id, profile, reason in results:
        if profile is not None and profile.steps:
            profiles.append(profile)
        else:
            skipped.append((cv_id, reason or "no calibrated steps"))
    for cv_id, reason in skipped:
        print(f"skipping CV {cv_id}: {reason}", file=sys.stderr)
    profiles.sort(key=lambda p: p.cv_id)
    return profiles


def reconstruct_all(
    scenario: Scenario,
    profiles: list,
    cfg: PipelineConfig,
    smoother: str,
    dt: float,
):
    """Chains and smoothed trajectories for every non-CV vehicle.

    Returns ``(chains, trajectories, unreconstructed)`` where chains maps
    cv_id -> {ncv_id: points} and unreconstructed lists (ncv_id, reason).
    """
    by_cv = {p.cv_id: p for p in profiles}
    chains: dict = {}
    trajectories: dict = {}
    unreconstructed: list = []
    cvs = set(scenario.cv_ids)
    for vid in scenario.vehicle_ids:
        if vid in cvs:
            continue
        try:
            assignment = assign_leading_cv(scenario, vid)
        except NoLeadingCvError as exc:
            unreconstructed.append((vid, str(exc)))
            continue
        profile = by_cv.get(assignment.cv_id)
        if profile is None:
            raise EmptyProfileError(
                f"vehicle {vid} is assigned to CV {assignment.cv_id}, "
                "which has no profile"
            )
        try:
            pts = reference_points(scenario, assignment, profile, cfg.reconstruction)
        except BeyondCoverageError as exc:
            unreconstructed.append((vid, str(exc)))
            continue
        if len(pts) < 2:
            unreconstructed.append((vid, "chain never left the detector"))
            continue
        chains.setdefault(assignment.cv_id, {})[vid] = pts
        trajectories[vid] = smooth_chain(pts, smoother, cfg, dt, vid)
    return chains, trajectories, unreconstructed


def baseline_trajectories(scenario: Scenario, w: float, vehicle_ids) -> dict:
    """Constant-wave-speed chains for the given vehicles, as raw polylines."""
    out: dict = {}
    for vid in vehicle_ids:
        try:
            pts = reconstruct_constant_w(scenario, vid, w)
        except NoFollowersError:
            continue
        if len(pts) >= 2:
            out[vid] = chain_to_trajectory(pts, vid)
    return out


def run_pipeline(
    scenario: Scenario,
    cfg: PipelineConfig,
    seed: int,
    smoother: str,
    dt: float,
    penetration: float | None = None,
    cv_policy: str = "every-mth",
    workers: int = 1,
):
    """Calibrate and reconstruct one scenario end to end, reseeded.

    When ``penetration`` is given the probe subset is redrawn for this seed;
    otherwise the scenario's own cv_ids are kept.
    """
    if penetration is not None:
        rng = np.random.default_rng(seed)
        cv_ids = select_cvs(scenario.vehicle_ids, penetration, cv_policy, rng)
        scenario = replace(scenario, cv_ids=cv_ids)
    cal = replace(cfg.calibration, rng_seed=seed)
    rec = replace(cfg.reconstruction, rng_seed=seed)
    run_cfg = replace(cfg, calibration=cal, reconstruction=rec)
    profiles = calibrate_all(scenario, cal, workers=workers)
    if not profiles:
        return scenario, [], {}, {}, []
    chains, trajectories, unreconstructed = reconstruct_all(
        scenario, profiles, run_cfg, smoother, dt
    )
    return scenario, profiles, chains, trajectories, unreconstructed


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(args) -> int:
    t0 = time.monotonic()
    cfg = _load_pipeline_config(args.config)
    synth = cfg.synth
    overrides = {}
    if args.vehicles is not None:
        overrides["vehicle_count"] = args.vehicles
    if args.duration is not None:
        overrides["duration"] = args.duration
    if args.penetration is not None:
        overrides["penetration"] = args.penetration
    if args.cv_policy is not None:
        overrides["cv_policy"] = args.cv_policy
    if args.seed is not None:
        overrides["seed"] = args.seed
    if overrides:
        synth = replace(synth, **overrides)
    scenario = synth_idm(synth)
    problems = validate_scenario(scenario)
    if problems:
        raise GenerationError("; ".join(problems))
    os.makedirs(args.out, exist_ok=True)
    out_path = os.path.join(args.out, "scenario.json")
    save_scenario(out_path, scenario)
    print(
        f"wrote {out_path}: {len(scenario.records)} vehicles, "
        f"{len(scenario.cv_ids)} CVs"
    )
    manifest = RunManifest(
        "synth", [], args.config, synth.seed, args.out, ["scenario.json"]
    )
    manifest.duration_s = time.monotonic() - t0
    manifest.write(os.path.join(args.out, "manifest.json"))
    return EXIT_OK


def cmd_calibrate(args) -> int:
    t0 = time.monotonic()
    cfg = _load_pipeline_config(args.config)
    cal = cfg.calibration
    if args.seed is not None:
        cal = replace(cal, rng_seed=args.seed)
    scenario = load_scenario(args.scenario)
    problems = validate_scenario(scenario)
    if problems:
        print("invalid scenario:", "; ".join(problems), file=sys.stderr)
        return EXIT_INVALID
    profiles = calibrate_all(scenario, cal, workers=args.workers)
    if not profiles:
        print("no CV could be calibrated", file=sys.stderr)
        return EXIT_EMPTY
    os.makedirs(args.out, exist_ok=True)
    out_json = os.path.join(args.out, "profiles.json")
    save_profiles(out_json, profiles)
    out_csv = os.path.join(args.out, "calibration_summary.csv")
    header = f"{'cv_id':>6} {'steps':>6} {'mean_w':>8} {'mean_residual':>14} {'info':>5}"
    print(header)
    with open(out_csv, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["cv_id", "steps", "mean_w", "mean_residual", "information"])
        for p in profiles:
            mean_w = float(np.mean(p.shockwave_speeds()))
            mean_res = float(np.mean([s.residual for s in p.steps]))
            info = information_amount(p)
            print(f"{p.cv_id:>6} {len(p.steps):>6} {mean_w:>8.3f} {mean_res:>14.4f} {info:>5}")
            writer.writerow([p.cv_id, len(p.steps), repr(mean_w), repr(mean_res), info])
    manifest = RunManifest(
        "calibrate",
        [args.scenario],
        args.config,
        cal.rng_seed,
        args.out,
        ["profiles.json", "calibration_summary.csv"],
    )
    manifest.duration_s = time.monotonic() - t0
    manifest.write(os.path.join(args.out, "manifest.json"))
    return EXIT_OK


def cmd_reconstruct(args) -> int:
    t0 = time.monotonic()
    cfg = _load_pipeline_config(args.config)
    rec = cfg.reconstruction
    if args.seed is not None:
        rec = replace(rec, rng_seed=args.seed)
    if args.sigma is not None:
        rec = replace(rec, speed_sigma=args.sigma)
    rec = replace(rec, w_index_policy=args.w_index_policy)
    cfg = replace(cfg, reconstruction=rec)
    scenario = load_scenario(args.scenario)
    profiles = load_profiles(args.profiles)
    try:
        chains, trajectories, unreconstructed = reconstruct_all(
            scenario, profiles, cfg, args.smoother, args.dt
        )
    except EmptyProfileError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_EMPTY
    if not trajectories:
        print("no vehicle could be reconstructed", file=sys.stderr)
        return EXIT_EMPTY
    os.makedirs(args.out, exist_ok=True)
    out_csv = os.path.join(args.out, "reconstructed.csv")
    export_trajectories_csv(out_csv, trajectories.values())
    out_pts = os.path.join(args.out, "reference_points.json")
    save_reference_points(out_pts, chains)
    out_missing = os.path.join(args.out, "unreconstructed.csv")
    with open(out_missing, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["vehicle_id", "reason"])
        for vid, reason in sorted(unreconstructed):
            writer.writerow([vid, reason])
    print(
        f"reconstructed {len(trajectories)} vehicles "
        f"({len(unreconstructed)} unreconstructed)"
    )
    manifest = RunManifest(
        "reconstruct",
        [args.scenario, args.profiles],
        args.config,
        rec.rng_seed,
        args.out,
        ["reconstructed.csv", "reference_points.json", "unreconstructed.csv"],
    )
    manifest.duration_s = time.monotonic() - t0
    manifest.write(os.path.join(args.out, "manifest.json"))
    return EXIT_OK


def _write_svg(path: str, scenario: Scenario, trajectories: dict) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(10, 6))
    for vid, truth in sorted(scenario.ground_truth.items()):
        ax.plot(truth.times, truth.positions, color="0.7", lw=0.8)
    for vid, traj in sorted(trajectories.items()):
        ax.plot(traj.times, traj.positions, lw=1.0)
    ax.axhline(scenario.detector_position, color="k", ls=":", lw=0.8)
    ax.set_xlabel("time (s)")
    ax.set_ylabel("position (m)")
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def cmd_evaluate(args) -> int:
    t0 = time.monotonic()
    cfg = _load_pipeline_config(args.config)
    scenario = load_scenario(args.scenario)
    os.makedirs(args.out, exist_ok=True)
    outputs: list = []
    if args.seeds is not None:
        code = _evaluate_sweep(args, cfg, scenario, outputs)
    else:
        code = _evaluate_single(args, cfg, scenario, outputs)
    if code != EXIT_OK:
        return code
    manifest = RunManifest(
        "evaluate",
        [p for p in [args.scenario, args.reconstructed, args.profiles, args.refpoints] if p],
        args.config,
        args.seed,
        args.out,
        outputs,
    )
    manifest.duration_s = time.monotonic() - t0
    manifest.write(os.path.join(args.out, "manifest.json"))
    return EXIT_OK


def _evaluate_single(args, cfg: PipelineConfig, scenario: Scenario, outputs: list) -> int:
    if args.reconstructed is None:
        print("evaluate needs --reconstructed (or --seeds for a sweep)", file=sys.stderr)
        return EXIT_INVALID
    trajectories = load_trajectories_csv(args.reconstructed)
    if not trajectories:
        print("no trajectories to evaluate", file=sys.stderr)
        return EXIT_EMPTY
    profiles = load_profiles(args.profiles) if args.profiles else None
    refpoints = load_reference_points(args.refpoints) if args.refpoints else None
    report = evaluate_reconstruction(
        scenario,
        trajectories,
        cfg.fuel,
        dt=args.dt,
        profiles=profiles,
        reference_points=refpoints,
        completion_fraction=cfg.reconstruction.completion_fraction,
    )
    path = os.path.join(args.out, "report.json")
    save_report(path, report)
    outputs.append("report.json")
    print(
        f"speed MAE {report.mae_speed:.3f} m/s | headway MAE {report.mae_headway:.3f} s | "
        f"fuel MAE {report.mae_fuel:.3f} L/100km | overlap {report.overlap_ratio:.2f}%"
    )
    if args.svg:
        svg_path = os.path.join(args.out, "trajectories.svg")
        _write_svg(svg_path, scenario, trajectories)
        outputs.append("trajectories.svg")
    return EXIT_OK


def _evaluate_sweep(args, cfg: PipelineConfig, scenario: Scenario, outputs: list) -> int:
    rates = (
        [float(r) for r in args.penetration.split(",")] if args.penetration else [None]
    )
    base_seed = args.seed if args.seed is not None else 0
    rows: list = []
    for rate in rates:
        for s in range(args.seeds):
            seed = base_seed + s
            _, profiles, chains, trajectories, _ = run_pipeline(
                scenario,
                cfg,
                seed,
                args.smoother,
                args.dt,
                penetration=rate,
                workers=args.workers,
            )
            if not trajectories:
                continue
            report = evaluate_reconstruction(
                scenario, trajectories, cfg.fuel, dt=args.dt,
                profiles=profiles, reference_points=chains,
                completion_fraction=cfg.reconstruction.completion_fraction,
            )
            rows.append((rate, seed, "ours", report))
            if args.baseline_w is not None:
                base = baseline_trajectories(scenario, args.baseline_w, trajectories.keys())
                base_report = evaluate_reconstruction(scenario, base, cfg.fuel, dt=args.dt)
                rows.append((rate, seed, "baseline", base_report))
    if not rows:
        print("no seed produced an evaluable reconstruction", file=sys.stderr)
        return EXIT_EMPTY
    seeds_path = os.path.join(args.out, "seeds.csv")
    metrics_of = lambda r: (r.mae_speed, r.mae_headway, r.mae_fuel, r.mae_co2, r.overlap_ratio)
    with open(seeds_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["penetration", "seed", "model", "mae_speed", "mae_headway",
             "mae_fuel", "mae_co2", "overlap_ratio"]
        )
        for rate, seed, model, report in rows:
            writer.writerow(
                [rate if rate is not None else "", seed, model]
                + [repr(v) for v in metrics_of(report)]
            )
    summary_path = os.path.join(args.out, "summary.csv")
    metric_names = ["mae_speed", "mae_headway", "mae_fuel", "mae_co2", "overlap_ratio"]
    with open(summary_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["penetration", "model", "metric", "mean", "std"])
        groups = sorted(
            {(rate, model) for rate, _, model, _ in rows},
            key=lambda g: (g[0] if g[0] is not None else -1.0, g[1]),
        )
        for rate, model in groups:
            sel = [
                metrics_of(r)
                for rr, _, m, r in rows
                if rr == rate and m == model
            ]
            arr = np.array(sel, dtype=float)
            for i, name in enumerate(metric_names):
                col = arr[:, i]
                col = col[np.isfinite(col)]
                if col.size == 0:
                    continue
                writer.writerow(
                    [rate if rate is not None else "", model, name,
                     repr(float(np.mean(col))), repr(float(np.std(col)))]
                )
            print(
                f"penetration={rate} model={model}: "
                f"speed {np.nanmean(arr[:, 0]):.3f} m/s, "
                f"headway {np.nanmean(arr[:, 1]):.3f} s"
            )
    outputs.extend(["seeds.csv", "summary.csv"])
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wavetraj",
        description="Trajectory reconstruction from a loop detector and sparse probes",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a car-following scenario")
    p.add_argument("--vehicles", type=int, default=None)
    p.add_argument("--duration", type=float, default=None)
    p.add_argument("--penetration", type=float, default=None)
    p.add_argument("--cv-policy", choices=("every-mth", "random-block"), default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("calibrate", help="calibrate wave-speed profiles from CVs")
    p.add_argument("--scenario", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("reconstruct", help="reconstruct non-CV trajectories")
    p.add_argument("--scenario", required=True)
    p.add_argument("--profiles", required=True)
    p.add_argument("--smoother", choices=SMOOTHERS, default="mfc")
    p.add_argument("--sigma", type=float, default=None)
    p.add_argument(
        "--w-index-policy", choices=("prose", "algorithm"), default="prose",
        dest="w_index_policy",
    )
    p.add_argument("--dt", type=float, default=0.1)
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("evaluate", help="score reconstructions against ground truth")
    p.add_argument("--scenario", required=True)
    p.add_argument("--reconstructed", default=None)
    p.add_argument("--profiles", default=None)
    p.add_argument("--refpoints", default=None)
    p.add_argument("--seeds", type=int, default=None, help="run a seed sweep in memory")
    p.add_argument("--penetration", default=None, help="comma-separated rates for the sweep")
    p.add_argument("--baseline-w", type=float, default=None, dest="baseline_w")
    p.add_argument("--smoother", choices=SMOOTHERS, default="mfc")
    p.add_argument("--dt", type=float, default=0.1)
    p.add_argument("--svg", action="store_true")
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (ParseError, GenerationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except WavetrajError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_EMPTY


if __name__ == "__main__":
    sys.exit(main())
