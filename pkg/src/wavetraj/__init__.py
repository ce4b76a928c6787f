"""Reconstruction of vehicle trajectories behind a loop detector.

A small share of connected vehicles report full trajectories; every other
vehicle is known only from its detector crossing.  Backward-moving waves
anchored at the detector carry each connected vehicle's speed history onto
its followers, which yields piecewise-linear trajectories for the rest of
the platoon.  The wave speed itself is calibrated per vehicle and per step
by Monte-Carlo search against the connected vehicle's own trajectory.
"""

from .calibration import (
    CalibratedStep,
    CalibrationConfig,
    ShockwaveSpeedProfile,
    calibrate_cv,
    calibrate_step,
    sample_speeds,
    temporal_error,
)
from .data_io import (
    GenerationTrace,
    IdmParams,
    Perturbation,
    PipelineConfig,
    SynthConfig,
    equilibrium_gap,
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
from .dynamics import (
    FuelParams,
    VehicleParams,
    desired_speed_series,
    estimate_energy,
    fit_polynomial,
    simulate_follow,
)
from .errors import (
    BeyondCoverageError,
    DegenerateSpectrumError,
    EmptyLaneError,
    EmptyProfileError,
    GenerationError,
    InsufficientPointsError,
    NoFollowersError,
    NoLeadingCvError,
    NoOverlapError,
    ParallelLinesError,
    ParseError,
    PositionOutOfRangeError,
    StepTruncated,
    TooShortError,
    WavetrajError,
    ZeroDistanceError,
)
from .geometry import (
    Line,
    ReferencePoint,
    intersect,
    reconstruct_constant_w,
    shockwave_line,
    trajectory_line,
)
from .metrics import (
    EvaluationReport,
    Spectrum,
    StAreaResult,
    VehicleMetrics,
    evaluate_reconstruction,
    information_amount,
    mae,
    overlap_ratio,
    polygon_area,
    speed_spectrum,
    st_area,
)
from .model import (
    DetectorRecord,
    FundamentalDiagram,
    Scenario,
    Trajectory,
    TrajectoryPoint,
    resample_trajectory,
    uniform_grid,
    validate_scenario,
)
from .reconstruction import (
    Assignment,
    ReconstructionConfig,
    assign_leading_cv,
    perturbed_speed,
    reference_points,
)

__version__ = "0.1.0"

__all__ = [
    "Assignment",
    "BeyondCoverageError",
    "CalibratedStep",
    "CalibrationConfig",
    "DegenerateSpectrumError",
    "DetectorRecord",
    "EmptyLaneError",
    "EmptyProfileError",
    "EvaluationReport",
    "FuelParams",
    "FundamentalDiagram",
    "GenerationError",
    "GenerationTrace",
    "IdmParams",
    "InsufficientPointsError",
    "Line",
    "NoFollowersError",
    "NoLeadingCvError",
    "NoOverlapError",
    "ParallelLinesError",
    "ParseError",
    "Perturbation",
    "PipelineConfig",
    "PositionOutOfRangeError",
    "ReconstructionConfig",
    "ReferencePoint",
    "Scenario",
    "ShockwaveSpeedProfile",
    "Spectrum",
    "StAreaResult",
    "StepTruncated",
    "SynthConfig",
    "TooShortError",
    "Trajectory",
    "TrajectoryPoint",
    "VehicleMetrics",
    "VehicleParams",
    "WavetrajError",
    "ZeroDistanceError",
    "assign_leading_cv",
    "calibrate_cv",
    "calibrate_step",
    "desired_speed_series",
    "equilibrium_gap",
    "estimate_energy",
    "evaluate_reconstruction",
    "extract_detector",
    "fit_polynomial",
    "has_shockwave",
    "information_amount",
    "intersect",
    "load_config",
    "load_ngsim",
    "load_profiles",
    "load_reference_points",
    "load_report",
    "load_scenario",
    "load_trajectories_csv",
    "mae",
    "overlap_ratio",
    "perturbed_speed",
    "polygon_area",
    "reconstruct_constant_w",
    "reference_points",
    "resample_trajectory",
    "sample_speeds",
    "save_config",
    "save_profiles",
    "save_reference_points",
    "save_report",
    "save_scenario",
    "select_cvs",
    "shockwave_line",
    "simulate_follow",
    "speed_spectrum",
    "st_area",
    "synth_idm",
    "synth_oracle_constant_w",
    "temporal_error",
    "trajectory_line",
    "uniform_grid",
    "validate_scenario",
]
