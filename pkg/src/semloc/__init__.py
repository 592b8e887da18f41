"""Semantic Monte Carlo localization for quasi-static planar worlds."""

from .depth import (
    BeamModelParams,
    BeamScan,
    beam_likelihood,
    depth_log_likelihood,
    scan_from_depth,
)
from .geometry import Pose, wrap_angle
from .mcl import (
    FilterConfig,
    OdometryDelta,
    ParticleSet,
    StepDiagnostics,
    WorldMaps,
    effective_sample_size,
    estimate_pose,
    init_global,
    motion_update,
    resample,
    step,
)
from .metrics import ate_rmse, detect_convergence, trial_success
from .semantics import (
    InsufficientSemanticsError,
    SemanticVector,
    SimilarityWeights,
    build_semantic_vector,
    jsd,
    similarity,
)
from .sim import (
    SimConfig,
    SimFrame,
    WorldSpec,
    aisle_waypoints,
    build_world,
    load_frames_jsonl,
    perturb_world,
    save_frames_jsonl,
    simulate_trajectory,
)
from .viewbank import (
    PoseGridSpec,
    SemanticViewBank,
    candidates_for,
    load_bank_json,
    precompute_bank,
    save_bank_json,
    top_k_poses,
)
from .world import (
    FREE,
    OCCUPIED,
    UNKNOWN,
    CameraModel,
    OccupancyGrid,
    SemanticVoxelGrid,
    expected_semantic_view,
    insert_detection,
    load_map_json,
    pixel_to_world,
    ray_cast,
    ray_cast_batch,
    save_map_json,
    snap_to_occupied,
)

__all__ = [
    "BeamModelParams", "BeamScan", "beam_likelihood", "depth_log_likelihood",
    "scan_from_depth",
    "Pose", "wrap_angle",
    "FilterConfig", "OdometryDelta", "ParticleSet", "StepDiagnostics",
    "WorldMaps", "effective_sample_size", "estimate_pose", "init_global",
    "motion_update", "resample", "step",
    "ate_rmse", "detect_convergence", "trial_success",
    "InsufficientSemanticsError", "SemanticVector", "SimilarityWeights",
    "build_semantic_vector", "jsd", "similarity",
    "SimConfig", "SimFrame", "WorldSpec", "aisle_waypoints", "build_world",
    "load_frames_jsonl", "perturb_world", "save_frames_jsonl",
    "simulate_trajectory",
    "PoseGridSpec", "SemanticViewBank", "candidates_for", "load_bank_json",
    "precompute_bank", "save_bank_json", "top_k_poses",
    "FREE", "OCCUPIED", "UNKNOWN", "CameraModel", "OccupancyGrid",
    "SemanticVoxelGrid", "expected_semantic_view", "insert_detection",
    "load_map_json", "pixel_to_world", "ray_cast", "ray_cast_batch",
    "save_map_json", "snap_to_occupied",
]
