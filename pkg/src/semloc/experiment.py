"""Experiment protocol: config loading, trial execution, and aggregation.

A run config is one JSON document with sections {world, camera,
simulator, beam_model, similarity, filter, bank, thresholds, experiment,
paths}. The benchmark protocol sweeps conditions x sequences x trials:
each trial perturbs the live stock against the stale map, simulates a
noisy traversal, runs global localization, and scores convergence,
success, and ATE. Results aggregate per condition plus per-sequence
stability; reports embed the resolved config for provenance.
"""

import csv
import dataclasses
import json
import math
import os
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .depth import BeamModelParams
from .geometry import Pose
from .mcl import FilterConfig, WorldMaps, init_global, step
from .metrics import ate_rmse, detect_convergence, trial_success
from .semantics import SimilarityWeights, build_semantic_vector
from .sim import (
    SimConfig,
    WorldSpec,
    aisle_waypoints,
    build_world,
    interpolate_waypoints,
    occluder_schedule,
    perturb_world,
    save_frames_jsonl,
    simulate_trajectory,
)
from .viewbank import PoseGridSpec, precompute_bank
from .world import CameraModel


@dataclass(frozen=True)
class Thresholds:
    conv_trans: float = 0.4            # m
    conv_rot: float = math.pi / 4      # rad

    def __post_init__(self):
        if self.conv_trans <= 0 or self.conv_rot <= 0:
            raise ValueError("convergence thresholds must be positive")


@dataclass(frozen=True)
class ExperimentConfig:
    conditions: tuple = ("cart", "wearable", "dynamic", "sparse25", "sparse50")
    sequences: int = 4
    trials_per_sequence: int = 5
    seed: int = 1000
    shuffle_fraction: float = 0.2  # stock drift between mapping and runs
    semantic: bool = True
    out_dir: str = None
    targets: tuple = ()

    def __post_init__(self):
        if self.sequences < 1 or self.trials_per_sequence < 1:
            raise ValueError("need at least one sequence and one trial")
        if not 0.0 <= self.shuffle_fraction <= 1.0:
            raise ValueError("shuffle_fraction must lie in [0, 1]")


CONDITION_PRESETS = {
    "cart": {"odom": (0.02, 0.05), "remove": 0.0, "occluder_duty": 0.0},
    "wearable": {"odom": (0.08, 0.15), "remove": 0.0, "occluder_duty": 0.0},
    "dynamic": {"odom": (0.02, 0.05), "remove": 0.0, "occluder_duty": 0.3},
    "sparse25": {"odom": (0.02, 0.05), "remove": 0.25, "occluder_duty": 0.0},
    "sparse50": {"odom": (0.02, 0.05), "remove": 0.5, "occluder_duty": 0.0},
}


@dataclass
class TrialResult:
    """Outcome of one localization trial; ATE is present iff converged."""

    converged: bool
    convergence_time: float = None
    ate_trans: float = None
    ate_rot: float = None
    success: bool = False
    estimates: list = field(default_factory=list)


@dataclass
class RunConfig:
    world: WorldSpec
    cam: CameraModel
    sim: SimConfig
    beam: BeamModelParams
    weights: SimilarityWeights
    filter_cfg: FilterConfig
    bank_spec: PoseGridSpec
    bank_rays: int
    thresholds: Thresholds
    experiment: ExperimentConfig
    paths: dict
    raw: dict


def _tupleize(value):
    if isinstance(value, list):
        return tuple(_tupleize(v) for v in value)
    return value


def _make(cls, data, section, **extra):
    data = {k: _tupleize(v) for k, v in data.items()}
    allowed = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise ValueError(f"config section '{section}' has unknown keys: {unknown}")
    try:
        return cls(**{**data, **extra})
    except (TypeError, ValueError) as exc:
        raise ValueError(f"config section '{section}': {exc}") from exc


def config_from_dict(doc: dict) -> RunConfig:
    """Build all runtime objects from a config document, naming bad fields."""
    known = {"world", "camera", "simulator", "beam_model", "similarity",
             "filter", "bank", "thresholds", "experiment", "paths"}
    unknown = sorted(set(doc) - known)
    if unknown:
        raise ValueError(f"unknown config sections: {unknown}")
    world = _make(WorldSpec, doc.get("world", {}), "world")
    cam = _make(CameraModel, doc.get("camera", {}), "camera")
    sim_cfg = _make(SimConfig, doc.get("simulator", {}), "simulator")
    beam = _make(BeamModelParams, doc.get("beam_model", {}), "beam_model")
    weights = _make(SimilarityWeights, doc.get("similarity", {}), "similarity")
    bank_section = dict(doc.get("bank", {}))
    bank_rays = int(bank_section.pop("n_rays", 20))
    bank_spec = _make(PoseGridSpec, bank_section, "bank")
    filt = _make(FilterConfig, doc.get("filter", {}), "filter",
                 weights=weights, beam=beam)
    thresholds = _make(Thresholds, doc.get("thresholds", {}), "thresholds")
    exp = _make(ExperimentConfig, doc.get("experiment", {}), "experiment")
    paths = dict(doc.get("paths", {}))
    return RunConfig(world=world, cam=cam, sim=sim_cfg, beam=beam,
                     weights=weights, filter_cfg=filt, bank_spec=bank_spec,
                     bank_rays=bank_rays, thresholds=thresholds, experiment=exp,
                     paths=paths, raw=doc)


def load_config(path, overrides=()) -> RunConfig:
    """Load a JSON run config, apply dotted overrides, validate paths."""
    try:
        with open(path) as f:
            doc = json.load(f)
    except OSError as exc:
        raise ValueError(f"cannot read config file '{path}': {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValueError(f"config file '{path}' is not valid JSON: {exc}") from exc
    for item in overrides:
        if "=" not in item:
            raise ValueError(f"override '{item}' must look like section.key=value")
        key, _, raw_val = item.partition("=")
        try:
            value = json.loads(raw_val)
        except json.JSONDecodeError:
            value = raw_val
        node = doc
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ValueError(f"override '{key}' crosses a non-object field")
        node[parts[-1]] = value
    cfg = config_from_dict(doc)
    for name, p in cfg.paths.items():
        if not os.path.exists(p):
            raise ValueError(f"config field paths.{name} refers to a missing file: {p}")
    return cfg


def run_filter(frames, maps: WorldMaps, bank, cfg: FilterConfig, seed: int,
               particles=None):
    """Replay a frame stream through the filter from a global (or given) init.

    Returns (estimates, diagnostics) where estimates is a list of
    (t, Pose) aligned with the frames.
    """
    p = particles if particles is not None else init_global(
        maps.occ, cfg.n_particles, seed)
    rng = np.random.default_rng((seed, 1))
    estimates = []
    diags = []
    for frame in frames:
        z = build_semantic_vector(frame.detections, maps.sem.num_classes)
        p, est, d = step(p, frame.odom, frame.scan, z, bank, maps, cfg, rng)
        estimates.append((frame.t, est))
        diags.append(d)
    return estimates, diags


def score_trial(estimates, frames, thresholds: Thresholds) -> TrialResult:
    gt = [(f.t, f.true_pose) for f in frames]
    conv = detect_convergence(estimates, gt, thresholds.conv_trans,
                              thresholds.conv_rot)
    duration = frames[-1].t if frames[-1].t > 0 else 1e-9
    succ = trial_success(conv, duration)
    result = TrialResult(converged=conv is not None, convergence_time=conv,
                         success=succ, estimates=estimates)
    if conv is not None:
        result.ate_trans, result.ate_rot = ate_rmse(estimates, gt, conv)
    return result


def sequence_waypoints(spec: WorldSpec, s: int):
    """Deterministic per-sequence waypoint template over the aisles."""
    aisle = s % spec.n_aisles
    reverse = (s // spec.n_aisles) % 2 == 1
    margin = 0.8 + 0.15 * ((s // (2 * spec.n_aisles)) % 3)
    return aisle_waypoints(spec, aisle, margin=margin, reverse=reverse)


def trial_seed(exp: ExperimentConfig, cond_idx: int, seq: int, trial: int) -> int:
    return exp.seed + cond_idx * 1_000_000 + seq * 10_000 + trial


def run_experiment(cfg: RunConfig, progress=None) -> dict:
    """Execute the full protocol and aggregate a report.

    The report's "results" subtree is bit-reproducible for fixed seeds;
    "runtime" carries wall-clock throughput and is not.
    """
    exp = cfg.experiment
    for cond in exp.conditions:
        if cond not in CONDITION_PRESETS:
            raise ValueError(f"config field experiment.conditions: unknown "
                             f"condition '{cond}'")
    occ, sem_map = build_world(cfg.world)
    maps = WorldMaps(occ, sem_map, cfg.cam)
    bank = None
    if exp.semantic:
        bank = precompute_bank(occ, sem_map, cfg.cam, cfg.bank_spec,
                               n_rays=cfg.bank_rays)
    filter_cfg = cfg.filter_cfg
    if not exp.semantic:
        filter_cfg = replace(filter_cfg, tau_sim=0.0)

    out_dir = exp.out_dir
    if out_dir:
        os.makedirs(os.path.join(out_dir, "estimates"), exist_ok=True)

    rows = []
    conditions = {}
    total_steps = 0
    step_time = 0.0
    for cond_idx, cond in enumerate(exp.conditions):
        preset = CONDITION_PRESETS[cond]
        trials = []
        per_sequence = {}
        for seq in range(exp.sequences):
            wps = sequence_waypoints(cfg.world, seq)
            duration = (len(interpolate_waypoints(wps, cfg.sim.speed, cfg.sim.dt))
                        - 1) * cfg.sim.dt
            occl = occluder_schedule(duration, preset["occluder_duty"])
            sim_cfg = replace(cfg.sim, odom_sigma_trans=preset["odom"][0],
                              odom_sigma_rot=preset["odom"][1],
                              occluder_intervals=occl)
            for trial in range(exp.trials_per_sequence):
                seed = trial_seed(exp, cond_idx, seq, trial)
                sem_live = perturb_world(sem_map, preset["remove"],
                                         exp.shuffle_fraction, seed)
                live = WorldMaps(occ, sem_live, cfg.cam)
                frames = simulate_trajectory(live, wps, sim_cfg, seed)
                t0 = time.perf_counter()
                estimates, diags = run_filter(frames, maps, bank, filter_cfg,
                                              seed)
                step_time += time.perf_counter() - t0
                total_steps += len(frames)
                result = score_trial(estimates, frames, cfg.thresholds)
                trials.append((seq, trial, result))
                per_sequence.setdefault(seq, []).append(result.success)
                rows.append({
                    "condition": cond,
                    "sequence": seq,
                    "trial": trial,
                    "success": int(result.success),
                    "conv_time_s": result.convergence_time,
                    "ate_m": result.ate_trans,
                    "ate_rad": result.ate_rot,
                })
                if out_dir:
                    path = os.path.join(out_dir, "estimates",
                                        f"{cond}_s{seq}_t{trial}.jsonl")
                    _write_estimates_jsonl(path, estimates, diags)
                if progress:
                    progress(cond, seq, trial, result)
        succ = [r.success for _, _, r in trials]
        conv_ok = [r.convergence_time for _, _, r in trials if r.success]
        ate_ok = [(r.ate_trans, r.ate_rot) for _, _, r in trials if r.success]
        stable = sum(1 for flags in per_sequence.values() if all(flags))
        conditions[cond] = {
            "trials": len(trials),
            "success_rate": float(np.mean(succ)) if succ else 0.0,
            "mean_conv_time_s": float(np.mean(conv_ok)) if conv_ok else None,
            "mean_ate_m": float(np.mean([a for a, _ in ate_ok])) if ate_ok else None,
            "mean_ate_rad": float(np.mean([b for _, b in ate_ok])) if ate_ok else None,
            "stable_sequences": stable,
            "n_sequences": exp.sequences,
        }
    overall = float(np.mean([r["success"] for r in rows])) if rows else 0.0
    report = {
        "results": {
            "semantic": exp.semantic,
            "conditions": conditions,
            "overall_success_rate": overall,
        },
        "runtime": {
            "filter_steps": total_steps,
            "steps_per_s": total_steps / step_time if step_time > 0 else None,
        },
        "config": cfg.raw,
    }
    if out_dir:
        with open(os.path.join(out_dir, "report.json"), "w") as f:
            json.dump(report, f, indent=2)
        write_results_csv(os.path.join(out_dir, "results.csv"), rows)
    report["rows"] = rows
    return report


def _write_estimates_jsonl(path, estimates, diags):
    with open(path, "w") as f:
        for (t, pose), d in zip(estimates, diags):
            f.write(json.dumps({
                "t": t,
                "estimate": [pose.x, pose.y, pose.theta],
                **d.to_dict(),
            }) + "\n")


def write_results_csv(path, rows):
    cols = ["condition", "sequence", "trial", "success", "conv_time_s",
            "ate_m", "ate_rad"]
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=cols)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row[k] for k in cols})


def check_targets(report: dict, targets) -> list:
    """Evaluate min/max targets against dotted metric paths in a report.

    Returns a list of failure strings, empty when all targets hold.
    """
    failures = []
    for t in targets:
        metric = t.get("metric")
        node = report
        try:
            for part in metric.split("."):
                node = node[part]
        except (KeyError, TypeError):
            failures.append(f"target metric '{metric}' not found in report")
            continue
        if node is None:
            failures.append(f"target metric '{metric}' is null")
            continue
        if "min" in t and node < t["min"]:
            failures.append(f"{metric} = {node:.4g} below minimum {t['min']}")
        if "max" in t and node > t["max"]:
            failures.append(f"{metric} = {node:.4g} above maximum {t['max']}")
    return failures
