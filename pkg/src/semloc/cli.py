"""Command-line interface: simulate, precompute, localize, evaluate, benchmark.

Every subcommand reads the same JSON run config; repeated --set
section.key=value flags override individual config keys. File-based
subcommands exchange the documented map JSON, bank JSON, frame JSONL,
and estimate JSONL formats, so the stages can be run and inspected
independently.
"""

import argparse
import json
import sys

from .experiment import (
    check_targets,
    config_from_dict,
    load_config,
    run_experiment,
    run_filter,
    score_trial,
    sequence_waypoints,
)
from .geometry import Pose
from .mcl import WorldMaps
from .metrics import ate_rmse, detect_convergence, trial_success
from .sim import (
    build_world,
    load_frames_jsonl,
    save_frames_jsonl,
    simulate_trajectory,
)
from .viewbank import load_bank_json, precompute_bank, save_bank_json
from .world import load_map_json, save_map_json


def _add_common(p):
    p.add_argument("--config", required=True, help="JSON run config")
    p.add_argument("--set", dest="overrides", action="append", default=[],
                   metavar="KEY=VALUE", help="override a config key (dotted path)")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="semloc",
        description="Semantic Monte Carlo localization toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="build a world and render a frame log")
    _add_common(p)
    p.add_argument("--sequence", type=int, default=0,
                   help="waypoint template index (default 0)")
    p.add_argument("--seed", type=int, default=None,
                   help="simulation seed (default experiment.seed)")
    p.add_argument("--map-out", required=True, help="world map JSON to write")
    p.add_argument("--frames-out", required=True, help="frame JSONL to write")

    p = sub.add_parser("precompute", help="build the semantic view bank for a map")
    _add_common(p)
    p.add_argument("--map", required=True, help="world map JSON")
    p.add_argument("--bank-out", required=True, help="bank JSON to write")

    p = sub.add_parser("localize", help="run the filter over a recorded frame log")
    _add_common(p)
    p.add_argument("--map", required=True, help="world map JSON")
    p.add_argument("--bank", default=None, help="bank JSON (omit for depth-only)")
    p.add_argument("--frames", required=True, help="frame JSONL")
    p.add_argument("--seed", type=int, default=None,
                   help="filter seed (default experiment.seed)")
    p.add_argument("--estimates-out", required=True, help="estimate JSONL to write")

    p = sub.add_parser("evaluate", help="score an estimate log against ground truth")
    _add_common(p)
    p.add_argument("--frames", required=True, help="frame JSONL with ground truth")
    p.add_argument("--estimates", required=True, help="estimate JSONL")
    p.add_argument("--report-out", default=None, help="metrics JSON to write")

    p = sub.add_parser("benchmark", help="run the full protocol plus ablation")
    _add_common(p)
    p.add_argument("--out-dir", default=None,
                   help="directory for report.json / results.csv / estimates")
    p.add_argument("--skip-ablation", action="store_true",
                   help="run only the semantic configuration")
    return parser


def cmd_simulate(args):
    cfg = load_config(args.config, args.overrides)
    occ, sem = build_world(cfg.world)
    save_map_json(args.map_out, occ, sem)
    wps = sequence_waypoints(cfg.world, args.sequence)
    seed = cfg.experiment.seed if args.seed is None else args.seed
    frames = simulate_trajectory(WorldMaps(occ, sem, cfg.cam), wps, cfg.sim, seed)
    save_frames_jsonl(args.frames_out, frames)
    print(f"wrote {args.map_out} and {len(frames)} frames to {args.frames_out}")
    return 0


def cmd_precompute(args):
    cfg = load_config(args.config, args.overrides)
    occ, sem = load_map_json(args.map)
    bank = precompute_bank(occ, sem, cfg.cam, cfg.bank_spec, n_rays=cfg.bank_rays)
    save_bank_json(args.bank_out, bank)
    print(f"wrote bank with {len(bank)} pose entries to {args.bank_out}")
    return 0


def cmd_localize(args):
    cfg = load_config(args.config, args.overrides)
    occ, sem = load_map_json(args.map)
    bank = load_bank_json(args.bank) if args.bank else None
    frames = load_frames_jsonl(args.frames)
    if not frames:
        print("frame log is empty", file=sys.stderr)
        return 2
    seed = cfg.experiment.seed if args.seed is None else args.seed
    maps = WorldMaps(occ, sem, cfg.cam)
    estimates, diags = run_filter(frames, maps, bank, cfg.filter_cfg, seed)
    with open(args.estimates_out, "w") as f:
        for (t, pose), d in zip(estimates, diags):
            f.write(json.dumps({"t": t,
                                "estimate": [pose.x, pose.y, pose.theta],
                                **d.to_dict()}) + "\n")
    print(f"wrote {len(estimates)} estimates to {args.estimates_out}")
    return 0


def cmd_evaluate(args):
    cfg = load_config(args.config, args.overrides)
    frames = load_frames_jsonl(args.frames)
    estimates = []
    with open(args.estimates) as f:
        for line in f:
            if line.strip():
                d = json.loads(line)
                estimates.append((float(d["t"]), Pose(*d["estimate"])))
    if len(estimates) != len(frames):
        print("estimate log and frame log differ in length", file=sys.stderr)
        return 2
    result = score_trial(estimates, frames, cfg.thresholds)
    duration = frames[-1].t
    report = {
        "duration_s": duration,
        "converged": result.converged,
        "convergence_time_s": result.convergence_time,
        "success": result.success,
        "ate_m": result.ate_trans,
        "ate_rad": result.ate_rot,
    }
    text = json.dumps(report, indent=2)
    print(text)
    if args.report_out:
        with open(args.report_out, "w") as f:
            f.write(text + "\n")
    return 0


def cmd_benchmark(args):
    import dataclasses

    cfg = load_config(args.config, args.overrides)
    if args.out_dir:
        cfg = dataclasses.replace(
            cfg, experiment=dataclasses.replace(cfg.experiment,
                                                out_dir=args.out_dir))
    semantic_report = run_experiment(cfg)
    combined = {"semantic": semantic_report["results"],
                "runtime": semantic_report["runtime"]}
    if not args.skip_ablation:
        ablation_cfg = dataclasses.replace(
            cfg, experiment=dataclasses.replace(
                cfg.experiment, semantic=False,
                out_dir=(args.out_dir + "/ablation") if args.out_dir else None))
        ablation_report = run_experiment(ablation_cfg)
        combined["depth_only"] = ablation_report["results"]
    for name in ("semantic", "depth_only"):
        if name in combined:
            for cond, stats in combined[name]["conditions"].items():
                print(f"{name:10s} {cond:10s} success={stats['success_rate']:.2f} "
                      f"conv={stats['mean_conv_time_s']} "
                      f"stable={stats['stable_sequences']}/{stats['n_sequences']}")
    if combined["runtime"]["steps_per_s"] is not None:
        print(f"throughput: {combined['runtime']['steps_per_s']:.1f} filter steps/s")
    if args.out_dir:
        with open(args.out_dir + "/benchmark.json", "w") as f:
            json.dump(combined, f, indent=2)
    failures = check_targets(combined, cfg.experiment.targets)
    for msg in failures:
        print(f"TARGET FAILED: {msg}", file=sys.stderr)
    return 1 if failures else 0


def main(argv=None):
    args = build_parser().parse_args(argv)
    handlers = {
        "simulate": cmd_simulate,
        "precompute": cmd_precompute,
        "localize": cmd_localize,
        "evaluate": cmd_evaluate,
        "benchmark": cmd_benchmark,
    }
    try:
        return handlers[args.command](args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
