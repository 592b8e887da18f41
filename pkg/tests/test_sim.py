import math

import numpy as np
import pytest

from semloc import CameraModel, Pose, build_semantic_vector
from semloc.geometry import compose_body_delta
from semloc.mcl import (
    FilterConfig,
    OdometryDelta,
    ParticleSet,
    WorldMaps,
    step,
)
from semloc.depth import BeamModelParams
from semloc.sim import (
    SimConfig,
    WorldSpec,
    aisle_distinct_plan,
    aisle_waypoints,
    build_world,
    identical_plan,
    interpolate_waypoints,
    load_frames_jsonl,
    occluder_schedule,
    perturb_world,
    save_frames_jsonl,
    simulate_trajectory,
    world_layout,
)

CAM = CameraModel()


def noiseless_cfg(**kw):
    kw.setdefault("odom_sigma_trans", 0.0)
    kw.setdefault("odom_sigma_rot", 0.0)
    kw.setdefault("scan_sigma", 0.0)
    kw.setdefault("scan_dropout", 0.0)
    kw.setdefault("range_jitter", 0.0)
    kw.setdefault("bearing_jitter", 0.0)
    kw.setdefault("detector_recall", 1.0)
    kw.setdefault("detector_precision", 1.0)
    return SimConfig(**kw)


def two_aisle_maps(plan=None, seed=7):
    spec = WorldSpec(n_aisles=2, seed=seed, plan=plan)
    occ, sem = build_world(spec)
    return spec, WorldMaps(occ, sem, CAM)


# --- world construction -----------------------------------------------------


def test_identical_aisles_mirror_symmetric_geometry():
    spec = WorldSpec(n_aisles=2, plan=identical_plan(WorldSpec(n_aisles=2)))
    occ, _ = build_world(spec)
    assert (np.flipud(occ.cells) == occ.cells).all()


def test_distinct_plan_symmetric_geometry_asymmetric_semantics():
    spec = WorldSpec(n_aisles=2)
    occ, sem = build_world(spec)
    assert (np.flipud(occ.cells) == occ.cells).all()
    cols = sem.column_counts()
    layout = world_layout(spec)
    # classes seen from aisle 0 vs aisle 1 must be disjoint under the
    # default aisle-distinct plan
    mid = cols.shape[0] // 2
    south = np.nonzero(cols[:mid].sum(axis=(0, 1)))[0]
    north = np.nonzero(cols[mid:].sum(axis=(0, 1)))[0]
    assert len(set(south) & set(north)) == 0
    assert len(south) and len(north)


def test_total_count_matches_plan():
    spec = WorldSpec(n_aisles=2, shelves_per_aisle=3, products_per_shelf=16)
    _, sem = build_world(spec)
    assert sem.total_count() == 2 * 3 * 16


def test_build_world_deterministic():
    spec = WorldSpec(n_aisles=2, seed=13)
    occ1, sem1 = build_world(spec)
    occ2, sem2 = build_world(spec)
    assert (occ1.cells == occ2.cells).all()
    assert sorted(sem1.voxels) == sorted(sem2.voxels)
    for k in sem1.voxels:
        assert (sem1.voxels[k] == sem2.voxels[k]).all()


def test_build_world_rejects_bad_plan():
    spec = WorldSpec(n_aisles=2, plan=((((99, 5),),),) * 2, shelves_per_aisle=1)
    with pytest.raises(ValueError):
        build_world(spec)


def test_products_land_on_shelf_columns():
    spec = WorldSpec(n_aisles=2)
    occ, sem = build_world(spec)
    for (ix, iy, _), hist in sem.voxels.items():
        # every stocked voxel column overlaps occupied shelf cells
        x0 = sem.origin[0] + ix * sem.xy_resolution
        y0 = sem.origin[1] + iy * sem.xy_resolution
        cells = []
        for dx in (0.05, 0.15):
            for dy in (0.05, 0.15):
                if occ.in_bounds_world(x0 + dx, y0 + dy):
                    cells.append(occ.state_at(x0 + dx, y0 + dy))
        assert any(c == 1 for c in cells)


# --- perturbation ------------------------------------------------------------


def test_perturb_identity():
    _, maps = two_aisle_maps()
    out = perturb_world(maps.sem, 0.0, 0.0, seed=3)
    assert out.total_count() == maps.sem.total_count()
    for k, h in maps.sem.voxels.items():
        assert (out.voxels[k] == h).all()


def test_perturb_removal_floor():
    _, maps = two_aisle_maps()
    total = maps.sem.total_count()
    out = perturb_world(maps.sem, 0.5, 0.0, seed=3)
    assert out.total_count() == total - math.floor(0.5 * total)


def test_perturb_shuffle_preserves_total():
    _, maps = two_aisle_maps()
    total = maps.sem.total_count()
    out = perturb_world(maps.sem, 0.0, 0.3, seed=3)
    assert out.total_count() == total


def test_perturb_deterministic():
    _, maps = two_aisle_maps()
    a = perturb_world(maps.sem, 0.25, 0.2, seed=11)
    b = perturb_world(maps.sem, 0.25, 0.2, seed=11)
    assert sorted(a.voxels) == sorted(b.voxels)
    for k in a.voxels:
        assert (a.voxels[k] == b.voxels[k]).all()


def test_perturb_does_not_touch_input():
    _, maps = two_aisle_maps()
    before = maps.sem.total_count()
    perturb_world(maps.sem, 0.9, 0.0, seed=1)
    assert maps.sem.total_count() == before


# --- trajectories and frames -------------------------------------------------


def test_interpolation_constant_speed():
    poses = interpolate_waypoints([Pose(0, 0), Pose(2, 0), Pose(2, 1)], 0.5, 0.1)
    assert len(poses) == 61  # 3 m at 0.05 m per step
    steps = [math.hypot(b.x - a.x, b.y - a.y) for a, b in zip(poses, poses[1:])]
    for s in steps[:-1]:
        assert s == pytest.approx(0.05, abs=1e-9)


def test_noiseless_odometry_integrates_exactly():
    spec, maps = two_aisle_maps()
    frames = simulate_trajectory(maps, aisle_waypoints(spec, 0), noiseless_cfg(),
                                 seed=5)
    pose = frames[0].true_pose
    for fr in frames[1:]:
        pose = compose_body_delta(pose, fr.odom.dx, fr.odom.dy, fr.odom.dtheta)
        assert pose.x == pytest.approx(fr.true_pose.x, abs=1e-9)
        assert pose.y == pytest.approx(fr.true_pose.y, abs=1e-9)
        assert abs(pose.theta - fr.true_pose.theta) < 1e-9


def test_waypoint_outside_free_space_raises():
    spec, maps = two_aisle_maps()
    layout = world_layout(spec)
    y_wall = layout["rows"][0][0] + 0.1
    with pytest.raises(ValueError):
        simulate_trajectory(maps, [Pose(3.0, y_wall), Pose(5.0, y_wall)],
                            noiseless_cfg(), seed=0)


def test_occluder_blanks_sector():
    spec, maps = two_aisle_maps()
    cfg = noiseless_cfg(occluder_intervals=((0.5, 1.5),),
                        occluder_sector=(0.0, 1.2), occluder_range=0.6)
    frames = simulate_trajectory(maps, aisle_waypoints(spec, 0), cfg, seed=5)
    saw_occluded = False
    for fr in frames:
        if 0.5 <= fr.t < 1.5:
            saw_occluded = True
            assert fr.occluded
            for _, _, b in fr.detections:
                assert abs(b) > 0.6  # nothing inside the blanked sector
            in_sector = np.abs(fr.scan.bearings) <= 0.6
            assert (fr.scan.ranges[in_sector] <= 0.6 + 1e-9).all()
        else:
            assert not fr.occluded
    assert saw_occluded


def test_detector_miss_rate_statistics():
    spec, maps = two_aisle_maps()
    out = aisle_waypoints(spec, 0)
    wps = [out[0], out[1], out[0]]  # there and back for more detections
    truth_frames = simulate_trajectory(maps, wps, noiseless_cfg(), seed=9)
    n_truth = sum(len(fr.detections) for fr in truth_frames)
    assert n_truth >= 1000
    cfg = noiseless_cfg(detector_recall=0.77)
    noisy_frames = simulate_trajectory(maps, wps, cfg, seed=9)
    n_seen = sum(len(fr.detections) for fr in noisy_frames)
    misses = n_truth - n_seen
    expect = 0.23 * n_truth
    sigma = math.sqrt(n_truth * 0.23 * 0.77)
    assert abs(misses - expect) <= 3 * sigma


def test_false_positive_rate_statistics():
    spec, maps = two_aisle_maps()
    wps = aisle_waypoints(spec, 0)
    base = simulate_trajectory(maps, wps, noiseless_cfg(), seed=9)
    n_truth = sum(len(fr.detections) for fr in base)
    cfg = noiseless_cfg(detector_precision=0.91)
    frames = simulate_trajectory(maps, wps, cfg, seed=9)
    n_all = sum(len(fr.detections) for fr in frames)
    n_fp = n_all - n_truth
    lam = n_truth * (1 / 0.91 - 1)
    assert abs(n_fp - lam) <= 4 * math.sqrt(lam)


def test_frames_bit_identical_per_seed():
    spec, maps = two_aisle_maps()
    cfg = SimConfig()
    a = simulate_trajectory(maps, aisle_waypoints(spec, 0), cfg, seed=31)
    b = simulate_trajectory(maps, aisle_waypoints(spec, 0), cfg, seed=31)
    for fa, fb in zip(a, b):
        assert fa.true_pose == fb.true_pose
        assert fa.odom == fb.odom
        assert (fa.scan.ranges == fb.scan.ranges).all()
        assert fa.detections == fb.detections
        assert fa.occluded == fb.occluded


def test_teleport_jumps_pose_not_odometry():
    spec, maps = two_aisle_maps()
    cfg = noiseless_cfg(teleports=((20, 0.0, 0.0, math.pi),))
    frames = simulate_trajectory(maps, aisle_waypoints(spec, 0), cfg, seed=2)
    jump = math.hypot(frames[20].true_pose.x - frames[19].true_pose.x,
                      frames[20].true_pose.y - frames[19].true_pose.y)
    assert jump > 1.0
    assert math.hypot(frames[20].odom.dx, frames[20].odom.dy) < 0.2
    # post-teleport odometry remains consistent with the new true track
    pose = frames[20].true_pose
    for fr in frames[21:]:
        pose = compose_body_delta(pose, fr.odom.dx, fr.odom.dy, fr.odom.dtheta)
        assert pose.x == pytest.approx(fr.true_pose.x, abs=1e-9)


def test_teleport_lands_in_free_space_on_symmetric_world():
    spec, maps = two_aisle_maps()
    cfg = noiseless_cfg(teleports=((15, 0.0, 0.0, math.pi),))
    frames = simulate_trajectory(maps, aisle_waypoints(spec, 0), cfg, seed=2)
    for fr in frames[15:]:
        assert maps.occ.is_free(fr.true_pose.x, fr.true_pose.y)


def test_frames_jsonl_round_trip(tmp_path):
    spec, maps = two_aisle_maps()
    frames = simulate_trajectory(maps, aisle_waypoints(spec, 0), SimConfig(),
                                 seed=4)[:20]
    path = tmp_path / "frames.jsonl"
    save_frames_jsonl(path, frames)
    loaded = load_frames_jsonl(path)
    assert len(loaded) == len(frames)
    for fa, fb in zip(frames, loaded):
        assert fa.true_pose == fb.true_pose
        assert fa.odom == fb.odom
        assert (fa.scan.ranges == fb.scan.ranges).all()
        assert fa.detections == fb.detections


def test_occluder_schedule_duty():
    sched = occluder_schedule(9.0, 0.3, period=3.0)
    assert len(sched) == 3
    for (t0, t1), (w0, w1) in zip(sched, [(0.0, 0.9), (3.0, 3.9), (6.0, 6.9)]):
        assert t0 == pytest.approx(w0) and t1 == pytest.approx(w1)
    assert occluder_schedule(5.0, 0.0) == ()


def test_true_detections_consistent_with_map():
    spec, maps = two_aisle_maps()
    frames = simulate_trajectory(maps, aisle_waypoints(spec, 0),
                                 noiseless_cfg(), seed=6)
    cols = maps.sem.column_counts()
    for fr in frames[::7]:
        for c, r, b in fr.detections:
            # project the detection back into the map and find its column
            ang = fr.true_pose.theta + b
            px = fr.true_pose.x + r * math.cos(ang)
            py = fr.true_pose.y + r * math.sin(ang)
            ix = int((px - maps.sem.origin[0]) / maps.sem.xy_resolution)
            iy = int((py - maps.sem.origin[1]) / maps.sem.xy_resolution)
            found = False
            for dx in (-1, 0, 1):
                for dy in (-1, 0, 1):
                    jx, jy = ix + dx, iy + dy
                    if 0 <= jx < maps.sem.nx and 0 <= jy < maps.sem.ny:
                        if cols[jy, jx, c] > 0:
                            found = True
            assert found


# --- noiseless closed loop ----------------------------------------------------


def test_noiseless_closed_loop_tracks():
    spec, maps = two_aisle_maps()
    frames = simulate_trajectory(maps, aisle_waypoints(spec, 0),
                                 noiseless_cfg(), seed=1)
    cfg = FilterConfig(sigma_trans=0.0, sigma_rot=0.0,
                       beam=BeamModelParams(z_max=CAM.max_range))
    n = 60
    start = frames[0].true_pose
    p = ParticleSet(np.tile(start.as_array(), (n, 1)), np.full(n, 1.0 / n))
    rng = np.random.default_rng(0)
    errs = []
    for i, fr in enumerate(frames):
        z = build_semantic_vector(fr.detections, maps.sem.num_classes)
        p, est, _ = step(p, fr.odom, fr.scan, z, None, maps, cfg, rng)
        err = math.hypot(est.x - fr.true_pose.x, est.y - fr.true_pose.y)
        errs.append(err)
        if i >= 5:
            assert err < maps.occ.resolution
    assert max(errs[5:]) < maps.occ.resolution
