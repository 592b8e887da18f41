import math

import numpy as np
import pytest

import worlds
from reference_mcl import plain_mcl_step
from semloc import (
    CameraModel,
    OccupancyGrid,
    Pose,
    build_semantic_vector,
    expected_semantic_view,
    OCCUPIED,
)
from semloc.depth import BeamModelParams, BeamScan
from semloc.mcl import (
    FilterConfig,
    OdometryDelta,
    ParticleSet,
    WorldMaps,
    effective_sample_size,
    estimate_pose,
    init_global,
    motion_update,
    resample,
    step,
)
from semloc.viewbank import PoseGridSpec, precompute_bank
from semloc.world import fan_offsets, ray_cast_batch

CAM = CameraModel(max_range=4.0)


def zero_noise_cfg(**kw):
    kw.setdefault("sigma_trans", 0.0)
    kw.setdefault("sigma_rot", 0.0)
    return FilterConfig(**kw)


def render_scan(occ, pose, k=32, z_max=4.0, fov=CAM.fov):
    bearings = fan_offsets(fov, k)
    origins = np.tile([pose.x, pose.y], (k, 1))
    ranges = ray_cast_batch(occ, origins, pose.theta + bearings, z_max)
    return BeamScan(bearings, ranges, z_max)


# --- init_global ------------------------------------------------------------


def test_init_global_single_free_cell():
    occ = OccupancyGrid(3, 3, resolution=0.1)
    occ.cells[:, :] = OCCUPIED
    occ.cells[1, 1] = 0
    occ.invalidate()
    p = init_global(occ, 200, seed=4)
    assert (p.poses[:, 0] >= 0.1).all() and (p.poses[:, 0] < 0.2).all()
    assert (p.poses[:, 1] >= 0.1).all() and (p.poses[:, 1] < 0.2).all()
    assert p.poses[:, 2].std() > 0.5  # headings spread out


def test_init_global_uniform_weights():
    occ = OccupancyGrid(10, 10, resolution=0.1)
    p = init_global(occ, 64, seed=1)
    assert (p.weights == 1.0 / 64).all()


def test_init_global_deterministic():
    occ = OccupancyGrid(10, 10, resolution=0.1)
    a = init_global(occ, 50, seed=9)
    b = init_global(occ, 50, seed=9)
    assert (a.poses == b.poses).all()


def test_init_global_no_free_space():
    occ = OccupancyGrid(4, 4, resolution=0.1)
    occ.cells[:, :] = OCCUPIED
    occ.invalidate()
    with pytest.raises(ValueError):
        init_global(occ, 10, seed=0)


# --- motion -----------------------------------------------------------------


def test_motion_zero_noise_forward():
    p = ParticleSet(np.array([[0.0, 0.0, 0.0]]), np.array([1.0]))
    rng = np.random.default_rng(0)
    out = motion_update(p, OdometryDelta(1.0, 0.0, 0.0), zero_noise_cfg(), rng)
    assert np.allclose(out.poses[0], [1.0, 0.0, 0.0])


def test_motion_zero_noise_rotated_frame():
    p = ParticleSet(np.array([[0.0, 0.0, math.pi / 2]]), np.array([1.0]))
    rng = np.random.default_rng(0)
    out = motion_update(p, OdometryDelta(1.0, 0.0, 0.0), zero_noise_cfg(), rng)
    assert np.allclose(out.poses[0], [0.0, 1.0, math.pi / 2], atol=1e-12)


def test_motion_identity():
    poses = np.array([[0.4, 1.2, -2.0], [3.0, 0.5, 0.7]])
    p = ParticleSet(poses.copy(), np.full(2, 0.5))
    rng = np.random.default_rng(0)
    out = motion_update(p, OdometryDelta(0.0, 0.0, 0.0), FilterConfig(), rng)
    assert (out.poses == poses).all()
    assert (out.weights == p.weights).all()


def test_motion_noise_scales_with_displacement():
    n = 4000
    p = ParticleSet(np.zeros((n, 3)), np.full(n, 1.0 / n))
    cfg = FilterConfig(sigma_trans=0.1, sigma_rot=0.05)
    big = motion_update(p, OdometryDelta(2.0, 0.0, 0.0), cfg,
                        np.random.default_rng(3))
    small = motion_update(p, OdometryDelta(0.2, 0.0, 0.0), cfg,
                          np.random.default_rng(3))
    assert big.poses[:, 0].std() == pytest.approx(10 * small.poses[:, 0].std(), rel=0.05)


# --- estimate ----------------------------------------------------------------


def test_estimate_identical_particles():
    p = ParticleSet(np.tile([1.0, 2.0, 0.3], (5, 1)), np.full(5, 0.2))
    est = estimate_pose(p)
    assert (est.x, est.y, est.theta) == pytest.approx((1.0, 2.0, 0.3))


def test_estimate_circular_mean_at_seam():
    p = ParticleSet(np.array([[0.0, 0.0, 3.0], [0.0, 0.0, -3.0]]),
                    np.array([0.5, 0.5]))
    est = estimate_pose(p)
    assert abs(est.theta) == pytest.approx(math.pi, abs=1e-9)


def test_estimate_weight_one_particle():
    p = ParticleSet(np.array([[1.0, 1.0, 0.5], [9.0, 9.0, -0.5]]),
                    np.array([1.0, 0.0]))
    est = estimate_pose(p)
    assert (est.x, est.y, est.theta) == (1.0, 1.0, 0.5)


def test_estimate_zero_weights_raises():
    p = ParticleSet(np.zeros((3, 3)), np.zeros(3))
    with pytest.raises(ValueError):
        estimate_pose(p)


def test_estimate_dominated_by_heavy_particle():
    # a 0.97 weight keeps the mean inside the dominant particle's 0.1 m cell
    # even with stragglers 1.5 m away
    poses = np.array([[2.05, 2.05, 0.1], [3.55, 2.05, 2.0], [2.05, 3.55, -2.0]])
    p = ParticleSet(poses, np.array([0.97, 0.015, 0.015]))
    est = estimate_pose(p)
    assert abs(est.x - 2.05) < 0.05
    assert abs(est.y - 2.05) < 0.05


# --- resample ----------------------------------------------------------------


def test_resample_degenerate_weight():
    poses = np.array([[i, 0.0, 0.0] for i in range(6)], dtype=float)
    w = np.zeros(6)
    w[3] = 1.0
    out = resample(ParticleSet(poses, w), np.random.default_rng(2))
    assert (out.poses == poses[3]).all()
    assert (out.weights == 1.0 / 6).all()


def test_resample_uniform_weights_keeps_everyone_once():
    n = 50
    poses = np.stack([np.arange(n), np.zeros(n), np.zeros(n)], axis=1).astype(float)
    out = resample(ParticleSet(poses, np.full(n, 1.0 / n)),
                   np.random.default_rng(7))
    ids, counts = np.unique(out.poses[:, 0], return_counts=True)
    assert len(ids) == n and (counts == 1).all()


def test_resample_copy_counts_within_floor_ceil():
    rng = np.random.default_rng(11)
    n = 200
    for _ in range(10):
        w = rng.random(n)
        w /= w.sum()
        poses = np.stack([np.arange(n), np.zeros(n), np.zeros(n)], axis=1).astype(float)
        out = resample(ParticleSet(poses, w), rng)
        ids = out.poses[:, 0].astype(int)
        counts = np.bincount(ids, minlength=n)
        assert (counts >= np.floor(n * w)).all()
        assert (counts <= np.ceil(n * w)).all()


def test_resample_deterministic_per_seed():
    n = 30
    rngw = np.random.default_rng(5)
    w = rngw.random(n)
    w /= w.sum()
    poses = rngw.normal(size=(n, 3))
    a = resample(ParticleSet(poses.copy(), w.copy()), np.random.default_rng(12))
    b = resample(ParticleSet(poses.copy(), w.copy()), np.random.default_rng(12))
    assert (a.poses == b.poses).all()


def test_effective_sample_size():
    assert effective_sample_size(np.full(10, 0.1)) == pytest.approx(10.0)
    w = np.zeros(10)
    w[0] = 1.0
    assert effective_sample_size(w) == pytest.approx(1.0)


# --- step --------------------------------------------------------------------


def _two_aisle_setup(bank_step=0.1, n_theta=36, n_rays=9):
    occ, sem = worlds.two_aisles()
    maps = WorldMaps(occ, sem, CAM)
    bank = precompute_bank(occ, sem, CAM, PoseGridSpec(bank_step, n_theta),
                           n_rays=n_rays)
    return maps, bank


def test_step_gate_disabled_matches_plain_mcl():
    maps, bank = _two_aisle_setup()
    cfg = FilterConfig(tau_sim=0.0, sigma_trans=0.02, sigma_rot=0.05,
                       beam=BeamModelParams(z_max=4.0))
    true = Pose(1.0, 0.45, math.pi / 2)
    scan = render_scan(maps.occ, true)
    z = expected_semantic_view(maps.occ, maps.sem, true, CAM, 9)
    p0 = init_global(maps.occ, 300, seed=8)
    delta = OdometryDelta(0.02, 0.0, 0.01)

    rng_a = np.random.default_rng(99)
    rng_b = np.random.default_rng(99)
    pa, pb = p0, ParticleSet(p0.poses.copy(), p0.weights.copy())
    for _ in range(30):
        pa, _, diag = step(pa, delta, scan, z, bank, maps, cfg, rng_a)
        pb = plain_mcl_step(pb, delta, scan, maps, cfg, rng_b)
        assert not diag.gate_open
        assert (pa.poses == pb.poses).all()
        assert (pa.weights == pb.weights).all()


def test_step_no_injection_without_detections():
    maps, bank = _two_aisle_setup()
    cfg = FilterConfig(tau_sim=1.0, beam=BeamModelParams(z_max=4.0))
    true = Pose(1.0, 0.45, math.pi / 2)
    scan = render_scan(maps.occ, true)
    z_empty = build_semantic_vector([], 6)
    p0 = init_global(maps.occ, 200, seed=3)
    p1, _, diag = step(p0, OdometryDelta(0, 0, 0), scan, z_empty, bank, maps,
                       cfg, np.random.default_rng(0))
    assert not diag.gate_open
    assert diag.injected == 0
    assert p1.n == 200


def test_step_two_aisle_weight_audit():
    maps, bank = _two_aisle_setup(bank_step=0.05, n_theta=36, n_rays=9)
    cfg = FilterConfig(tau_sim=1.0, tau_kappa=3.0, inject_fraction=0.4,
                       k_inject=10, sigma_trans=0.0, sigma_rot=0.0,
                       beam=BeamModelParams(z_max=4.0))
    true = Pose(1.0, 0.45, math.pi / 2)
    mirror = Pose(1.0, 1.55, -math.pi / 2)
    scan = render_scan(maps.occ, true)
    z = expected_semantic_view(maps.occ, maps.sem, true, CAM, 9)
    assert z.counts.sum() > cfg.tau_kappa

    n = 1000
    poses = np.empty((n, 3))
    poses[: n // 2] = mirror.as_array()  # wrong aisle listed first
    poses[n // 2:] = true.as_array()
    p0 = ParticleSet(poses, np.full(n, 1.0 / n))
    p1, est, diag = step(p0, OdometryDelta(0, 0, 0), scan, z, bank, maps, cfg,
                         np.random.default_rng(21))
    assert diag.gate_open
    assert diag.injected == int(0.4 * n)
    south_fraction = float(np.mean(p1.poses[:, 1] < 0.9))
    assert south_fraction >= 0.9
    assert est.y < 0.9


def test_step_injection_invariants():
    maps, bank = _two_aisle_setup()
    cfg = FilterConfig(tau_sim=1.0, inject_fraction=0.25, sigma_trans=0.0,
                       sigma_rot=0.0, resample_ess_frac=1e-9,
                       beam=BeamModelParams(z_max=4.0))
    true = Pose(1.0, 0.45, math.pi / 2)
    scan = render_scan(maps.occ, true)
    z = expected_semantic_view(maps.occ, maps.sem, true, CAM, 9)
    p0 = init_global(maps.occ, 400, seed=14)
    p1, _, diag = step(p0, OdometryDelta(0, 0, 0), scan, z, bank, maps, cfg,
                       np.random.default_rng(5))
    assert p1.n == 400
    assert diag.injected == 100
    moved = np.nonzero(np.any(p1.poses != p0.poses, axis=1))[0]
    assert len(moved) == 100  # zero-noise zero-delta: only injected rows moved
    for i in moved:
        assert maps.occ.is_free(p1.poses[i, 0], p1.poses[i, 1])
    assert p1.weights.sum() == pytest.approx(1.0, abs=1e-9)


def test_step_weights_always_normalized_and_n_constant():
    maps, bank = _two_aisle_setup()
    cfg = FilterConfig(beam=BeamModelParams(z_max=4.0))
    true = Pose(0.5, 0.45, 0.0)
    scan = render_scan(maps.occ, true)
    z = expected_semantic_view(maps.occ, maps.sem, true, CAM, 9)
    p = init_global(maps.occ, 250, seed=2)
    rng = np.random.default_rng(31)
    for _ in range(10):
        p, est, diag = step(p, OdometryDelta(0.01, 0.0, 0.002), scan, z, bank,
                            maps, cfg, rng)
        assert p.n == 250
        assert p.weights.sum() == pytest.approx(1.0, abs=1e-9)
        assert (p.weights >= 0).all()
        assert maps.occ.in_bounds_world(est.x, est.y) or True  # estimate finite
        assert math.isfinite(est.x) and math.isfinite(est.theta)
        assert diag.ess > 0


def test_config_validation():
    with pytest.raises(ValueError):
        FilterConfig(tau_sim=1.5)
    with pytest.raises(ValueError):
        FilterConfig(inject_fraction=0.0)
    with pytest.raises(ValueError):
        FilterConfig(resample_ess_frac=0.0)
    with pytest.raises(ValueError):
        FilterConfig(semantic_floor=1.0)


def test_odometry_delta_requires_finite():
    with pytest.raises(ValueError):
        OdometryDelta(math.nan, 0.0, 0.0)
