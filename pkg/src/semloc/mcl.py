"""Semantic particle filter: motion, gated combined weighting, inverse
proposals, systematic resampling, and pose estimation.

Each step runs motion propagation, then a semantic consistency check at
the current pose estimate. When the live view disagrees with the map
(low similarity) and carries enough detections, the view bank proposes
global pose hypotheses that replace the lowest-weight particles, and the
whole set is reweighted by depth times a floored semantic likelihood;
otherwise the depth likelihood alone is used. With the gate disabled
(tau_sim = 0) the step is exactly plain MCL.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .depth import BeamModelParams, BeamScan, depth_log_likelihood_batch
from .geometry import Pose, wrap_angle
from .semantics import (
    InsufficientSemanticsError,
    SemanticVector,
    SimilarityWeights,
    similarity,
    similarity_batch,
)
from .viewbank import SemanticViewBank, top_k_poses
from .world import CameraModel, OccupancyGrid, SemanticVoxelGrid, expected_semantic_view

TWO_PI = 2.0 * math.pi


@dataclass
class ParticleSet:
    """N weighted pose hypotheses; poses is (N, 3), weights (N,)."""

    poses: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.poses = np.asarray(self.poses, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)
        if self.poses.ndim != 2 or self.poses.shape[1] != 3:
            raise ValueError("poses must be an (N, 3) array")
        if self.weights.shape != (self.poses.shape[0],):
            raise ValueError("weights must be an (N,) array")
        if (self.weights < 0).any():
            raise ValueError("weights must be non-negative")

    @property
    def n(self) -> int:
        return self.poses.shape[0]


@dataclass(frozen=True)
class OdometryDelta:
    """Body-frame displacement (forward dx, left dy, turn dtheta)."""

    dx: float
    dy: float
    dtheta: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.dx, self.dy, self.dtheta)):
            raise ValueError("odometry delta must be finite")


@dataclass
class WorldMaps:
    """Immutable map bundle the filter localizes against."""

    occ: OccupancyGrid
    sem: SemanticVoxelGrid
    cam: CameraModel


@dataclass
class FilterConfig:
    n_particles: int = 1500
    tau_sim: float = 0.6           # gate threshold on view similarity
    tau_kappa: float = 3.0         # minimum detection mass to trust semantics
    k_inject: int = 10             # pose proposals per gated step
    inject_fraction: float = 0.25  # share of particles replaced by proposals
    sigma_trans: float = 0.05      # m of motion noise per m travelled
    sigma_rot: float = 0.10        # rad of heading noise per rad turned
    resample_ess_frac: float = 1.0 # resample when ESS < frac * N; 1.0 = always
    semantic_floor: float = 0.05   # likelihood floor under detector dropouts
    sem_rays: int = 20             # rays for the expected view at the estimate
    weights: SimilarityWeights = field(default_factory=SimilarityWeights)
    beam: BeamModelParams = field(default_factory=BeamModelParams)

    def __post_init__(self):
        if not 0.0 <= self.tau_sim <= 1.0:
            raise ValueError("tau_sim must lie in [0, 1]")
        if self.tau_kappa < 0:
            raise ValueError("tau_kappa must be non-negative")
        if not 0.0 < self.inject_fraction < 1.0:
            raise ValueError("inject_fraction must lie in (0, 1)")
        if not 0.0 < self.resample_ess_frac <= 1.0:
            raise ValueError("resample_ess_frac must lie in (0, 1]")
        if not 0.0 <= self.semantic_floor < 1.0:
            raise ValueError("semantic_floor must lie in [0, 1)")
        if self.k_inject < 1 or self.sem_rays < 1 or self.n_particles < 1:
            raise ValueError("counts must be at least 1")
        if self.sigma_trans < 0 or self.sigma_rot < 0:
            raise ValueError("motion noise must be non-negative")


@dataclass
class StepDiagnostics:
    sim: float
    gate_open: bool
    injected: int
    ess: float

    def to_dict(self):
        return {"sim": self.sim, "gate_open": self.gate_open,
                "injected": self.injected, "ess": self.ess}


def init_global(occ: OccupancyGrid, n: int, seed: int) -> ParticleSet:
    """N particles uniform over free space with uniform heading, weight 1/N."""
    if n < 1:
        raise ValueError("need at least one particle")
    free = occ.free_cells()
    if len(free) == 0:
        raise ValueError("occupancy grid has no free space")
    rng = np.random.default_rng(seed)
    picks = rng.integers(0, len(free), size=n)
    offs = rng.random((n, 2))
    res = occ.resolution
    poses = np.empty((n, 3))
    poses[:, 0] = occ.origin[0] + (free[picks, 0] + offs[:, 0]) * res
    poses[:, 1] = occ.origin[1] + (free[picks, 1] + offs[:, 1]) * res
    poses[:, 2] = wrap_angle(rng.uniform(-math.pi, math.pi, size=n))
    return ParticleSet(poses, np.full(n, 1.0 / n))


def motion_update(p: ParticleSet, delta: OdometryDelta, cfg: FilterConfig,
                  rng: np.random.Generator) -> ParticleSet:
    """Compose each pose with the body-frame delta plus scaled Gaussian noise.

    Noise std scales with the step's displacement: sigma_trans * |d| on
    both planar axes and sigma_rot * (|dtheta| + 0.1 |d|) on heading, so
    a zero-motion step stays put under any config. Weights are unchanged.
    """
    n = p.n
    noise = rng.normal(size=(n, 3))
    trans = math.hypot(delta.dx, delta.dy)
    s_xy = cfg.sigma_trans * trans
    s_th = cfg.sigma_rot * (abs(delta.dtheta) + 0.1 * trans)
    ndx = delta.dx + noise[:, 0] * s_xy
    ndy = delta.dy + noise[:, 1] * s_xy
    ndt = delta.dtheta + noise[:, 2] * s_th
    c = np.cos(p.poses[:, 2])
    s = np.sin(p.poses[:, 2])
    out = np.empty_like(p.poses)
    out[:, 0] = p.poses[:, 0] + ndx * c - ndy * s
    out[:, 1] = p.poses[:, 1] + ndx * s + ndy * c
    out[:, 2] = wrap_angle(p.poses[:, 2] + ndt)
    return ParticleSet(out, p.weights.copy())


def estimate_pose(p: ParticleSet) -> Pose:
    """Weighted mean position with the circular weighted mean heading."""
    total = float(p.weights.sum())
    if total <= 0:
        raise ValueError("cannot estimate a pose from zero total weight")
    w = p.weights / total
    x = float(np.dot(w, p.poses[:, 0]))
    y = float(np.dot(w, p.poses[:, 1]))
    theta = math.atan2(float(np.dot(w, np.sin(p.poses[:, 2]))),
                       float(np.dot(w, np.cos(p.poses[:, 2]))))
    return Pose(x, y, theta)


def effective_sample_size(weights: np.ndarray) -> float:
    return 1.0 / float(np.sum(np.square(weights)))


def resample(p: ParticleSet, rng: np.random.Generator) -> ParticleSet:
    """Low-variance systematic resampling; output weights are uniform."""
    n = p.n
    positions = (rng.random() + np.arange(n)) / n
    cum = np.cumsum(p.weights)
    cum[-1] = max(cum[-1], 1.0)
    idx = np.minimum(np.searchsorted(cum, positions, side="right"), n - 1)
    return ParticleSet(p.poses[idx].copy(), np.full(n, 1.0 / n))


def _normalize_log_weights(log_w: np.ndarray) -> np.ndarray:
    w = np.exp(log_w - log_w.max())
    return w / w.sum()


def _expected_view_at(maps: WorldMaps, pose: Pose, n_rays: int) -> SemanticVector:
    # an estimate that drifted off the map carries no semantic evidence
    if not maps.occ.in_bounds_world(pose.x, pose.y):
        return SemanticVector.empty(maps.sem.num_classes)
    return expected_semantic_view(maps.occ, maps.sem, pose, maps.cam, n_rays)


def _quantized_keys(bank: SemanticViewBank, poses: np.ndarray) -> np.ndarray:
    step = bank.spec.xy_step
    dth = TWO_PI / bank.spec.n_theta
    ix = np.floor((poses[:, 0] - bank.origin[0]) / step).astype(np.int64)
    iy = np.floor((poses[:, 1] - bank.origin[1]) / step).astype(np.int64)
    it = np.floor((wrap_angle(poses[:, 2]) + math.pi) / dth).astype(np.int64) \
        % bank.spec.n_theta
    return np.stack([ix, iy, it], axis=1)


def _per_particle_similarity(bank: SemanticViewBank, z: SemanticVector,
                             poses: np.ndarray, w: SimilarityWeights,
                             fov: float) -> np.ndarray:
    """Semantic similarity per particle via its nearest bank entry.

    Particles whose pose-grid cell is not banked (non-free or off-grid)
    score 0; they fall to the configured likelihood floor.
    """
    rows = bank.rows_for_keys(_quantized_keys(bank, poses))
    s = np.zeros(poses.shape[0])
    ok = rows >= 0
    if ok.any():
        r = rows[ok]
        s[ok] = similarity_batch(z, bank.counts[r], bank.mean_range[r],
                                 bank.mean_bearing[r], bank.masks[r], w, fov,
                                 q_norm=bank._q_norm[r], totals=bank._totals[r])
    return s


def _inject_proposals(p: ParticleSet, top, bank: SemanticViewBank,
                      occ: OccupancyGrid, cfg: FilterConfig,
                      rng: np.random.Generator):
    """Replace the lowest-weight particles with jittered top-k proposals.

    Proposals are assigned round-robin; jitter is one pose-grid cell.
    Jittered positions are redrawn until they land in free space (the
    proposal pose itself is free and serves as the fallback), so
    injection never leaves free space and never changes N.
    """
    n_inject = min(int(cfg.inject_fraction * p.n), p.n)
    if n_inject == 0 or not top:
        return p, 0
    order = np.argsort(p.weights, kind="stable")[:n_inject]
    poses = p.poses.copy()
    s_xy = bank.spec.xy_step
    s_th = TWO_PI / bank.spec.n_theta
    for j, idx in enumerate(order):
        base = top[j % len(top)][0]
        x, y, th = base.x, base.y, base.theta
        for _ in range(20):
            cx = x + rng.normal(0.0, s_xy)
            cy = y + rng.normal(0.0, s_xy)
            if occ.is_free(cx, cy):
                x, y = cx, cy
                th = base.theta + rng.normal(0.0, s_th)
                break
        poses[idx, 0] = x
        poses[idx, 1] = y
        poses[idx, 2] = wrap_angle(th)
    return ParticleSet(poses, p.weights.copy()), n_inject


def step(p: ParticleSet, delta: OdometryDelta, scan: BeamScan, z_s: SemanticVector,
         bank, maps: WorldMaps, cfg: FilterConfig, rng: np.random.Generator):
    """One filter iteration; returns (particles, estimate, diagnostics).

    Order of operations: motion update; semantic consistency check at the
    pose estimate; on gate failure, inverse proposals plus combined
    depth-and-semantic weighting, otherwise depth-only weighting;
    normalize; ESS-gated systematic resampling. The returned estimate is
    taken after weighting (before resampling noise).
    """
    p = motion_update(p, delta, cfg, rng)
    x_hat = estimate_pose(p)
    zhat = _expected_view_at(maps, x_hat, cfg.sem_rays)
    try:
        sim = similarity(z_s, zhat, cfg.weights, maps.cam.fov)
    except InsufficientSemanticsError:
        sim = 0.0
    count_mass = float(z_s.counts.sum())
    gate_open = sim < cfg.tau_sim and count_mass > cfg.tau_kappa
    injected = 0
    semantic_weighting = False
    if gate_open and bank is not None:
        top = top_k_poses(bank, z_s, cfg.weights, maps.cam.fov, cfg.k_inject)
        if top:
            p, injected = _inject_proposals(p, top, bank, maps.occ, cfg, rng)
            semantic_weighting = True
    log_w = depth_log_likelihood_batch(scan, p.poses, maps.occ, cfg.beam)
    if semantic_weighting:
        s = _per_particle_similarity(bank, z_s, p.poses, cfg.weights, maps.cam.fov)
        log_w = log_w + np.log(cfg.semantic_floor + (1.0 - cfg.semantic_floor) * s)
    w = _normalize_log_weights(log_w)
    p = ParticleSet(p.poses, w)
    estimate = estimate_pose(p)
    ess = effective_sample_size(w)
    if ess < cfg.resample_ess_frac * p.n:
        p = resample(p, rng)
    return p, estimate, StepDiagnostics(sim=sim, gate_open=gate_open,
                                        injected=injected, ess=ess)
