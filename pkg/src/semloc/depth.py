"""Synthetic 2-D scan extraction and the beam end-point mixture likelihood."""

import math
from dataclasses import dataclass, field

import numpy as np

from .world import OccupancyGrid, CameraModel, fan_offsets, ray_cast_batch

LOG_FLOOR = -30.0  # per-beam floor in nats; prevents one outlier beam from
                   # collapsing a particle's whole weight


@dataclass(frozen=True)
class BeamModelParams:
    """Mixture parameters for the per-beam range likelihood.

    The four weights must sum to one. The max-range spike is realised as
    a box of width max_eps so the mixture stays a proper density.
    """

    sigma_hit: float = 0.1        # m
    lambda_short: float = 0.5     # 1/m
    z_max: float = 8.0            # m
    w_hit: float = 0.8
    w_short: float = 0.1
    w_max: float = 0.05
    w_rand: float = 0.05
    max_eps: float = 0.01         # m
    subsample: int = 4

    def __post_init__(self):
        if self.sigma_hit <= 0 or self.lambda_short <= 0:
            raise ValueError("sigma_hit and lambda_short must be positive")
        if self.z_max <= 0 or self.max_eps <= 0:
            raise ValueError("z_max and max_eps must be positive")
        if self.subsample < 1:
            raise ValueError("subsample stride must be at least 1")
        wsum = self.w_hit + self.w_short + self.w_max + self.w_rand
        if min(self.w_hit, self.w_short, self.w_max, self.w_rand) < 0:
            raise ValueError("mixture weights must be non-negative")
        if abs(wsum - 1.0) > 1e-9:
            raise ValueError("mixture weights must sum to 1")


@dataclass
class BeamScan:
    """K fixed bearings (sensor frame, strictly increasing) with ranges."""

    bearings: np.ndarray
    ranges: np.ndarray
    z_max: float

    def __post_init__(self):
        self.bearings = np.asarray(self.bearings, dtype=float)
        self.ranges = np.asarray(self.ranges, dtype=float)
        if self.bearings.shape != self.ranges.shape or self.bearings.ndim != 1:
            raise ValueError("bearings and ranges must be equal-length 1-D arrays")
        if self.bearings.shape[0] >= 2 and not (np.diff(self.bearings) > 0).all():
            raise ValueError("bearings must be strictly increasing")
        if ((self.ranges < 0) | (self.ranges > self.z_max)).any():
            raise ValueError("ranges must lie in [0, z_max]")

    @classmethod
    def fan(cls, fov, k, z_max, ranges=None) -> "BeamScan":
        bearings = fan_offsets(fov, k)
        if ranges is None:
            ranges = np.full(k, float(z_max))
        return cls(bearings, ranges, float(z_max))


def scan_from_depth(depth_band: np.ndarray, cam: CameraModel, k: int) -> BeamScan:
    """Collapse a horizontal depth-image band into a K-beam planar scan.

    Columns are partitioned into K bins; each beam takes the median of
    its bin's valid depths (NaN or non-positive entries are invalid;
    even counts use the lower median) converted to planar range along
    the bin's central bearing. Empty bins emit z_max.
    """
    band = np.asarray(depth_band, dtype=float)
    if band.ndim != 2 or band.size == 0:
        raise ValueError("depth band must be a non-empty 2-D array")
    w = band.shape[1]
    if w < k or k < 1:
        raise ValueError("need at least one column per beam")
    z_max = cam.max_range
    bearings = np.empty(k)
    ranges = np.empty(k)
    # image column 0 is leftmost, which is the largest bearing; iterate
    # bins right-to-left so the output bearings ascend
    for out, b in enumerate(range(k - 1, -1, -1)):
        lo, hi = b * w // k, (b + 1) * w // k
        u_c = (lo + hi - 1) / 2.0
        bearing = math.atan((cam.cx - u_c) / cam.fx)
        vals = band[:, lo:hi].ravel()
        vals = vals[np.isfinite(vals) & (vals > 0)]
        if vals.size == 0:
            rng = z_max
        else:
            med = float(np.sort(vals)[(vals.size - 1) // 2])
            rng = med / math.cos(bearing)
        bearings[out] = bearing
        ranges[out] = min(max(rng, 0.0), z_max)
    return BeamScan(bearings, ranges, z_max)


def _mixture_density(z: np.ndarray, zhat: np.ndarray, p: BeamModelParams) -> np.ndarray:
    gauss = np.exp(-0.5 * ((z - zhat) / p.sigma_hit) ** 2) / (
        p.sigma_hit * math.sqrt(2.0 * math.pi))
    short = np.where(z <= zhat, p.lambda_short * np.exp(-p.lambda_short * z), 0.0)
    max_box = np.where(np.abs(z - p.z_max) < p.max_eps, 1.0 / p.max_eps, 0.0)
    rand = 1.0 / p.z_max
    return p.w_hit * gauss + p.w_short * short + p.w_max * max_box + p.w_rand * rand


def beam_likelihood(z: float, zhat: float, p: BeamModelParams) -> float:
    """Density of one measured range given the expected range."""
    if not 0.0 <= z <= p.z_max:
        raise ValueError("measured range outside [0, z_max]")
    if not 0.0 <= zhat <= p.z_max:
        raise ValueError("expected range outside [0, z_max]")
    return float(_mixture_density(np.asarray(z, dtype=float),
                                  np.asarray(zhat, dtype=float), p))


def _log_floor(dens: np.ndarray) -> np.ndarray:
    out = np.full(dens.shape, LOG_FLOOR)
    pos = dens > 0
    np.log(dens, out=out, where=pos)
    return np.maximum(out, LOG_FLOOR)


def depth_log_likelihood(scan: BeamScan, pose, occ: OccupancyGrid,
                         p: BeamModelParams) -> float:
    """Log-likelihood of a scan at a pose, summed over subsampled beams.

    Expected ranges come from occupancy ray casting; each beam's log
    density is floored at -30 nats. Beam order is fixed, so repeated
    evaluations are bit-identical.
    """
    x, y, theta = float(pose.x), float(pose.y), float(pose.theta)
    bearings = theta + scan.bearings[:: p.subsample]
    z = scan.ranges[:: p.subsample]
    if ((z < 0) | (z > p.z_max)).any():
        raise ValueError("scan ranges exceed the beam model z_max")
    origins = np.tile([x, y], (bearings.shape[0], 1))
    zhat = ray_cast_batch(occ, origins, bearings, p.z_max)
    dens = _mixture_density(z, zhat, p)
    return float(np.sum(_log_floor(dens)))


def depth_log_likelihood_batch(scan: BeamScan, poses: np.ndarray, occ: OccupancyGrid,
                               p: BeamModelParams) -> np.ndarray:
    """`depth_log_likelihood` over an (N, 3) pose array.

    Poses outside the grid extents cannot be ray cast and take the
    all-beams floor instead of raising; stray particles must lose
    weight, not abort the filter.
    """
    poses = np.asarray(poses, dtype=float)
    rel = scan.bearings[:: p.subsample]
    z = scan.ranges[:: p.subsample]
    if ((z < 0) | (z > p.z_max)).any():
        raise ValueError("scan ranges exceed the beam model z_max")
    n, kp = poses.shape[0], rel.shape[0]
    x0, y0, x1, y1 = occ.extent
    inb = (poses[:, 0] >= x0) & (poses[:, 0] < x1) & \
          (poses[:, 1] >= y0) & (poses[:, 1] < y1)
    out = np.full(n, kp * LOG_FLOOR)
    if inb.any():
        pin = poses[inb]
        m = pin.shape[0]
        bearings = (pin[:, 2][:, None] + rel[None, :]).ravel()
        origins = np.repeat(pin[:, :2], kp, axis=0)
        zhat = ray_cast_batch(occ, origins, bearings, p.z_max)
        dens = _mixture_density(np.tile(z, m), zhat, p)
        out[inb] = _log_floor(dens).reshape(m, kp).sum(axis=1)
    return out
