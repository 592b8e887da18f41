"""Deterministic quasi-static aisle worlds and noisy sensor streams.

Worlds are parallel shelf rows separated by aisles, with cross corridors
at both ends and a boundary wall; products stock the shelf faces so each
aisle sees its own class mix. Trajectories interpolate waypoints at
constant speed and emit per-step frames of noisy odometry, scan, and
detections, reproducing cart/wearable noise profiles, walk-by occluders,
thinned stock, and mid-run teleports for recovery experiments.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .depth import BeamScan
from .geometry import Pose, body_delta_between, wrap_angle
from .mcl import OdometryDelta, WorldMaps
from .world import (
    FREE,
    OCCUPIED,
    OccupancyGrid,
    SemanticVoxelGrid,
    fan_offsets,
    insert_detection,
    ray_cast_batch,
    view_columns,
)


@dataclass(frozen=True)
class WorldSpec:
    """Generator parameters for an aisle world."""

    n_aisles: int = 2
    shelves_per_aisle: int = 3
    aisle_width: float = 2.0       # m
    shelf_length: float = 8.0      # m
    num_classes: int = 14
    plan: tuple = None             # per aisle, per shelf: ((class, count), ...)
    seed: int = 0
    resolution: float = 0.1
    shelf_depth: float = 0.4
    wall_thickness: float = 0.2
    cross_width: float = 1.6       # corridor joining the aisles at both ends
    products_per_shelf: int = 16

    def __post_init__(self):
        if self.n_aisles < 1 or self.shelves_per_aisle < 1:
            raise ValueError("need at least one aisle and one shelf per aisle")
        if min(self.aisle_width, self.shelf_length, self.resolution,
               self.shelf_depth, self.wall_thickness, self.cross_width) <= 0:
            raise ValueError("world dimensions must be positive")
        if self.num_classes < 1:
            raise ValueError("need at least one class")


def world_layout(spec: WorldSpec) -> dict:
    """Derived geometry: extents, shelf-row bands, and aisle bands (m)."""
    w, d, a, c = (spec.wall_thickness, spec.shelf_depth, spec.aisle_width,
                  spec.cross_width)
    width = 2 * w + 2 * c + spec.shelf_length
    height = 2 * w + (spec.n_aisles + 1) * d + spec.n_aisles * a
    shelf_x0 = w + c
    shelf_x1 = shelf_x0 + spec.shelf_length
    rows = []
    aisles = []
    y = w
    for r in range(spec.n_aisles + 1):
        rows.append((y, y + d))
        y += d
        if r < spec.n_aisles:
            aisles.append((y, y + a))
            y += a
    return {
        "width": width,
        "height": height,
        "shelf_x": (shelf_x0, shelf_x1),
        "rows": rows,
        "aisles": aisles,
    }


def aisle_distinct_plan(spec: WorldSpec) -> tuple:
    """Default stocking: each aisle draws from its own slice of the classes."""
    per_aisle = max(1, spec.num_classes // spec.n_aisles)
    plan = []
    for i in range(spec.n_aisles):
        base = (i * per_aisle) % spec.num_classes
        shelves = []
        for s in range(spec.shelves_per_aisle):
            c0 = (base + (2 * s) % per_aisle) % spec.num_classes
            c1 = (base + (2 * s + 1) % per_aisle) % spec.num_classes
            half = spec.products_per_shelf // 2
            shelves.append(((c0, spec.products_per_shelf - half), (c1, half)))
        plan.append(tuple(shelves))
    return tuple(plan)


def identical_plan(spec: WorldSpec) -> tuple:
    """Every aisle stocked exactly like aisle 0 (semantic aliasing fixture)."""
    base = aisle_distinct_plan(WorldSpec(
        n_aisles=spec.n_aisles, shelves_per_aisle=spec.shelves_per_aisle,
        aisle_width=spec.aisle_width, shelf_length=spec.shelf_length,
        num_classes=spec.num_classes, seed=spec.seed,
        products_per_shelf=spec.products_per_shelf))[0]
    return tuple(base for _ in range(spec.n_aisles))


def build_world(spec: WorldSpec):
    """Construct the occupancy grid and stocked semantic grid for a spec."""
    layout = world_layout(spec)
    res = spec.resolution
    width_cells = int(round(layout["width"] / res))
    height_cells = int(round(layout["height"] / res))
    if width_cells * height_cells > 4_000_000:
        raise ValueError("world geometry overflows the supported grid size")
    occ = OccupancyGrid(width_cells, height_cells, res)
    w = spec.wall_thickness
    occ.fill_rect_world(0, 0, layout["width"], w, OCCUPIED)
    occ.fill_rect_world(0, layout["height"] - w, layout["width"], layout["height"], OCCUPIED)
    occ.fill_rect_world(0, 0, w, layout["height"], OCCUPIED)
    occ.fill_rect_world(layout["width"] - w, 0, layout["width"], layout["height"], OCCUPIED)
    x0, x1 = layout["shelf_x"]
    for y0, y1 in layout["rows"]:
        occ.fill_rect_world(x0, y0, x1, y1, OCCUPIED)

    plan = spec.plan if spec.plan is not None else aisle_distinct_plan(spec)
    if len(plan) != spec.n_aisles:
        raise ValueError("plan must list one entry per aisle")
    sem = SemanticVoxelGrid.covering(occ, num_classes=spec.num_classes)
    rng = np.random.default_rng(spec.seed)
    seg_len = spec.shelf_length / spec.shelves_per_aisle
    z_top = sem.z_min + sem.nz * sem.z_resolution
    for i, shelves in enumerate(plan):
        if len(shelves) != spec.shelves_per_aisle:
            raise ValueError("plan must list one entry per shelf")
        row_below = layout["rows"][i]      # south row: stock its north face
        row_above = layout["rows"][i + 1]  # north row: stock its south face
        y_north_face = row_below[1] - res / 2.0
        y_south_face = row_above[0] + res / 2.0
        for s, mix in enumerate(shelves):
            sx0 = x0 + s * seg_len
            sx1 = sx0 + seg_len
            k = 0
            for class_id, count in mix:
                if not 0 <= int(class_id) < spec.num_classes:
                    raise ValueError(f"plan references class {class_id} >= C")
                for _ in range(int(count)):
                    px = rng.uniform(sx0 + res, sx1 - res)
                    py = y_north_face if k % 2 == 0 else y_south_face
                    pz = rng.uniform(0.2, min(2.0, z_top - 0.05))
                    insert_detection(sem, (px, py, pz), int(class_id))
                    k += 1
    return occ, sem


def perturb_world(sem: SemanticVoxelGrid, remove_fraction: float,
                  shuffle_fraction: float, seed: int) -> SemanticVoxelGrid:
    """Thin and rearrange stock: remove and relocate unit counts at random.

    floor(remove_fraction * total) units are deleted and
    floor(shuffle_fraction * total) of the remaining units move to other
    stocked voxels, both uniformly at random and deterministic per seed.
    The input grid is not modified.
    """
    if not (0.0 <= remove_fraction <= 1.0 and 0.0 <= shuffle_fraction <= 1.0):
        raise ValueError("fractions must lie in [0, 1]")
    out = sem.copy()
    keys = sorted(out.voxels)
    units = []
    for key in keys:
        hist = out.voxels[key]
        for c in range(out.num_classes):
            units.extend([(key, c)] * int(hist[c]))
    total = len(units)
    if total == 0:
        return out
    n_remove = int(math.floor(remove_fraction * total))
    n_shuffle = min(int(math.floor(shuffle_fraction * total)), total - n_remove)
    rng = np.random.default_rng(seed)
    order = rng.permutation(total)
    for idx in order[:n_remove]:
        key, c = units[idx]
        out.voxels[key][c] -= 1
    if len(keys) > 1:
        for idx in order[n_remove:n_remove + n_shuffle]:
            key, c = units[idx]
            dest = key
            while dest == key:
                dest = keys[int(rng.integers(0, len(keys)))]
            out.voxels[key][c] -= 1
            hist = out.voxels.get(dest)
            if hist is None:
                hist = np.zeros(out.num_classes)
                out.voxels[dest] = hist
            hist[c] += 1
    for key in list(out.voxels):
        if not out.voxels[key].any():
            del out.voxels[key]
    out._columns = None
    return out


@dataclass(frozen=True)
class SimConfig:
    """Noise, detector, occluder, and timing parameters for one run."""

    dt: float = 0.1                # s per simulation step
    speed: float = 0.6             # m/s along the waypoint path
    odom_sigma_trans: float = 0.02 # m noise per m travelled
    odom_sigma_rot: float = 0.05   # rad noise per rad turned
    scan_beams: int = 32
    scan_sigma: float = 0.03       # m
    scan_dropout: float = 0.01
    detection_rays: int = 20
    detector_recall: float = 0.77
    detector_precision: float = 0.91
    range_jitter: float = 0.10     # m
    bearing_jitter: float = 0.02   # rad
    occluder_intervals: tuple = ()        # ((t_start, t_end), ...)
    occluder_sector: tuple = (0.0, 0.7)   # centre, width (rad, sensor frame)
    occluder_range: float = 0.8           # m, person walking in front
    teleports: tuple = ()                 # ((step, dx, dy, dtheta), ...)

    def __post_init__(self):
        if self.dt <= 0 or self.speed <= 0:
            raise ValueError("dt and speed must be positive")
        if not (0.0 <= self.detector_recall <= 1.0
                and 0.0 < self.detector_precision <= 1.0):
            raise ValueError("detector rates must be valid probabilities")


@dataclass
class SimFrame:
    """One simulation step: ground truth plus the noisy sensor stream."""

    t: float
    true_pose: Pose
    odom: OdometryDelta
    scan: BeamScan
    detections: list
    occluded: bool


def occluder_schedule(duration: float, duty: float, period: float = 3.0) -> tuple:
    """Periodic on-intervals covering `duty` of each period."""
    if not 0.0 <= duty <= 1.0:
        raise ValueError("duty must lie in [0, 1]")
    if duty == 0.0:
        return ()
    out = []
    t = 0.0
    while t < duration:
        out.append((t, min(t + duty * period, duration)))
        t += period
    return tuple(out)


def interpolate_waypoints(waypoints, speed: float, dt: float):
    """Constant-speed poses along the waypoint polyline, heading from motion."""
    pts = [(float(p.x), float(p.y)) for p in waypoints]
    if len(pts) < 2:
        raise ValueError("need at least two waypoints")
    segs = []
    total = 0.0
    for (ax, ay), (bx, by) in zip(pts, pts[1:]):
        length = math.hypot(bx - ax, by - ay)
        if length <= 0:
            raise ValueError("consecutive waypoints must be distinct")
        segs.append((ax, ay, bx, by, length, math.atan2(by - ay, bx - ax)))
        total += length
    n_steps = int(math.floor(total / (speed * dt)))
    poses = []
    for i in range(n_steps + 1):
        d = min(i * speed * dt, total)
        acc = 0.0
        for j, (ax, ay, bx, by, length, heading) in enumerate(segs):
            if d <= acc + length or j == len(segs) - 1:
                f = min(max((d - acc) / length, 0.0), 1.0)
                poses.append(Pose(ax + f * (bx - ax), ay + f * (by - ay), heading))
                break
            acc += length
    return poses


def _apply_teleports(nominal, teleports, occ: OccupancyGrid):
    """Rigidly transform the tail of the true trajectory at each teleport.

    The transform rotates about the map centre and then translates, so a
    (step, 0, 0, pi) teleport drops the robot into the aliased half of a
    symmetric world while its body motion (and hence odometry) continues
    unchanged.
    """
    poses = list(nominal)
    cx = occ.origin[0] + occ.width * occ.resolution / 2.0
    cy = occ.origin[1] + occ.height * occ.resolution / 2.0
    steps = set()
    for stepidx, dx, dy, dth in sorted(teleports):
        stepidx = int(stepidx)
        if stepidx < 1 or stepidx >= len(poses):
            raise ValueError("teleport step outside trajectory")
        steps.add(stepidx)
        c, s = math.cos(dth), math.sin(dth)
        for i in range(stepidx, len(poses)):
            p = poses[i]
            rx = cx + c * (p.x - cx) - s * (p.y - cy) + dx
            ry = cy + s * (p.x - cx) + c * (p.y - cy) + dy
            poses[i] = Pose(rx, ry, p.theta + dth)
    return poses, steps


def simulate_trajectory(maps: WorldMaps, waypoints, cfg: SimConfig, seed: int):
    """Render the noisy frame stream for a waypoint trajectory.

    Per frame: the true pose; a body-frame odometry delta with
    displacement-scaled Gaussian noise (teleports never appear in
    odometry); a scan with Gaussian noise and dropouts; detections
    sampled from the expected semantic view then corrupted by detector
    misses, false positives, and range/bearing jitter. Active occluder
    intervals blank a bearing sector of both scan and detections.
    Bit-identical across runs for equal seeds and configs.
    """
    occ, sem, cam = maps.occ, maps.sem, maps.cam
    for p in waypoints:
        if not occ.is_free(p.x, p.y):
            raise ValueError(f"waypoint ({p.x:.2f}, {p.y:.2f}) outside free space")
    nominal = interpolate_waypoints(waypoints, cfg.speed, cfg.dt)
    true_poses, teleport_steps = _apply_teleports(nominal, cfg.teleports, occ)
    rng = np.random.default_rng(seed)
    offs = fan_offsets(cam.fov, cfg.scan_beams)
    z_max = cam.max_range
    sector_c, sector_w = cfg.occluder_sector
    frames = []
    for i, pose in enumerate(true_poses):
        t = i * cfg.dt
        if i == 0:
            odom = OdometryDelta(0.0, 0.0, 0.0)
        else:
            src = nominal if i in teleport_steps else true_poses
            dx, dy, dth = body_delta_between(src[i - 1], src[i])
            trans = math.hypot(dx, dy)
            s_xy = cfg.odom_sigma_trans * trans
            s_th = cfg.odom_sigma_rot * (abs(dth) + 0.1 * trans)
            noise = rng.normal(size=3)
            odom = OdometryDelta(dx + noise[0] * s_xy, dy + noise[1] * s_xy,
                                 wrap_angle(dth + noise[2] * s_th))

        occluded = any(t0 <= t < t1 for t0, t1 in cfg.occluder_intervals)
        in_sector = np.abs(wrap_angle(offs - sector_c)) <= sector_w / 2.0

        origins = np.tile([pose.x, pose.y], (cfg.scan_beams, 1))
        ranges = ray_cast_batch(occ, origins, pose.theta + offs, z_max)
        if occluded:
            ranges = np.where(in_sector, np.minimum(ranges, cfg.occluder_range),
                              ranges)
        noisy = ranges + rng.normal(size=cfg.scan_beams) * cfg.scan_sigma
        drop = rng.random(cfg.scan_beams) < cfg.scan_dropout
        noisy = np.where(drop, z_max, noisy)
        scan = BeamScan(offs, np.clip(noisy, 0.0, z_max), z_max)

        detections = []
        for _, _, hist, r, b in view_columns(occ, sem, pose, cam,
                                             cfg.detection_rays):
            if occluded and abs(wrap_angle(b - sector_c)) <= sector_w / 2.0:
                continue
            for c in np.nonzero(hist > 0)[0]:
                for _ in range(int(round(hist[c]))):
                    if rng.random() >= cfg.detector_recall:
                        continue  # detector miss
                    jr = max(0.05, r + rng.normal() * cfg.range_jitter)
                    jb = float(np.clip(b + rng.normal() * cfg.bearing_jitter,
                                       -cam.fov / 2, cam.fov / 2))
                    detections.append((int(c), jr, jb))
        fp_rate = (1.0 / cfg.detector_precision) - 1.0
        for _ in range(rng.poisson(len(detections) * fp_rate)):
            for _ in range(8):
                fb = float(rng.uniform(-cam.fov / 2, cam.fov / 2))
                if not (occluded and abs(wrap_angle(fb - sector_c)) <= sector_w / 2):
                    break
            else:
                continue
            detections.append((int(rng.integers(0, sem.num_classes)),
                               float(rng.uniform(0.3, 0.8 * z_max)), fb))
        frames.append(SimFrame(t, pose, odom, scan, detections, occluded))
    return frames


def save_frames_jsonl(path, frames):
    with open(path, "w") as f:
        for fr in frames:
            f.write(json.dumps({
                "t": fr.t,
                "true_pose": [fr.true_pose.x, fr.true_pose.y, fr.true_pose.theta],
                "odom": [fr.odom.dx, fr.odom.dy, fr.odom.dtheta],
                "scan": {
                    "bearings": fr.scan.bearings.tolist(),
                    "ranges": fr.scan.ranges.tolist(),
                    "z_max": fr.scan.z_max,
                },
                "detections": [[int(c), float(r), float(b)]
                               for c, r, b in fr.detections],
                "occluded": fr.occluded,
            }) + "\n")


def load_frames_jsonl(path):
    frames = []
    with open(path) as f:
        for line in f:
            if not line.strip():
                continue
            d = json.loads(line)
            frames.append(SimFrame(
                t=float(d["t"]),
                true_pose=Pose(*d["true_pose"]),
                odom=OdometryDelta(*d["odom"]),
                scan=BeamScan(np.asarray(d["scan"]["bearings"]),
                              np.asarray(d["scan"]["ranges"]),
                              float(d["scan"]["z_max"])),
                detections=[(int(c), float(r), float(b))
                            for c, r, b in d["detections"]],
                occluded=bool(d["occluded"]),
            ))
    return frames


def aisle_waypoints(spec: WorldSpec, aisle: int, margin: float = 0.8,
                    reverse: bool = False):
    """Two waypoints running the length of an aisle centreline."""
    layout = world_layout(spec)
    y0, y1 = layout["aisles"][aisle]
    yc = (y0 + y1) / 2.0
    x0, x1 = layout["shelf_x"]
    a, b = Pose(x0 + margin, yc), Pose(x1 - margin, yc)
    return [b, a] if reverse else [a, b]
