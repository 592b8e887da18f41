"""Geometric and semantic map model for a quasi-static planar world.

Conventions used throughout the package:

* the map frame has x right, y up, bearings in radians CCW from +x;
* the occupancy grid stores cell states row-major as ``cells[iy, ix]``
  with cell (0, 0) at the grid origin corner;
* the semantic layer is a sparse 3-D voxel grid aligned to the same
  origin, each voxel holding a per-class count histogram.

Maps are immutable once mapping ends; every read operation here is pure.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Pose, wrap_angle
from .semantics import SemanticVector

FREE = 0
OCCUPIED = 1
UNKNOWN = 2

_CELL_TO_CHAR = {FREE: ".", OCCUPIED: "#", UNKNOWN: "?"}
_CHAR_TO_CELL = {v: k for k, v in _CELL_TO_CHAR.items()}


class OccupancyGrid:
    """2-D grid of free/occupied/unknown cells (the geometric map)."""

    def __init__(self, width, height, resolution=0.10, origin=(0.0, 0.0), cells=None):
        if resolution <= 0:
            raise ValueError("resolution must be positive")
        if width < 1 or height < 1:
            raise ValueError("grid must have at least one cell per axis")
        self.width = int(width)
        self.height = int(height)
        self.resolution = float(resolution)
        self.origin = (float(origin[0]), float(origin[1]))
        if cells is None:
            self.cells = np.full((self.height, self.width), FREE, dtype=np.uint8)
        else:
            cells = np.asarray(cells, dtype=np.uint8)
            if cells.shape != (self.height, self.width):
                raise ValueError("cells shape does not match width/height")
            self.cells = cells
        self._occupied = None

    @property
    def occupied(self) -> np.ndarray:
        """Boolean occupancy mask, cached; invalidated by cell writes."""
        if self._occupied is None:
            self._occupied = self.cells == OCCUPIED
        return self._occupied

    def invalidate(self):
        self._occupied = None

    @property
    def extent(self):
        """(x_min, y_min, x_max, y_max) of the grid footprint in meters."""
        ox, oy = self.origin
        return (ox, oy, ox + self.width * self.resolution, oy + self.height * self.resolution)

    def in_bounds_world(self, x, y) -> bool:
        x0, y0, x1, y1 = self.extent
        return x0 <= x < x1 and y0 <= y < y1

    def in_bounds_cell(self, ix, iy) -> bool:
        return 0 <= ix < self.width and 0 <= iy < self.height

    def world_to_cell(self, x, y):
        ix = int(math.floor((x - self.origin[0]) / self.resolution))
        iy = int(math.floor((y - self.origin[1]) / self.resolution))
        return ix, iy

    def cell_center(self, ix, iy):
        return (
            self.origin[0] + (ix + 0.5) * self.resolution,
            self.origin[1] + (iy + 0.5) * self.resolution,
        )

    def state_at(self, x, y) -> int:
        if not self.in_bounds_world(x, y):
            raise ValueError("query point outside grid extents")
        ix, iy = self.world_to_cell(x, y)
        return int(self.cells[iy, ix])

    def is_free(self, x, y) -> bool:
        if not self.in_bounds_world(x, y):
            return False
        ix, iy = self.world_to_cell(x, y)
        return self.cells[iy, ix] == FREE

    def free_cells(self) -> np.ndarray:
        """(M, 2) array of free-cell indices (ix, iy), row-major order."""
        ys, xs = np.nonzero(self.cells == FREE)
        return np.stack([xs, ys], axis=1)

    def fill_rect_world(self, x0, y0, x1, y1, state):
        """Set every cell whose footprint lies inside [x0,x1) x [y0,y1)."""
        res = self.resolution
        ia = max(0, int(math.floor((x0 - self.origin[0]) / res + 1e-9)))
        ib = min(self.width, int(math.ceil((x1 - self.origin[0]) / res - 1e-9)))
        ja = max(0, int(math.floor((y0 - self.origin[1]) / res + 1e-9)))
        jb = min(self.height, int(math.ceil((y1 - self.origin[1]) / res - 1e-9)))
        if ib > ia and jb > ja:
            self.cells[ja:jb, ia:ib] = state
        self.invalidate()

    def copy(self) -> "OccupancyGrid":
        return OccupancyGrid(self.width, self.height, self.resolution, self.origin,
                             self.cells.copy())


@dataclass(frozen=True)
class CameraModel:
    """Pinhole intrinsics plus world-from-camera extrinsics and planar fov."""

    fx: float = 380.0
    fy: float = 380.0
    cx: float = 320.0
    cy: float = 240.0
    fov: float = 1.518  # horizontal, radians
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    max_range: float = 8.0

    def __post_init__(self):
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=float))
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=float))
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not 0 < self.fov < math.pi:
            raise ValueError("fov must lie in (0, pi)")
        if self.max_range <= 0:
            raise ValueError("max_range must be positive")
        R = self.rotation
        if R.shape != (3, 3) or self.translation.shape != (3,):
            raise ValueError("rotation must be 3x3 and translation a 3-vector")
        if np.abs(R.T @ R - np.eye(3)).max() > 1e-9 or abs(np.linalg.det(R) - 1.0) > 1e-9:
            raise ValueError("rotation must be orthonormal with determinant +1")


def pixel_to_world(cam: CameraModel, u, v, depth) -> np.ndarray:
    """Back-project pixel (u, v) at the given depth into the world frame."""
    if depth <= 0:
        raise ValueError("depth must be positive")
    ray = np.array([(u - cam.cx) / cam.fx, (v - cam.cy) / cam.fy, 1.0])
    return cam.translation + depth * (cam.rotation @ ray)


def fan_offsets(fov: float, n: int) -> np.ndarray:
    """n bearings evenly spanning [-fov/2, +fov/2] (single ray looks ahead)."""
    if n < 1:
        raise ValueError("need at least one ray")
    if n == 1:
        return np.zeros(1)
    return np.linspace(-fov / 2.0, fov / 2.0, n)


def ray_cast(grid: OccupancyGrid, origin, bearing, max_range) -> float:
    """Range to the first occupied cell boundary along a bearing.

    Marches the exact cell-crossing sequence from the origin, returning
    the ray parameter at which the occupied cell is entered; max_range
    when nothing is hit inside the grid. An origin inside an occupied
    cell returns 0. Origin outside the grid extents is a domain error.
    """
    x, y = float(origin[0]), float(origin[1])
    if not grid.in_bounds_world(x, y):
        raise ValueError("ray origin outside grid extents")
    res = grid.resolution
    ox, oy = grid.origin
    ix, iy = grid.world_to_cell(x, y)
    ix = min(max(ix, 0), grid.width - 1)
    iy = min(max(iy, 0), grid.height - 1)
    occ = grid.occupied
    if occ[iy, ix]:
        return 0.0
    dx, dy = math.cos(bearing), math.sin(bearing)
    if dx > 0:
        step_x, tx = 1, (ox + (ix + 1) * res - x) / dx
        tdx = res / dx
    elif dx < 0:
        step_x, tx = -1, (ox + ix * res - x) / dx
        tdx = -res / dx
    else:
        step_x, tx, tdx = 0, math.inf, math.inf
    if dy > 0:
        step_y, ty = 1, (oy + (iy + 1) * res - y) / dy
        tdy = res / dy
    elif dy < 0:
        step_y, ty = -1, (oy + iy * res - y) / dy
        tdy = -res / dy
    else:
        step_y, ty, tdy = 0, math.inf, math.inf
    while True:
        if tx <= ty:
            t = tx
            ix += step_x
            tx += tdx
        else:
            t = ty
            iy += step_y
            ty += tdy
        if t > max_range:
            return float(max_range)
        if not (0 <= ix < grid.width and 0 <= iy < grid.height):
            return float(max_range)
        if occ[iy, ix]:
            return float(min(t, max_range))


def ray_cast_batch(grid: OccupancyGrid, origins, bearings, max_range, return_cells=False):
    """Vectorised `ray_cast` over many rays.

    origins is (n, 2) world points, bearings (n,). Returns the (n,)
    ranges, or with return_cells a tuple (ranges, hit_ix, hit_iy,
    hit_mask) where hit indices are -1 for rays that hit nothing. All
    origins must lie inside the grid extents. The traversal and its
    x-before-y tie rule match the scalar routine exactly.
    """
    origins = np.asarray(origins, dtype=float)
    bearings = np.asarray(bearings, dtype=float)
    n = bearings.shape[0]
    res = grid.resolution
    ox, oy = grid.origin
    x0, y0, x1, y1 = grid.extent
    x = origins[:, 0]
    y = origins[:, 1]
    if not ((x >= x0) & (x < x1) & (y >= y0) & (y < y1)).all():
        raise ValueError("ray origin outside grid extents")
    W, H = grid.width, grid.height
    ix = np.clip(np.floor((x - ox) / res).astype(np.int64), 0, W - 1)
    iy = np.clip(np.floor((y - oy) / res).astype(np.int64), 0, H - 1)
    flat = grid.occupied.ravel()

    ranges = np.full(n, float(max_range))
    hit_ix = np.full(n, -1, dtype=np.int64)
    hit_iy = np.full(n, -1, dtype=np.int64)
    hit = np.zeros(n, dtype=bool)

    occ0 = flat[iy * W + ix]
    ranges[occ0] = 0.0
    hit[occ0] = True
    hit_ix[occ0] = ix[occ0]
    hit_iy[occ0] = iy[occ0]

    idx = np.nonzero(~occ0)[0]
    if idx.size:
        dx = np.cos(bearings[idx])
        dy = np.sin(bearings[idx])
        step_x = np.sign(dx).astype(np.int64)
        step_y = np.sign(dy).astype(np.int64)
        with np.errstate(divide="ignore"):
            inv_dx = np.where(dx != 0, 1.0 / np.where(dx != 0, dx, 1.0), np.inf)
            inv_dy = np.where(dy != 0, 1.0 / np.where(dy != 0, dy, 1.0), np.inf)
        tdx = np.where(step_x != 0, res * np.abs(inv_dx), np.inf)
        tdy = np.where(step_y != 0, res * np.abs(inv_dy), np.inf)
        bx = ox + (ix[idx] + (step_x > 0)) * res
        by = oy + (iy[idx] + (step_y > 0)) * res
        tx = np.where(step_x != 0, (bx - x[idx]) * np.where(step_x != 0, inv_dx, 0.0), np.inf)
        ty = np.where(step_y != 0, (by - y[idx]) * np.where(step_y != 0, inv_dy, 0.0), np.inf)
        cx = ix[idx].copy()
        cy = iy[idx].copy()
        while idx.size:
            take_x = tx <= ty
            t = np.where(take_x, tx, ty)
            cx = cx + np.where(take_x, step_x, 0)
            cy = cy + np.where(take_x, 0, step_y)
            tx = tx + np.where(take_x, tdx, 0.0)
            ty = ty + np.where(take_x, 0.0, tdy)
            over = t > max_range
            oob = (cx < 0) | (cx >= W) | (cy < 0) | (cy >= H)
            alive = ~(over | oob)
            occ_here = np.zeros_like(alive)
            occ_here[alive] = flat[cy[alive] * W + cx[alive]]
            new_hit = alive & occ_here
            if new_hit.any():
                g = idx[new_hit]
                ranges[g] = np.minimum(t[new_hit], max_range)
                hit[g] = True
                hit_ix[g] = cx[new_hit]
                hit_iy[g] = cy[new_hit]
            keep = alive & ~occ_here
            if not keep.all():
                idx = idx[keep]
                cx, cy = cx[keep], cy[keep]
                tx, ty = tx[keep], ty[keep]
                tdx, tdy = tdx[keep], tdy[keep]
                step_x, step_y = step_x[keep], step_y[keep]
    if return_cells:
        return ranges, hit_ix, hit_iy, hit
    return ranges


def bresenham_cells(a, b):
    """Inclusive Bresenham cell sequence from cell a to cell b."""
    x0, y0 = int(a[0]), int(a[1])
    x1, y1 = int(b[0]), int(b[1])
    dx, dy = abs(x1 - x0), abs(y1 - y0)
    sx = 1 if x1 >= x0 else -1
    sy = 1 if y1 >= y0 else -1
    err = dx - dy
    cells = [(x0, y0)]
    x, y = x0, y0
    while (x, y) != (x1, y1):
        e2 = 2 * err
        if e2 > -dy:
            err -= dy
            x += sx
        if e2 < dx:
            err += dx
            y += sy
        cells.append((x, y))
    return cells


def snap_to_occupied(grid: OccupancyGrid, camera_xy, point_xy, max_steps=10):
    """Pull/push a point along the camera ray onto the nearest occupied cell.

    Walks the Bresenham cell sequence of the camera->point ray, first
    beyond the point (push) then back toward the camera (pull), up to
    max_steps cells each way. Returns ((x, y), snapped); the point is
    unchanged with snapped False when no occupied cell is found.
    """
    for px, py in (camera_xy, point_xy):
        if not grid.in_bounds_world(px, py):
            raise ValueError("snap endpoints must lie inside grid extents")
    occ = grid.occupied
    pc = grid.world_to_cell(*point_xy)
    if occ[pc[1], pc[0]]:
        return grid.cell_center(*pc), True
    cc = grid.world_to_cell(*camera_xy)
    ddx, ddy = pc[0] - cc[0], pc[1] - cc[1]
    if ddx == 0 and ddy == 0:
        return (float(point_xy[0]), float(point_xy[1])), False
    reach = max(abs(ddx), abs(ddy))
    k = max_steps // reach + 2
    forward = bresenham_cells(pc, (pc[0] + ddx * k, pc[1] + ddy * k))[1:]
    backward = bresenham_cells(cc, pc)[:-1][::-1]
    for seq in (forward, backward):
        for cx, cy in seq[:max_steps]:
            if not grid.in_bounds_cell(cx, cy):
                break
            if occ[cy, cx]:
                return grid.cell_center(cx, cy), True
    return (float(point_xy[0]), float(point_xy[1])), False


class SemanticVoxelGrid:
    """Sparse 3-D grid of per-class count histograms (the semantic map).

    Voxels share the occupancy grid's origin; absent voxels mean all-zero
    counts. Histograms accumulate during the mapping phase only, after
    which the grid is read-only.
    """

    def __init__(self, nx, ny, nz=8, xy_resolution=0.20, z_resolution=0.30,
                 num_classes=14, origin=(0.0, 0.0), z_min=0.0):
        if xy_resolution <= 0 or z_resolution <= 0:
            raise ValueError("voxel resolutions must be positive")
        if min(nx, ny, nz) < 1 or num_classes < 1:
            raise ValueError("voxel extents and class count must be at least 1")
        self.nx, self.ny, self.nz = int(nx), int(ny), int(nz)
        self.xy_resolution = float(xy_resolution)
        self.z_resolution = float(z_resolution)
        self.num_classes = int(num_classes)
        self.origin = (float(origin[0]), float(origin[1]))
        self.z_min = float(z_min)
        self.voxels = {}
        self._columns = None

    @classmethod
    def covering(cls, occ: OccupancyGrid, xy_resolution=0.20, z_resolution=0.30,
                 num_classes=14, nz=8, z_min=0.0) -> "SemanticVoxelGrid":
        """Empty semantic grid whose footprint covers the occupancy grid."""
        nx = int(math.ceil(occ.width * occ.resolution / xy_resolution - 1e-12))
        ny = int(math.ceil(occ.height * occ.resolution / xy_resolution - 1e-12))
        return cls(nx, ny, nz, xy_resolution, z_resolution, num_classes,
                   origin=occ.origin, z_min=z_min)

    def voxel_of_world(self, x, y, z):
        """Containing voxel index, clamped to the grid on every axis."""
        ix = int(math.floor((x - self.origin[0]) / self.xy_resolution))
        iy = int(math.floor((y - self.origin[1]) / self.xy_resolution))
        iz = int(math.floor((z - self.z_min) / self.z_resolution))
        return (
            min(max(ix, 0), self.nx - 1),
            min(max(iy, 0), self.ny - 1),
            min(max(iz, 0), self.nz - 1),
        )

    def column_counts(self) -> np.ndarray:
        """Dense (ny, nx, C) per-column histograms summed over z, cached."""
        if self._columns is None:
            cols = np.zeros((self.ny, self.nx, self.num_classes))
            for key in sorted(self.voxels):
                ix, iy, _ = key
                cols[iy, ix] += self.voxels[key]
            self._columns = cols
        return self._columns

    def total_count(self) -> float:
        return float(sum(h.sum() for h in self.voxels.values()))

    def copy(self) -> "SemanticVoxelGrid":
        out = SemanticVoxelGrid(self.nx, self.ny, self.nz, self.xy_resolution,
                                self.z_resolution, self.num_classes, self.origin,
                                self.z_min)
        out.voxels = {k: v.copy() for k, v in self.voxels.items()}
        return out


def insert_detection(semgrid: SemanticVoxelGrid, point, class_id):
    """Add one observed instance of a class at a 3-D map point.

    Points outside the voxel extents clamp to the nearest voxel so that
    mapping noise never drops evidence.
    """
    c = int(class_id)
    if not 0 <= c < semgrid.num_classes:
        raise ValueError(f"class_id {c} outside [0, {semgrid.num_classes})")
    key = semgrid.voxel_of_world(float(point[0]), float(point[1]), float(point[2]))
    hist = semgrid.voxels.get(key)
    if hist is None:
        hist = np.zeros(semgrid.num_classes)
        semgrid.voxels[key] = hist
    hist[c] += 1.0
    semgrid._columns = None


def _accumulate_views(occ: OccupancyGrid, sem: SemanticVoxelGrid, pose_idx, n_poses,
                      rel_bearings, ranges, hit_ix, hit_iy, hit_mask):
    """Aggregate ray hits into per-pose semantic vectors (vectorised core).

    Each distinct semantic column hit by a pose's rays contributes its
    z-summed class histogram once; its representative range and bearing
    are the means over the rays of that pose that hit it. Per-class range
    and bearing are then count-weighted means over contributing columns.
    Group order is sorted (pose, column), so results are bit-stable.
    """
    C = sem.num_classes
    counts = np.zeros((n_poses, C))
    d_num = np.zeros((n_poses, C))
    b_num = np.zeros((n_poses, C))
    if hit_mask.any():
        sel = hit_mask
        cxw = occ.origin[0] + (hit_ix[sel] + 0.5) * occ.resolution
        cyw = occ.origin[1] + (hit_iy[sel] + 0.5) * occ.resolution
        vx = np.clip(np.floor((cxw - sem.origin[0]) / sem.xy_resolution).astype(np.int64),
                     0, sem.nx - 1)
        vy = np.clip(np.floor((cyw - sem.origin[1]) / sem.xy_resolution).astype(np.int64),
                     0, sem.ny - 1)
        v_flat = vy * sem.nx + vx
        stride = sem.nx * sem.ny
        comb = np.asarray(pose_idx)[sel].astype(np.int64) * stride + v_flat
        uniq, inv, cnt = np.unique(comb, return_inverse=True, return_counts=True)
        mean_r = np.bincount(inv, weights=np.asarray(ranges)[sel]) / cnt
        mean_b = np.bincount(inv, weights=np.asarray(rel_bearings)[sel]) / cnt
        g_pose = (uniq // stride).astype(np.intp)
        g_col = (uniq % stride).astype(np.intp)
        col_hist = sem.column_counts().reshape(-1, C)[g_col]
        np.add.at(counts, g_pose, col_hist)
        np.add.at(d_num, g_pose, col_hist * mean_r[:, None])
        np.add.at(b_num, g_pose, col_hist * mean_b[:, None])
    nz = counts > 0
    safe = np.where(nz, counts, 1.0)
    v_d = np.where(nz, d_num / safe, 0.0)
    v_b = np.where(nz, b_num / safe, 0.0)
    return counts, v_d, v_b


def view_columns(occ: OccupancyGrid, sem: SemanticVoxelGrid, pose: Pose,
                 cam: CameraModel, n_rays: int):
    """Per-column breakdown of a camera view, sorted by column index.

    Returns a list of (col_ix, col_iy, histogram, range, bearing) with one
    entry per distinct semantic column hit by the view's rays; range and
    bearing (pose-relative) are means over the rays hitting that column.
    Aggregating these rows class-wise reproduces expected_semantic_view.
    """
    offsets = fan_offsets(cam.fov, n_rays)
    origins = np.tile([pose.x, pose.y], (offsets.shape[0], 1))
    ranges, hix, hiy, hit = ray_cast_batch(occ, origins, pose.theta + offsets,
                                           cam.max_range, return_cells=True)
    if not hit.any():
        return []
    cxw = occ.origin[0] + (hix[hit] + 0.5) * occ.resolution
    cyw = occ.origin[1] + (hiy[hit] + 0.5) * occ.resolution
    vx = np.clip(np.floor((cxw - sem.origin[0]) / sem.xy_resolution).astype(np.int64),
                 0, sem.nx - 1)
    vy = np.clip(np.floor((cyw - sem.origin[1]) / sem.xy_resolution).astype(np.int64),
                 0, sem.ny - 1)
    v_flat = vy * sem.nx + vx
    uniq, inv, cnt = np.unique(v_flat, return_inverse=True, return_counts=True)
    mean_r = np.bincount(inv, weights=ranges[hit]) / cnt
    mean_b = np.bincount(inv, weights=offsets[hit]) / cnt
    cols = sem.column_counts()
    out = []
    for i, vf in enumerate(uniq):
        ciy, cix = divmod(int(vf), sem.nx)
        out.append((cix, ciy, cols[ciy, cix].copy(), float(mean_r[i]),
                    float(mean_b[i])))
    return out


def expected_semantic_view(occ: OccupancyGrid, sem: SemanticVoxelGrid, pose: Pose,
                           cam: CameraModel, n_rays: int) -> SemanticVector:
    """Semantic vector a camera at `pose` should see, by map ray casting.

    Casts n_rays bearings evenly across the field of view; every ray that
    hits an occupied cell contributes the class histograms of that cell's
    full semantic column (all z layers). Bearings in the result are
    relative to the pose heading.
    """
    offsets = fan_offsets(cam.fov, n_rays)
    origins = np.tile([pose.x, pose.y], (offsets.shape[0], 1))
    ranges, hix, hiy, hit = ray_cast_batch(occ, origins, pose.theta + offsets,
                                           cam.max_range, return_cells=True)
    counts, v_d, v_b = _accumulate_views(
        occ, sem, np.zeros(offsets.shape[0], dtype=np.int64), 1,
        offsets, ranges, hix, hiy, hit)
    return SemanticVector(counts[0], v_d[0], v_b[0])


def save_map_json(path, occ: OccupancyGrid, sem: SemanticVoxelGrid):
    """Write the paired geometric and semantic maps to one JSON file."""
    payload = {
        "occupancy": {
            "resolution": occ.resolution,
            "origin": list(occ.origin),
            "width": occ.width,
            "height": occ.height,
            "cells": "".join(_CELL_TO_CHAR[int(c)] for c in occ.cells.ravel()),
        },
        "semantic": {
            "xy_resolution": sem.xy_resolution,
            "z_resolution": sem.z_resolution,
            "num_classes": sem.num_classes,
            "voxels": [
                {"ix": k[0], "iy": k[1], "iz": k[2],
                 "counts": [int(c) for c in sem.voxels[k]]}
                for k in sorted(sem.voxels)
            ],
        },
    }
    with open(path, "w") as f:
        json.dump(payload, f)


def load_map_json(path):
    """Load (OccupancyGrid, SemanticVoxelGrid); rejects mismatched extents."""
    with open(path) as f:
        payload = json.load(f)
    o = payload["occupancy"]
    width, height = int(o["width"]), int(o["height"])
    text = o["cells"]
    if len(text) != width * height:
        raise ValueError("occupancy cells length does not match width*height")
    try:
        states = [_CHAR_TO_CELL[ch] for ch in text]
    except KeyError as exc:
        raise ValueError(f"unknown occupancy cell character {exc}") from exc
    cells = np.array(states, dtype=np.uint8).reshape(height, width)
    occ = OccupancyGrid(width, height, float(o["resolution"]),
                        tuple(o["origin"]), cells)

    s = payload["semantic"]
    voxels = s.get("voxels", [])
    nz = max((int(v["iz"]) for v in voxels), default=7) + 1
    sem = SemanticVoxelGrid.covering(occ, float(s["xy_resolution"]),
                                     float(s["z_resolution"]),
                                     int(s["num_classes"]), nz=nz)
    for v in voxels:
        ix, iy, iz = int(v["ix"]), int(v["iy"]), int(v["iz"])
        if not (0 <= ix < sem.nx and 0 <= iy < sem.ny and 0 <= iz < sem.nz):
            raise ValueError(
                f"semantic voxel ({ix},{iy},{iz}) outside the occupancy footprint")
        counts = np.asarray(v["counts"], dtype=float)
        if counts.shape != (sem.num_classes,):
            raise ValueError("voxel histogram length does not match num_classes")
        if (counts < 0).any():
            raise ValueError("voxel histogram counts must be non-negative")
        sem.voxels[(ix, iy, iz)] = counts
    return occ, sem
