"""Precomputed semantic views over a pose grid and fast inverse queries.

The bank caches the expected semantic vector for every free pose-grid
cell and orientation bin, plus a reverse index from each class to the
poses that can see it. At runtime an observed vector is matched against
the bank to propose global pose hypotheses.
"""

import json
import math
from dataclasses import dataclass

import numpy as np

from .geometry import Pose, wrap_angle
from .semantics import SemanticVector, SimilarityWeights, similarity_batch
from .world import (
    CameraModel,
    OccupancyGrid,
    SemanticVoxelGrid,
    _accumulate_views,
    fan_offsets,
    ray_cast_batch,
)

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class PoseGridSpec:
    """Discretisation of free space into xy cells and orientation bins."""

    xy_step: float = 0.10
    n_theta: int = 36

    def __post_init__(self):
        if self.xy_step <= 0:
            raise ValueError("xy_step must be positive")
        if self.n_theta < 1:
            raise ValueError("n_theta must be at least 1")


class SemanticViewBank:
    """Immutable bank of quantised poses and their expected semantic views."""

    def __init__(self, spec: PoseGridSpec, origin, num_classes, keys,
                 counts, mean_range, mean_bearing):
        self.spec = spec
        self.origin = (float(origin[0]), float(origin[1]))
        self.num_classes = int(num_classes)
        self.keys = np.asarray(keys, dtype=np.int64).reshape(-1, 3)
        self.counts = np.asarray(counts, dtype=float).reshape(-1, num_classes)
        self.mean_range = np.asarray(mean_range, dtype=float).reshape(-1, num_classes)
        self.mean_bearing = np.asarray(mean_bearing, dtype=float).reshape(-1, num_classes)
        if not (len(self.keys) == len(self.counts) == len(self.mean_range)
                == len(self.mean_bearing)):
            raise ValueError("bank arrays must have one row per pose key")
        self.masks = self.counts > 0
        self.entries = {tuple(k): i for i, k in enumerate(map(tuple, self.keys))}
        self.class_to_poses = [
            np.nonzero(self.masks[:, c])[0] for c in range(self.num_classes)
        ]
        self._row_lookup = None
        # scoring caches: row count totals, row-normalised distributions,
        # and candidate-row unions per visible-class set
        self._totals = self.counts.sum(axis=1)
        pos = self._totals > 0
        self._q_norm = np.where(
            pos[:, None],
            self.counts / np.where(pos, self._totals, 1.0)[:, None], 0.0)
        self._candidate_cache = {}

    def __len__(self) -> int:
        return self.keys.shape[0]

    # --- pose key coding ---------------------------------------------------

    def decode_key(self, key) -> Pose:
        ix, iy, it = (int(v) for v in key)
        step = self.spec.xy_step
        dth = TWO_PI / self.spec.n_theta
        return Pose(
            self.origin[0] + (ix + 0.5) * step,
            self.origin[1] + (iy + 0.5) * step,
            -math.pi + (it + 0.5) * dth,
        )

    def key_for_pose(self, pose: Pose):
        """Pose-grid key containing a pose (its nearest bank key)."""
        step = self.spec.xy_step
        dth = TWO_PI / self.spec.n_theta
        ix = int(math.floor((pose.x - self.origin[0]) / step))
        iy = int(math.floor((pose.y - self.origin[1]) / step))
        it = int(math.floor((wrap_angle(pose.theta) + math.pi) / dth)) % self.spec.n_theta
        return (ix, iy, it)

    # --- entry access --------------------------------------------------------

    def entry_vector(self, key) -> SemanticVector:
        row = self.entries[tuple(int(v) for v in key)]
        return SemanticVector(self.counts[row], self.mean_range[row],
                              self.mean_bearing[row])

    def class_pose_keys(self, class_id: int):
        """Keys of every pose from which class_id is visible."""
        return [tuple(self.keys[r]) for r in self.class_to_poses[int(class_id)]]

    def rows_for_classes(self, class_ids) -> np.ndarray:
        """Sorted unique bank rows seeing any of the given classes."""
        key = frozenset(int(c) for c in class_ids)
        cached = self._candidate_cache.get(key)
        if cached is not None:
            return cached
        groups = [self.class_to_poses[c] for c in sorted(key)]
        if not groups:
            rows = np.empty(0, dtype=np.int64)
        else:
            rows = np.unique(np.concatenate(groups))
        self._candidate_cache[key] = rows
        return rows

    def rows_for_keys(self, keys) -> np.ndarray:
        """Row index per quantised key, -1 where the key is not banked."""
        keys = np.asarray(keys, dtype=np.int64).reshape(-1, 3)
        if self._row_lookup is None:
            if len(self.keys) == 0:
                self._row_lookup = np.full((1, 1, 1), -1, dtype=np.int64)
            else:
                dims = self.keys.max(axis=0) + 1
                table = np.full(tuple(dims), -1, dtype=np.int64)
                table[self.keys[:, 0], self.keys[:, 1], self.keys[:, 2]] = \
                    np.arange(len(self.keys))
                self._row_lookup = table
        table = self._row_lookup
        ok = ((keys >= 0) & (keys < np.array(table.shape))).all(axis=1)
        rows = np.full(keys.shape[0], -1, dtype=np.int64)
        sel = keys[ok]
        rows[ok] = table[sel[:, 0], sel[:, 1], sel[:, 2]]
        return rows


def precompute_bank(occ: OccupancyGrid, sem: SemanticVoxelGrid, cam: CameraModel,
                    spec: PoseGridSpec, n_rays: int = 20,
                    chunk_size: int = 4096) -> SemanticViewBank:
    """Render the expected semantic view for every free pose-grid cell.

    Entries are generated in ascending (ix, iy, itheta) order over cells
    whose centre lies in free occupancy space; all-zero views are kept
    as negative evidence. Two builds of the same maps are bit-identical.
    """
    if occ.origin != sem.origin:
        raise ValueError("occupancy and semantic maps must share an origin")
    step = spec.xy_step
    gnx = int(math.ceil(occ.width * occ.resolution / step - 1e-12))
    gny = int(math.ceil(occ.height * occ.resolution / step - 1e-12))
    ii, jj = np.meshgrid(np.arange(gnx), np.arange(gny), indexing="ij")
    ii, jj = ii.ravel(), jj.ravel()
    px = occ.origin[0] + (ii + 0.5) * step
    py = occ.origin[1] + (jj + 0.5) * step
    ci = np.floor((px - occ.origin[0]) / occ.resolution).astype(np.int64)
    cj = np.floor((py - occ.origin[1]) / occ.resolution).astype(np.int64)
    inside = (ci >= 0) & (ci < occ.width) & (cj >= 0) & (cj < occ.height)
    free = np.zeros(ii.shape, dtype=bool)
    free[inside] = occ.cells[cj[inside], ci[inside]] == 0
    ii, jj = ii[free], jj[free]
    px, py = px[free], py[free]

    n_th = spec.n_theta
    n_pos = ii.shape[0]
    m = n_pos * n_th
    keys = np.empty((m, 3), dtype=np.int64)
    keys[:, 0] = np.repeat(ii, n_th)
    keys[:, 1] = np.repeat(jj, n_th)
    keys[:, 2] = np.tile(np.arange(n_th), n_pos)
    pose_x = np.repeat(px, n_th)
    pose_y = np.repeat(py, n_th)
    dth = TWO_PI / n_th
    pose_t = wrap_angle(-math.pi + (keys[:, 2] + 0.5) * dth)

    C = sem.num_classes
    counts = np.zeros((m, C))
    mean_r = np.zeros((m, C))
    mean_b = np.zeros((m, C))
    offsets = fan_offsets(cam.fov, n_rays)
    nr = offsets.shape[0]
    for lo in range(0, m, chunk_size):
        hi = min(lo + chunk_size, m)
        cm = hi - lo
        origins = np.empty((cm * nr, 2))
        origins[:, 0] = np.repeat(pose_x[lo:hi], nr)
        origins[:, 1] = np.repeat(pose_y[lo:hi], nr)
        bearings = (pose_t[lo:hi][:, None] + offsets[None, :]).ravel()
        rel = np.tile(offsets, cm)
        pose_idx = np.repeat(np.arange(cm), nr)
        ranges, hix, hiy, hit = ray_cast_batch(occ, origins, bearings,
                                               cam.max_range, return_cells=True)
        c, d, b = _accumulate_views(occ, sem, pose_idx, cm, rel, ranges,
                                    hix, hiy, hit)
        counts[lo:hi] = c
        mean_r[lo:hi] = d
        mean_b[lo:hi] = b
    return SemanticViewBank(spec, occ.origin, C, keys, counts, mean_r, mean_b)


def candidates_for(bank: SemanticViewBank, z: SemanticVector) -> set:
    """Union of pose keys that can see any class visible in `z`."""
    if not z.mask.any():
        raise ValueError("observation has no visible class")
    rows = bank.rows_for_classes(np.nonzero(z.mask)[0])
    return {tuple(bank.keys[r]) for r in rows}


def top_k_poses(bank: SemanticViewBank, z: SemanticVector, w: SimilarityWeights,
                fov: float, k: int):
    """Best-scoring candidate poses for an observation, descending score.

    Candidates are the poses seeing at least one observed class; each is
    scored with the composite similarity. Ties break by ascending
    (ix, iy, itheta) key, so results are deterministic. An empty
    candidate set yields an empty list.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    if not z.mask.any():
        return []
    rows = bank.rows_for_classes(np.nonzero(z.mask)[0])
    if rows.size == 0:
        return []
    scores = similarity_batch(z, bank.counts[rows], bank.mean_range[rows],
                              bank.mean_bearing[rows], bank.masks[rows], w, fov,
                              q_norm=bank._q_norm[rows],
                              totals=bank._totals[rows])
    kk = bank.keys[rows]
    order = np.lexsort((kk[:, 2], kk[:, 1], kk[:, 0], -scores))
    take = order[: int(k)]
    return [(bank.decode_key(kk[i]), float(scores[i])) for i in take]


def save_bank_json(path, bank: SemanticViewBank):
    payload = {
        "spec": {
            "xy_step": bank.spec.xy_step,
            "n_theta": bank.spec.n_theta,
            "origin": list(bank.origin),
            "num_classes": bank.num_classes,
        },
        "entries": [
            {
                "key": [int(v) for v in bank.keys[i]],
                "counts": bank.counts[i].tolist(),
                "mean_range": bank.mean_range[i].tolist(),
                "mean_bearing": bank.mean_bearing[i].tolist(),
            }
            for i in range(len(bank))
        ],
        "class_to_poses": [
            [[int(v) for v in bank.keys[r]] for r in bank.class_to_poses[c]]
            for c in range(bank.num_classes)
        ],
    }
    with open(path, "w") as f:
        json.dump(payload, f)


def load_bank_json(path) -> SemanticViewBank:
    with open(path) as f:
        payload = json.load(f)
    s = payload["spec"]
    spec = PoseGridSpec(float(s["xy_step"]), int(s["n_theta"]))
    num_classes = int(s["num_classes"])
    entries = payload["entries"]
    m = len(entries)
    keys = np.zeros((m, 3), dtype=np.int64)
    counts = np.zeros((m, num_classes))
    mean_r = np.zeros((m, num_classes))
    mean_b = np.zeros((m, num_classes))
    for i, e in enumerate(entries):
        keys[i] = e["key"]
        counts[i] = e["counts"]
        mean_r[i] = e["mean_range"]
        mean_b[i] = e["mean_bearing"]
    bank = SemanticViewBank(spec, tuple(s["origin"]), num_classes,
                            keys, counts, mean_r, mean_b)
    stored = payload.get("class_to_poses")
    if stored is not None:
        rebuilt = [
            sorted(tuple(int(v) for v in bank.keys[r]) for r in bank.class_to_poses[c])
            for c in range(num_classes)
        ]
        given = [sorted(tuple(int(v) for v in key) for key in lst) for lst in stored]
        if rebuilt != given:
            raise ValueError("class_to_poses index inconsistent with entry masks")
    return bank
