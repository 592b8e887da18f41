"""Semantic observation vectors and the composite view similarity.

An observation summarises the classes visible from a pose as three
per-class sub-vectors: instance counts, mean range, and mean bearing.
Two observations are compared with a weighted blend of a count-histogram
distance (Jensen-Shannon), a range term, and a bearing term; classes
missing from either view are masked out of the spatial terms.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import wrap_angle


class InsufficientSemanticsError(ValueError):
    """Raised when a comparison carries no semantic evidence at all."""


@dataclass
class SemanticVector:
    """Per-class counts plus mean range/bearing of the visible classes.

    The visibility mask is derived from the counts (mask[c] iff
    counts[c] > 0) and spatial entries of invisible classes are zeroed.
    """

    counts: np.ndarray
    mean_range: np.ndarray
    mean_bearing: np.ndarray
    mask: np.ndarray = field(init=False)

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=float)
        self.mean_range = np.asarray(self.mean_range, dtype=float)
        self.mean_bearing = np.asarray(self.mean_bearing, dtype=float)
        if not (self.counts.shape == self.mean_range.shape == self.mean_bearing.shape):
            raise ValueError("semantic vector components must share one shape")
        if (self.counts < 0).any():
            raise ValueError("semantic counts must be non-negative")
        self.mask = self.counts > 0
        self.mean_range = np.where(self.mask, self.mean_range, 0.0)
        self.mean_bearing = np.where(self.mask, self.mean_bearing, 0.0)

    @property
    def num_classes(self) -> int:
        return self.counts.shape[0]

    def is_empty(self) -> bool:
        return not self.mask.any()

    @classmethod
    def empty(cls, num_classes: int) -> "SemanticVector":
        z = np.zeros(num_classes)
        return cls(z, z.copy(), z.copy())


@dataclass(frozen=True)
class SimilarityWeights:
    """Blend weights for the count / range / bearing similarity terms."""

    alpha: float = 0.4
    beta: float = 0.4
    gamma: float = 0.2

    def __post_init__(self):
        if min(self.alpha, self.beta, self.gamma) < 0:
            raise ValueError("similarity weights must be non-negative")
        if abs(self.alpha + self.beta + self.gamma - 1.0) > 1e-9:
            raise ValueError("similarity weights must sum to 1")


def build_semantic_vector(detections, num_classes: int) -> SemanticVector:
    """Aggregate (class_id, range, bearing) detections into a SemanticVector.

    Counts tally detections per class; range and bearing are arithmetic
    means over each class's detections. Classes with no detections stay
    zero everywhere.
    """
    counts = np.zeros(num_classes)
    r_sum = np.zeros(num_classes)
    b_sum = np.zeros(num_classes)
    for class_id, rng, bearing in detections:
        c = int(class_id)
        if not 0 <= c < num_classes:
            raise ValueError(f"class_id {c} outside [0, {num_classes})")
        if rng <= 0:
            raise ValueError("detection range must be positive")
        counts[c] += 1
        r_sum[c] += rng
        b_sum[c] += bearing
    nz = counts > 0
    mean_r = np.where(nz, r_sum / np.where(nz, counts, 1.0), 0.0)
    mean_b = np.where(nz, b_sum / np.where(nz, counts, 1.0), 0.0)
    return SemanticVector(counts, mean_r, mean_b)


def jsd(p_counts, q_counts) -> float:
    """Jensen-Shannon distance between two count vectors, in [0, 1].

    Inputs are normalised to categorical distributions; base-2 logs bound
    the result by exactly 1. A vector with zero total mass against a
    positive one is treated as disjoint support (distance 1); both-zero
    input is a domain error the caller must gate.
    """
    p = np.asarray(p_counts, dtype=float)
    q = np.asarray(q_counts, dtype=float)
    if (p < 0).any() or (q < 0).any():
        raise ValueError("counts must be non-negative")
    sp, sq = p.sum(), q.sum()
    if sp == 0 and sq == 0:
        raise InsufficientSemanticsError("both count vectors are empty")
    if sp == 0 or sq == 0:
        return 1.0
    P = p / sp
    Q = q / sq
    M = 0.5 * (P + Q)
    with np.errstate(divide="ignore", invalid="ignore"):
        tp = np.where(P > 0, P * np.log2(np.where(P > 0, P, 1.0) / np.where(M > 0, M, 1.0)), 0.0)
        tq = np.where(Q > 0, Q * np.log2(np.where(Q > 0, Q, 1.0) / np.where(M > 0, M, 1.0)), 0.0)
    div = 0.5 * (tp.sum() + tq.sum())
    return float(min(1.0, math.sqrt(max(div, 0.0))))


def similarity(z: SemanticVector, zhat: SemanticVector, w: SimilarityWeights, fov: float) -> float:
    """Composite similarity of two semantic vectors, in [0, 1].

    Counts are compared with 1 - jsd; range and bearing errors are L2
    norms over the classes visible in BOTH views (bearing differences
    wrapped), mapped through 1/(1+d) and 1 - d/fov (clamped). With no
    shared class the spatial terms take the neutral value 0.5. Raises
    InsufficientSemanticsError when both vectors are empty.
    """
    if z.num_classes != zhat.num_classes:
        raise ValueError("semantic vectors must share the class count")
    if fov <= 0:
        raise ValueError("fov must be positive")
    if z.is_empty() and zhat.is_empty():
        raise InsufficientSemanticsError("no semantic evidence in either view")
    s_counts = 1.0 - jsd(z.counts, zhat.counts)
    shared = z.mask & zhat.mask
    if shared.any():
        d_dist = float(np.linalg.norm((z.mean_range - zhat.mean_range)[shared]))
        dth = wrap_angle(z.mean_bearing - zhat.mean_bearing)
        d_ang = float(np.linalg.norm(dth[shared]))
        s_dist = 1.0 / (1.0 + d_dist)
        s_ang = min(1.0, max(0.0, 1.0 - d_ang / fov))
    else:
        s_dist = 0.5
        s_ang = 0.5
    score = w.alpha * s_counts + w.beta * s_dist + w.gamma * s_ang
    return min(1.0, max(0.0, score))  # weight roundoff can overshoot by an ulp


def similarity_batch(z: SemanticVector, counts, mean_range, mean_bearing, masks,
                     w: SimilarityWeights, fov: float,
                     q_norm=None, totals=None) -> np.ndarray:
    """Vectorised `similarity` of one observation against M stored views.

    Rows of the four matrices are candidate views; returns an (M,) score
    array matching the scalar function to floating-point roundoff. Rows
    with zero total count score against `z` with the disjoint-support
    convention (jsd = 1). `z` must be non-empty. q_norm/totals may carry
    the precomputed row-normalised counts and row sums (hot callers cache
    them); when supplied they must equal the derived values bit-exactly.
    """
    counts = np.asarray(counts, dtype=float)
    mean_range = np.asarray(mean_range, dtype=float)
    mean_bearing = np.asarray(mean_bearing, dtype=float)
    masks = np.asarray(masks, dtype=bool)
    sp = z.counts.sum()
    if sp == 0:
        raise InsufficientSemanticsError("observation vector is empty")
    sq = counts.sum(axis=1) if totals is None else np.asarray(totals, dtype=float)
    if q_norm is None:
        qs = np.where(sq[:, None] > 0,
                      counts / np.where(sq[:, None] > 0, sq[:, None], 1.0), 0.0)
    else:
        qs = np.asarray(q_norm, dtype=float)
    P = z.counts / sp
    M = 0.5 * (P[None, :] + qs)
    with np.errstate(divide="ignore", invalid="ignore"):
        tp = np.where(P[None, :] > 0, P[None, :] * np.log2(np.where(P > 0, P, 1.0)[None, :] / np.where(M > 0, M, 1.0)), 0.0)
        tq = np.where(qs > 0, qs * np.log2(np.where(qs > 0, qs, 1.0) / np.where(M > 0, M, 1.0)), 0.0)
    div = 0.5 * (tp.sum(axis=1) + tq.sum(axis=1))
    js = np.minimum(1.0, np.sqrt(np.maximum(div, 0.0)))
    js = np.where(sq > 0, js, 1.0)
    s_counts = 1.0 - js

    shared = masks & z.mask[None, :]
    any_shared = shared.any(axis=1)
    dr = np.where(shared, z.mean_range[None, :] - mean_range, 0.0)
    d_dist = np.sqrt((dr * dr).sum(axis=1))
    db = np.where(shared, wrap_angle(z.mean_bearing[None, :] - mean_bearing), 0.0)
    d_ang = np.sqrt((db * db).sum(axis=1))
    s_dist = np.where(any_shared, 1.0 / (1.0 + d_dist), 0.5)
    s_ang = np.where(any_shared, np.clip(1.0 - d_ang / fov, 0.0, 1.0), 0.5)
    return np.clip(w.alpha * s_counts + w.beta * s_dist + w.gamma * s_ang, 0.0, 1.0)
