"""Planar pose type and angle helpers shared across the package."""

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi


def wrap_angle(theta):
    """Wrap an angle (scalar or ndarray) into (-pi, pi].

    Angles already in range pass through bit-exact, so wrapping is an
    identity for composed zero motions.
    """
    if np.ndim(theta) == 0:
        t = float(theta)
        if -math.pi < t <= math.pi:
            return t
        return math.pi - (math.pi - t) % TWO_PI
    theta = np.asarray(theta, dtype=float)
    outside = (theta <= -math.pi) | (theta > math.pi)
    if not outside.any():
        return theta
    wrapped = math.pi - (math.pi - theta) % TWO_PI
    return np.where(outside, wrapped, theta)


@dataclass(frozen=True)
class Pose:
    """Planar pose (x, y, theta) in the map frame; theta is always wrapped."""

    x: float
    y: float
    theta: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "theta", float(wrap_angle(self.theta)))

    def as_array(self):
        return np.array([self.x, self.y, self.theta], dtype=float)


def compose_body_delta(pose: Pose, dx: float, dy: float, dtheta: float) -> Pose:
    """Apply a body-frame displacement (forward, left, turn) to a pose."""
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    return Pose(
        pose.x + dx * c - dy * s,
        pose.y + dx * s + dy * c,
        pose.theta + dtheta,
    )


def body_delta_between(a: Pose, b: Pose):
    """Body-frame displacement that carries pose ``a`` onto pose ``b``."""
    c, s = math.cos(a.theta), math.sin(a.theta)
    wx, wy = b.x - a.x, b.y - a.y
    return (wx * c + wy * s, -wx * s + wy * c, wrap_angle(b.theta - a.theta))
