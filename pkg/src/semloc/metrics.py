"""Convergence detection, trial success, and trajectory error metrics."""

import math

from .geometry import wrap_angle


def _pose_errors(est, gt):
    if len(est) != len(gt):
        raise ValueError("estimate and ground-truth logs differ in length")
    if not est:
        raise ValueError("logs are empty")
    out = []
    for (te, pe), (tg, pg) in zip(est, gt):
        d = math.hypot(pe.x - pg.x, pe.y - pg.y)
        r = abs(wrap_angle(pe.theta - pg.theta))
        out.append((float(te), d, r))
    return out


def detect_convergence(est, gt, conv_trans: float, conv_rot: float):
    """Start time of the final convergent suffix, or None.

    A sample converges when its position error is within conv_trans and
    its wrapped heading error within conv_rot. The filter counts as
    converged from the first sample of the last maximal suffix in which
    every sample passes; None when the final sample fails (the run never
    stays converged).
    """
    errors = _pose_errors(est, gt)
    ok = [d <= conv_trans and r <= conv_rot for _, d, r in errors]
    if not ok[-1]:
        return None
    i = len(ok) - 1
    while i > 0 and ok[i - 1]:
        i -= 1
    return errors[i][0]


def trial_success(final_conv_time, trajectory_duration: float) -> bool:
    """Converged within the first 95% of the trajectory (and held to the end)."""
    if trajectory_duration <= 0:
        raise ValueError("trajectory duration must be positive")
    return (final_conv_time is not None
            and final_conv_time <= 0.95 * trajectory_duration)


def ate_rmse(est, gt, from_time: float):
    """(translation, rotation) RMSE over samples with t >= from_time."""
    errors = _pose_errors(est, gt)
    window = [(d, r) for t, d, r in errors if t >= from_time]
    if not window:
        raise ValueError("no samples at or after from_time")
    n = len(window)
    trans = math.sqrt(sum(d * d for d, _ in window) / n)
    rot = math.sqrt(sum(r * r for _, r in window) / n)
    return trans, rot
