"""Quasi-steady-state speed profiles and lap-time estimation.

The performance envelope bounds what the vehicle can do: a lateral
acceleration limit, a tabulated net longitudinal acceleration over speed, a
braking limit and a top speed, all multiplied by a global ``scale`` used to
model cautious early running.  A speed profile is the curvature-limited speed
refined by friction-ellipse-capped forward (acceleration) and backward
(braking) passes iterated around the closed loop until the wrap is
self-consistent.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DegenerateLine
from .track import curvature_closed, polyline_length, resample_closed

G = 9.81
KAPPA_FLOOR = 1e-5  # 1/m, avoids division by zero on straights


@dataclass
class PerformanceEnvelope:
    """Speed-dependent acceleration limits and top speed.

    ``ax_acc_speeds``/``ax_acc_values`` tabulate the net available forward
    acceleration versus speed (non-increasing once power-limited).  ``scale``
    in (0, 1] shrinks every limit uniformly.
    """

    ay_max: float
    ax_brake: float
    v_max: float
    ax_acc_speeds: np.ndarray
    ax_acc_values: np.ndarray
    scale: float = 1.0

    def __post_init__(self) -> None:
        self.ax_acc_speeds = np.asarray(self.ax_acc_speeds, dtype=float)
        self.ax_acc_values = np.asarray(self.ax_acc_values, dtype=float)
        if self.ay_max <= 0 or self.ax_brake <= 0 or self.v_max <= 0:
            raise ValueError("all limits must be positive")
        if not 0.0 < self.scale <= 1.0:
            raise ValueError("scale must be in (0, 1]")
        if len(self.ax_acc_speeds) != len(self.ax_acc_values):
            raise ValueError("acceleration table lengths differ")

    def ax_acc(self, v) -> np.ndarray:
        """Unscaled net forward acceleration available at speed ``v``."""
        return np.interp(v, self.ax_acc_speeds, self.ax_acc_values)

    def with_scale(self, scale: float) -> "PerformanceEnvelope":
        return replace(self, scale=scale)


def expand_envelope(env: PerformanceEnvelope, schedule_step: float = 0.1) -> PerformanceEnvelope:
    """One warm-up step: grow ``scale`` by the schedule step, capped at 1."""
    return env.with_scale(min(1.0, env.scale + schedule_step))


DEFAULT_SCALE_SCHEDULE = (0.7, 0.8, 0.9, 1.0)


@dataclass
class SpeedProfile:
    """Target speed per station plus per-segment traversal times."""

    s: np.ndarray
    v: np.ndarray
    dt: np.ndarray
    lap_time: float
    ds: float = field(default=0.0)

    def speed_at(self, s) -> np.ndarray:
        total = self.ds * len(self.v)
        return np.interp(np.asarray(s, float) % total, self.s, self.v,
                         period=total)


def estimate_speed(
    line: np.ndarray,
    env: PerformanceEnvelope,
    station_spacing: float = 2.0,
    max_iterations: int = 60,
) -> SpeedProfile:
    """Envelope-limited speed profile and lap time for a closed line.

    Three stages: curvature-limited speed, a forward pass capping acceleration
    by the friction-ellipse residual of the lateral usage, and a backward pass
    doing the same for braking.  Passes repeat until the closed-loop fixed
    point is reached.
    """
    pts = np.asarray(line, dtype=float)
    if pts.ndim != 2 or len(pts) < 8:
        raise DegenerateLine("need at least 8 line points")
    total = polyline_length(pts, closed=True)
    if total < 10.0 * station_spacing:
        raise DegenerateLine(f"line length {total:.2f} m is too short")
    n = int(round(total / station_spacing))
    xy = resample_closed(pts, n)
    ds = total / n
    kappa = np.abs(curvature_closed(xy[:, 0], xy[:, 1], ds))
    kappa = np.maximum(kappa, KAPPA_FLOOR)

    ay = env.scale * env.ay_max
    v_lim = np.minimum(env.v_max, np.sqrt(ay / kappa))
    v = v_lim.copy()

    def ellipse_residual(speed: float, k: float) -> float:
        usage = min(1.0, speed * speed * k / ay)
        return float(np.sqrt(max(0.0, 1.0 - usage * usage)))

    for _ in range(max_iterations):
        v_prev = v.copy()
        # forward: acceleration limited by engine table and lateral usage
        for i in range(2 * n):
            a_idx = i % n
            b_idx = (i + 1) % n
            acc = ellipse_residual(v[a_idx], kappa[a_idx]) * env.scale * env.ax_acc(v[a_idx])
            reachable = np.sqrt(v[a_idx] ** 2 + 2.0 * max(acc, 0.0) * ds)
            if reachable < v[b_idx]:
                v[b_idx] = reachable
        # backward: braking limited analogously at the downstream station
        for i in range(2 * n, 0, -1):
            a_idx = (i - 1) % n
            b_idx = i % n
            dec = ellipse_residual(v[b_idx], kappa[b_idx]) * env.scale * env.ax_brake
            reachable = np.sqrt(v[b_idx] ** 2 + 2.0 * max(dec, 0.0) * ds)
            if reachable < v[a_idx]:
                v[a_idx] = reachable
        if np.max(np.abs(v - v_prev)) < 1e-10:
            break
    v = np.minimum(v, v_lim)
    seg_speed = 0.5 * (v + np.roll(v, -1))
    dt = ds / np.maximum(seg_speed, 1e-6)
    return SpeedProfile(s=np.arange(n) * ds, v=v, dt=dt, lap_time=float(dt.sum()), ds=ds)


def envelope_from_car(car, scale: float = 1.0, n_table: int = 33) -> PerformanceEnvelope:
    """Derive envelope limits from plant parameters.

    Uses the static rear-axle load for the traction cap and the drag/rolling
    losses of the plant, so the estimator and the simulated vehicle agree to
    within a few percent.
    """
    wheelbase = car.lf + car.lr
    rear_share = car.lf / wheelbase
    traction_cap = car.mu * car.mass * G * rear_share
    speeds = np.linspace(0.0, 120.0, n_table)
    drive = np.minimum(car.f_drive_max, car.power / np.maximum(speeds, 1.0))
    drive = np.minimum(drive, traction_cap)
    ax = (drive - car.drag_coeff * speeds ** 2 - car.roll_coeff * car.mass * G) / car.mass
    if np.all(ax > 0):
        v_top = float(speeds[-1])
    else:
        cross = int(np.argmax(ax <= 0))
        lo, hi = speeds[cross - 1], speeds[cross]
        alo, ahi = ax[cross - 1], ax[cross]
        v_top = float(lo + (hi - lo) * alo / (alo - ahi))
    ax = np.clip(ax, 0.0, None)
    return PerformanceEnvelope(
        ay_max=car.mu * G,
        ax_brake=car.f_brake_max / car.mass,
        v_max=v_top,
        ax_acc_speeds=speeds,
        ax_acc_values=ax,
        scale=scale,
    )
