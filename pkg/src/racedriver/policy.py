"""Driving policy: preview features and a deterministic action controller.

Feature computation is independent of the policy choice: any callable mapping
a :class:`FeatureVector` to an :class:`~racedriver.vehicle.Action` with the
same determinism contract can be dropped in.  The shipped
:class:`PreviewController` steers with curvature feedforward plus the initial
curvature of a cubic that merges the current pose back onto the target line,
and drives throttle/brake from the acceleration demanded by the target speed
at the preview horizons, clamped by lateral-friction usage.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from .envelope import SpeedProfile
from .errors import LocalizationLost
from .track import (
    curvature_closed,
    headings_closed,
    polyline_length,
    project_closed,
    resample_closed,
)
from .vehicle import Action, balance_metric

if TYPE_CHECKING:  # pragma: no cover
    from .track import Track
    from .vehicle import VehicleState


@dataclass
class TargetTrajectory:
    """A target driving line with its speed profile.

    The line is stored at equidistant stations along its own arc length; the
    speed profile must share that grid.  ``provenance`` records how the target
    was produced (sampled / conditioned / scaled).
    """

    line: np.ndarray
    speed: SpeedProfile
    provenance: str = "sampled"

    s: np.ndarray = field(init=False, repr=False)
    ds: float = field(init=False, repr=False)
    length: float = field(init=False, repr=False)
    heading: np.ndarray = field(init=False, repr=False)
    curvature: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.line = np.asarray(self.line, dtype=float)
        n = len(self.line)
        if len(self.speed.v) != n:
            raise ValueError("speed profile and line must share stations")
        if np.any(self.speed.v <= 0):
            raise ValueError("target speed must be positive everywhere")
        self.length = polyline_length(self.line, closed=True)
        self.ds = self.length / n
        self.s = np.arange(n) * self.ds
        self.heading = headings_closed(self.line[:, 0], self.line[:, 1])
        self.curvature = curvature_closed(self.line[:, 0], self.line[:, 1], self.ds)

    @classmethod
    def build(cls, line: np.ndarray, env, station_spacing: float = 2.0,
              provenance: str = "sampled") -> "TargetTrajectory":
        """Resample a line and attach its envelope speed profile."""
        from .envelope import estimate_speed

        total = polyline_length(np.asarray(line, float), closed=True)
        n = int(round(total / station_spacing))
        xy = resample_closed(np.asarray(line, float), n)
        profile = estimate_speed(xy, env, station_spacing=station_spacing)
        return cls(line=xy, speed=profile, provenance=provenance)

    def wrap(self, s: float) -> float:
        return float(s % self.length)

    def point_at(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float) % self.length
        x = np.interp(s, self.s, self.line[:, 0], period=self.length)
        y = np.interp(s, self.s, self.line[:, 1], period=self.length)
        return np.stack([x, y], axis=-1)

    def heading_at(self, s) -> np.ndarray:
        # interpolate via the unit tangent to dodge angle wrap issues
        s = np.asarray(s, dtype=float) % self.length
        cx = np.interp(s, self.s, np.cos(self.heading), period=self.length)
        sx = np.interp(s, self.s, np.sin(self.heading), period=self.length)
        return np.arctan2(sx, cx)

    def curvature_at(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float) % self.length
        return np.interp(s, self.s, self.curvature, period=self.length)

    def speed_at(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float) % self.length
        return np.interp(s, self.s, self.speed.v, period=self.length)

    def localize(self, point, seed_index: int | None = None, window: float = 30.0):
        return project_closed(self.line, self.ds, point,
                              seed_index=seed_index, window=window)


@dataclass
class FeatureConfig:
    """Preview horizons (seconds at current speed) and localization limits."""

    preview_times: tuple[float, ...] = (0.3, 0.8, 1.5, 2.5)
    min_preview: float = 4.0  # m, floor on each preview distance
    localization_band: float = 25.0  # m, beyond this the vehicle is lost

    def __post_init__(self) -> None:
        if any(b <= a for a, b in zip(self.preview_times, self.preview_times[1:])):
            raise ValueError("preview horizons must be strictly increasing")


@dataclass
class FeatureVector:
    """Preview (x_LP) and perception (x_P) features.

    x_LP: ``offsets`` (m): predicted lateral offsets of the vehicle path from
    the target line at the preview distances, positive when the predicted
    position lies left of the line.  The prediction advances the current pose
    along a constant-curvature arc implied by the yaw rate, so a vehicle
    moving exactly on the line sees zeros.  ``speed_errors`` (m/s, target
    minus current) and ``curvatures`` (1/m) are sampled at the same preview
    stations.  x_P: ``speed`` (m/s), ``ax``/``ay`` (m/s^2), ``yaw_rate``
    (rad/s), ``balance`` (rad).  ``station``/``seed_index`` carry the
    target-line localization.
    """

    offsets: np.ndarray
    speed_errors: np.ndarray
    curvatures: np.ndarray
    preview_distances: np.ndarray
    speed: float
    ax: float
    ay: float
    yaw_rate: float
    balance: float
    station: float
    seed_index: int

    def as_vector(self) -> np.ndarray:
        """Concatenated [offsets, speed_errors, curvatures, x_P] in that order."""
        return np.concatenate([
            self.offsets, self.speed_errors, self.curvatures,
            [self.speed, self.ax, self.ay, self.yaw_rate, self.balance],
        ])


def compute_features(
    state: "VehicleState",
    target: TargetTrajectory,
    track: "Track",
    config: FeatureConfig | None = None,
    seed_index: int | None = None,
) -> FeatureVector:
    """Assemble the feature set for the current situation on track.

    Raises :class:`LocalizationLost` when the vehicle cannot be projected
    onto the target line within the configured band.
    """
    cfg = config or FeatureConfig()
    pos = (state.x, state.y)
    s_t, offset, idx = target.localize(pos, seed_index=seed_index)
    if abs(offset) > cfg.localization_band:
        raise LocalizationLost(f"vehicle {abs(offset):.1f} m from the target line")
    v = max(state.vx, 1.0)
    dists = np.maximum(cfg.min_preview, v * np.asarray(cfg.preview_times))
    stations = s_t + dists
    # predicted positions: constant-curvature arc from the current pose
    kappa_p = min(max(state.yaw_rate / v, -0.1), 0.1)
    cos_y, sin_y = math.cos(state.yaw), math.sin(state.yaw)
    if abs(kappa_p) > 1e-9:
        x_loc = np.sin(kappa_p * dists) / kappa_p
        y_loc = (1.0 - np.cos(kappa_p * dists)) / kappa_p
    else:
        x_loc = dists
        y_loc = np.zeros_like(dists)
    px = state.x + cos_y * x_loc - sin_y * y_loc
    py = state.y + sin_y * x_loc + cos_y * y_loc
    offsets = np.empty(len(dists))
    for h in range(len(dists)):
        seed_h = int(round((stations[h] % target.length) / target.ds)) % len(target.line)
        _, dy_h, _ = target.localize((px[h], py[h]), seed_index=seed_h,
                                     window=max(30.0, dists[h]))
        offsets[h] = dy_h
    speed_errors = target.speed_at(stations) - state.vx
    curvatures = target.curvature_at(stations)
    return FeatureVector(
        offsets=offsets,
        speed_errors=speed_errors,
        curvatures=curvatures,
        preview_distances=dists,
        speed=state.vx,
        ax=state.ax,
        ay=state.ay,
        yaw_rate=state.yaw_rate,
        balance=balance_metric(state),
        station=s_t,
        seed_index=idx,
    )


@dataclass
class PolicyConfig:
    """Gains of the deterministic preview controller."""

    wheelbase: float = 2.7
    merge_time: float = 1.2  # s, distance over which the cubic rejoins the line
    merge_min: float = 12.0  # m
    k_merge: float = 1.0
    ff_horizon: int = 1  # index into the preview set used for feedforward
    k_understeer: float = 1.3e-3  # rad per (m/s^2), matches the desk car
    k_yaw_damp: float = 0.05
    steer_max: float = 0.5
    a_acc_ref: float = 6.0  # m/s^2 at full throttle, low speed
    a_brake_ref: float = 14.0  # m/s^2 at full brake
    brake_deadband: float = 0.4  # m/s^2
    g_hold: float = 0.05  # throttle that roughly balances losses
    ay_ref: float = 14.7  # m/s^2, lateral usage for the friction clamp
    throttle_gain: float = 1.0
    oversteer_guard: float = 0.05  # rad of negative balance that cuts throttle


def select_action(features: FeatureVector, config: PolicyConfig | None = None) -> Action:
    """Map features to a control action.

    Steering: curvature feedforward at a mid preview plus the initial
    curvature of a degree-3 merge path implied by the extrapolated offset and
    offset slope, with an understeer correction and yaw damping.  Throttle and
    brake: proportional control on the acceleration demanded by the preview
    speed errors, clamped by the lateral friction usage and an
    oversteer guard.  Saturation absorbs extremes; fully deterministic.
    """
    cfg = config or PolicyConfig()
    x1, x2 = features.preview_distances[0], features.preview_distances[1]
    e1, e2 = features.offsets[0], features.offsets[1]
    slope = (e2 - e1) / max(x2 - x1, 1e-6)
    e0 = e1 - slope * x1
    v = max(features.speed, 1.0)
    merge_len = max(cfg.merge_min, cfg.merge_time * v)
    kappa_merge = -2.0 * (3.0 * e0 + 2.0 * slope * merge_len) / (merge_len ** 2)
    kappa_ff = features.curvatures[min(cfg.ff_horizon, len(features.curvatures) - 1)]
    kappa_cmd = kappa_ff + cfg.k_merge * kappa_merge
    steer = math.atan(cfg.wheelbase * kappa_cmd)
    steer += cfg.k_understeer * v * v * kappa_cmd
    steer -= cfg.k_yaw_damp * (features.yaw_rate - v * kappa_cmd) / v
    steer = min(max(steer, -cfg.steer_max), cfg.steer_max)

    dists = features.preview_distances
    v_targets = features.speed_errors + features.speed
    a_req = (v_targets ** 2 - features.speed ** 2) / (2.0 * dists)
    a_min = float(np.min(a_req))
    throttle = 0.0
    brake = 0.0
    if a_min < -cfg.brake_deadband:
        brake = min(1.0, -a_min / cfg.a_brake_ref)
    else:
        demand = max(a_req[0], 0.0) * cfg.throttle_gain / cfg.a_acc_ref
        throttle = min(1.0, cfg.g_hold + demand)
        lat_usage = min(1.0, abs(features.ay) / cfg.ay_ref)
        throttle = min(throttle, math.sqrt(max(0.0, 1.0 - lat_usage ** 2)) + 0.05)
        if features.balance < -cfg.oversteer_guard:
            throttle *= 0.5
    return Action(steer=steer, throttle=throttle, brake=brake)


@dataclass
class PreviewController:
    """Bundles feature and gain configuration into a policy callable."""

    config: PolicyConfig = field(default_factory=PolicyConfig)
    feature_config: FeatureConfig = field(default_factory=FeatureConfig)

    def __call__(self, features: FeatureVector) -> Action:
        return select_action(features, self.config)
