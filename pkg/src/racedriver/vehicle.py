"""Closed-loop plant: dynamic bicycle model with friction-limited tires.

The model is deliberately desk-scale: linear-saturating lateral tire forces
with a per-axle friction ellipse, longitudinal force from throttle/brake with
a traction-control clamp on the driven axle, quadratic drag and rolling
resistance, and longitudinal load transfer.  Integration is fixed-step RK4
and fully deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Callable

import numpy as np

from .errors import LocalizationLost, NumericalBlowup

if TYPE_CHECKING:  # pragma: no cover
    from .policy import TargetTrajectory
    from .track import Track

G = 9.81


@dataclass(frozen=True)
class CarParams:
    """Default "desk car"; the envelope defaults are derived from these."""

    mass: float = 800.0
    inertia_z: float = 1000.0
    lf: float = 1.30
    lr: float = 1.40
    h_cg: float = 0.35
    mu: float = 1.50
    c_front: float = 90_000.0  # cornering stiffness per axle, N/rad
    c_rear: float = 110_000.0
    power: float = 260_000.0
    f_drive_max: float = 7_000.0
    f_brake_max: float = 12_000.0
    brake_front_share: float = 0.60
    drag_coeff: float = 0.60  # N per (m/s)^2
    roll_coeff: float = 0.012
    delta_max: float = 0.50
    width: float = 1.80
    tc_margin: float = 0.98  # traction control keeps the rear inside the ellipse

    @property
    def wheelbase(self) -> float:
        return self.lf + self.lr

    @property
    def half_width(self) -> float:
        return self.width / 2.0


DEFAULT_CAR = CarParams()


@dataclass(frozen=True)
class Action:
    """Control input: steer angle (rad), throttle and brake in [0, 1]."""

    steer: float
    throttle: float
    brake: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "throttle", min(max(self.throttle, 0.0), 1.0))
        object.__setattr__(self, "brake", min(max(self.brake, 0.0), 1.0))

    @property
    def co_active(self) -> bool:
        return self.throttle > 1e-6 and self.brake > 1e-6


@dataclass(frozen=True)
class VehicleState:
    x: float
    y: float
    yaw: float
    yaw_rate: float
    vx: float
    vy: float
    slip_front: float = 0.0
    slip_rear: float = 0.0
    ax: float = 0.0  # body-frame accelerations of the last step
    ay: float = 0.0

    @property
    def speed(self) -> float:
        return math.hypot(self.vx, self.vy)


def kinetic_energy(state: VehicleState, car: CarParams = DEFAULT_CAR) -> float:
    return (0.5 * car.mass * (state.vx ** 2 + state.vy ** 2)
            + 0.5 * car.inertia_z * state.yaw_rate ** 2)


V_SLIP_MIN = 0.5  # m/s, slip angles are ill-defined near standstill


def _slip_angles(vx: float, vy: float, r: float, delta: float, car: CarParams):
    vx_eff = max(vx, V_SLIP_MIN)
    alpha_f = math.atan2(vy + car.lf * r, vx_eff) - delta
    alpha_r = math.atan2(vy - car.lr * r, vx_eff)
    return alpha_f, alpha_r


def _forces(vx, vy, r, action: Action, car: CarParams):
    """Per-axle tire forces honoring the friction ellipse, plus losses."""
    delta = min(max(action.steer, -car.delta_max), car.delta_max)
    alpha_f, alpha_r = _slip_angles(vx, vy, r, delta, car)
    fy_f_raw = -car.c_front * alpha_f
    fy_r_raw = -car.c_rear * alpha_r

    moving = vx > 0.1
    f_drive = action.throttle * min(car.f_drive_max, car.power / max(vx, 1.0))
    f_brake = action.brake * car.f_brake_max if moving else 0.0
    fx_f_dem = -f_brake * car.brake_front_share
    fx_r_dem = f_drive - f_brake * (1.0 - car.brake_front_share)

    # static loads plus longitudinal transfer from a first force estimate
    wb = car.wheelbase
    fz_f = car.mass * G * car.lr / wb
    fz_r = car.mass * G * car.lf / wb
    ax_est = (fx_f_dem + fx_r_dem) / car.mass
    transfer = car.mass * ax_est * car.h_cg / wb
    fz_f = max(fz_f - transfer, 0.1 * car.mass * G * car.lr / wb)
    fz_r = max(fz_r + transfer, 0.1 * car.mass * G * car.lf / wb)

    cap_f = car.mu * fz_f
    cap_r = car.mu * fz_r

    # traction control: keep the driven axle inside the ellipse given the
    # current lateral demand
    if fx_r_dem > 0.0:
        lat = min(abs(fy_r_raw), car.tc_margin * cap_r)
        avail = math.sqrt(max(0.0, (car.tc_margin * cap_r) ** 2 - lat * lat))
        fx_r = min(fx_r_dem, avail)
    else:
        fx_r = max(fx_r_dem, -cap_r)
    fx_f = min(max(fx_f_dem, -cap_f), cap_f)

    fy_f_cap = math.sqrt(max(0.0, cap_f * cap_f - fx_f * fx_f))
    fy_r_cap = math.sqrt(max(0.0, cap_r * cap_r - fx_r * fx_r))
    fy_f = min(max(fy_f_raw, -fy_f_cap), fy_f_cap)
    fy_r = min(max(fy_r_raw, -fy_r_cap), fy_r_cap)

    f_drag = car.drag_coeff * vx * abs(vx)
    f_roll = car.roll_coeff * car.mass * G * math.tanh(vx / 0.5)
    return delta, fx_f, fx_r, fy_f, fy_r, f_drag, f_roll, alpha_f, alpha_r


def _derivatives(s, action: Action, car: CarParams):
    x, y, yaw, r, vx, vy = s
    delta, fx_f, fx_r, fy_f, fy_r, f_drag, f_roll, _, _ = _forces(vx, vy, r, action, car)
    sum_fx = fx_r + fx_f * math.cos(delta) - fy_f * math.sin(delta) - f_drag - f_roll
    sum_fy = fy_f * math.cos(delta) + fx_f * math.sin(delta) + fy_r
    ax = sum_fx / car.mass
    ay = sum_fy / car.mass
    return (
        vx * math.cos(yaw) - vy * math.sin(yaw),
        vx * math.sin(yaw) + vy * math.cos(yaw),
        r,
        (car.lf * (fy_f * math.cos(delta) + fx_f * math.sin(delta)) - car.lr * fy_r)
        / car.inertia_z,
        ax + r * vy,
        ay - r * vx,
    )


_SANITY = {"vx": 150.0, "vy": 60.0, "r": 10.0}


def step(state: VehicleState, action: Action, dt: float, car: CarParams = DEFAULT_CAR) -> VehicleState:
    """Advance the plant one fixed RK4 step.  ``dt`` must be in (0, 0.02]."""
    if not 0.0 < dt <= 0.02:
        raise ValueError("dt must be in (0, 0.02] s")
    s0 = (state.x, state.y, state.yaw, state.yaw_rate, state.vx, state.vy)
    k1 = _derivatives(s0, action, car)
    s1 = tuple(a + 0.5 * dt * b for a, b in zip(s0, k1))
    k2 = _derivatives(s1, action, car)
    s2 = tuple(a + 0.5 * dt * b for a, b in zip(s0, k2))
    k3 = _derivatives(s2, action, car)
    s3 = tuple(a + dt * b for a, b in zip(s0, k3))
    k4 = _derivatives(s3, action, car)
    new = tuple(
        a + dt / 6.0 * (b1 + 2 * b2 + 2 * b3 + b4)
        for a, b1, b2, b3, b4 in zip(s0, k1, k2, k3, k4)
    )
    x, y, yaw, r, vx, vy = new
    if not all(map(math.isfinite, new)) or abs(vx) > _SANITY["vx"] or abs(vy) > _SANITY["vy"] or abs(r) > _SANITY["r"]:
        raise NumericalBlowup(f"state left sanity bounds: vx={vx:.1f} vy={vy:.1f} r={r:.2f}")
    vx = max(vx, 0.0)
    delta = min(max(action.steer, -car.delta_max), car.delta_max)
    alpha_f, alpha_r = _slip_angles(vx, vy, r, delta, car)
    ax = (vx - state.vx) / dt
    ay = (vy - state.vy) / dt + r * vx
    return VehicleState(x=x, y=y, yaw=yaw, yaw_rate=r, vx=vx, vy=vy,
                        slip_front=alpha_f, slip_rear=alpha_r, ax=ax, ay=ay)


BALANCE_V_MIN = 3.0  # m/s


def balance_metric(state: VehicleState) -> float:
    """Signed handling balance: positive when the front axle slips more
    (understeer), negative when the rear does (oversteer).  Zero below the
    low-speed gate."""
    if state.vx < BALANCE_V_MIN:
        return 0.0
    return abs(state.slip_front) - abs(state.slip_rear)


# -- lap rollout ---------------------------------------------------------------


@dataclass
class LapLog:
    """Time series of one rollout plus its outcome."""

    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    vx: np.ndarray
    yaw: np.ndarray
    s: np.ndarray  # station along the target line, wrapped
    track_s: np.ndarray  # station along the track reference line
    dy_track: np.ndarray  # signed offset from the track reference line
    steer: np.ndarray
    throttle: np.ndarray
    brake: np.ndarray
    balance: np.ndarray
    completed: bool
    status: str  # completed | offtrack | timeout | blowup
    lap_time: float | None
    exit_s: float | None  # target-line station where the rollout ended
    distance: float  # unwrapped distance covered along the target line

    def summary(self) -> dict:
        return {
            "completed": self.completed,
            "status": self.status,
            "lap_time": self.lap_time,
            "exit_s": self.exit_s,
            "distance": self.distance,
            "max_abs_balance": float(np.max(np.abs(self.balance))) if len(self.balance) else 0.0,
        }


OFFTRACK_TOLERANCE = 0.5  # m beyond the border before declaring failure


def run_lap(
    policy: Callable,
    target: "TargetTrajectory",
    track: "Track",
    car: CarParams = DEFAULT_CAR,
    dt: float = 0.005,
    max_time: float | None = None,
    log_every: int = 4,
) -> LapLog:
    """Close the loop: feature computation, policy action, plant step.

    Ends at lap completion (target-line station wraps once), when the vehicle
    center leaves the track by more than the off-track tolerance, on numeric
    blowup, or at the time budget (an incomplete status, not an exception).
    """
    from .policy import compute_features  # runtime import avoids a cycle
    from .track import project_point

    if max_time is None:
        max_time = 3.0 * target.speed.lap_time + 20.0
    n_max = int(max_time / dt)

    state = VehicleState(
        x=float(target.line[0, 0]),
        y=float(target.line[0, 1]),
        yaw=float(target.heading[0]),
        yaw_rate=float(target.speed.v[0] * target.curvature[0]),
        vx=float(target.speed.v[0]),
        vy=0.0,
    )
    rows: list[tuple] = []
    t = 0.0
    line_seed = 0
    track_seed: int | None = None
    s_unwrapped = 0.0
    prev_s = 0.0
    completed = False
    status = "timeout"
    lap_time: float | None = None
    exit_s: float | None = None

    for i in range(max(n_max, 0)):
        try:
            feats = compute_features(state, target, track, config=getattr(policy, "feature_config", None),
                                     seed_index=line_seed)
        except LocalizationLost:
            status = "offtrack"
            exit_s = target.wrap(prev_s)
            break
        line_seed = feats.seed_index
        s_now = feats.station
        ds_step = (s_now - prev_s) % target.length
        if ds_step > target.length / 2:
            ds_step -= target.length  # small backward jitter
        s_unwrapped += ds_step
        prev_s = s_now

        ts, dy_t, track_seed = project_point(
            track, (state.x, state.y),
            seed_index=track_seed, window=40.0,
        ) if track_seed is not None else project_point(track, (state.x, state.y))
        w_idx = track.station_index(ts)
        over_left = dy_t - track.w_left[w_idx]
        over_right = -dy_t - track.w_right[w_idx]
        off = max(over_left, over_right)

        action = policy(feats)
        if i % log_every == 0:
            rows.append((t, state.x, state.y, state.vx, state.yaw,
                         target.wrap(s_unwrapped), ts, dy_t,
                         action.steer, action.throttle, action.brake,
                         balance_metric(state)))
        if off > OFFTRACK_TOLERANCE:
            status = "offtrack"
            exit_s = target.wrap(s_unwrapped)
            break
        if s_unwrapped >= target.length:
            completed = True
            status = "completed"
            overshoot = s_unwrapped - target.length
            v = max(state.vx, 1e-3)
            lap_time = t - overshoot / v
            break
        try:
            state = step(state, action, dt, car)
        except NumericalBlowup:
            status = "blowup"
            exit_s = target.wrap(s_unwrapped)
            break
        t += dt

    if not completed and exit_s is None:
        exit_s = target.wrap(s_unwrapped)
    arr = np.array(rows) if rows else np.zeros((0, 12))
    return LapLog(
        t=arr[:, 0], x=arr[:, 1], y=arr[:, 2], vx=arr[:, 3], yaw=arr[:, 4],
        s=arr[:, 5], track_s=arr[:, 6], dy_track=arr[:, 7],
        steer=arr[:, 8], throttle=arr[:, 9], brake=arr[:, 10],
        balance=arr[:, 11],
        completed=completed, status=status, lap_time=lap_time,
        exit_s=exit_s, distance=float(s_unwrapped),
    )


class RecordedPolicy:
    """Replays a stored action sequence by step index (test double)."""

    def __init__(self, actions):
        self.actions = list(actions)
        self._i = 0
        self.feature_config = None

    def __call__(self, feats) -> Action:
        a = self.actions[min(self._i, len(self.actions) - 1)]
        self._i += 1
        return a
