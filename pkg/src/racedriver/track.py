"""Closed race-track geometry and curvilinear coordinate transforms.

A track is a closed reference line resampled to equidistant arc-length
stations, plus per-station lateral extents to the left and right borders.
Driven or planned lines are expressed either in Cartesian coordinates or as a
lateral deviation ``dy(s)`` from the reference line (positive to the left of
the driving direction), together with the curvature ``kappa(s)`` of the traced
line itself.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import AmbiguousProjection, OutOfBand, SchemaError

# Stations are s_k = k * L / N_s for k = 0..N_s-1; wrap-around closes the lap.


def resample_closed(points: np.ndarray, n_stations: int) -> np.ndarray:
    """Resample a closed polyline to ``n_stations`` equidistant points.

    ``points`` is an (M, 2) array; a duplicated closing point is tolerated.
    The returned array has shape (n_stations, 2) and excludes the duplicate
    of the first point.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 3:
        raise ValueError("need an (M, 2) array with M >= 3")
    if np.hypot(*(pts[0] - pts[-1])) > 1e-9:
        pts = np.vstack([pts, pts[0]])
    seg = np.hypot(np.diff(pts[:, 0]), np.diff(pts[:, 1]))
    if np.any(seg <= 0):
        keep = np.concatenate([[True], seg > 0])
        pts = pts[keep]
        seg = np.hypot(np.diff(pts[:, 0]), np.diff(pts[:, 1]))
    s = np.concatenate([[0.0], np.cumsum(seg)])
    total = s[-1]
    grid = np.arange(n_stations) * (total / n_stations)
    x = np.interp(grid, s, pts[:, 0])
    y = np.interp(grid, s, pts[:, 1])
    return np.column_stack([x, y])


def polyline_length(points: np.ndarray, closed: bool = True) -> float:
    pts = np.asarray(points, dtype=float)
    seg = np.hypot(np.diff(pts[:, 0]), np.diff(pts[:, 1]))
    total = float(np.sum(seg))
    if closed and np.hypot(*(pts[0] - pts[-1])) > 1e-9:
        total += float(np.hypot(*(pts[0] - pts[-1])))
    return total


def _wrap_angle(a: np.ndarray) -> np.ndarray:
    return (a + np.pi) % (2.0 * np.pi) - np.pi


def headings_closed(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Heading angle at each station of a closed equidistant polyline."""
    tx = np.roll(x, -1) - np.roll(x, 1)
    ty = np.roll(y, -1) - np.roll(y, 1)
    return np.arctan2(ty, tx)


def curvature_closed(
    x: np.ndarray, y: np.ndarray, ds: float | None = None, smooth: int = 5
) -> np.ndarray:
    """Curvature of a closed polyline.

    Central finite differences of the heading over arc length, followed by a
    circular moving-average of width ``smooth`` (raw differences amplify
    sampling noise).  Pass ``ds`` for equidistant points; otherwise the
    polyline's own segment lengths are used.
    """
    phi = headings_closed(x, y)
    dphi = _wrap_angle(np.roll(phi, -1) - np.roll(phi, 1))
    if ds is not None:
        span = 2.0 * ds
    else:
        seg = np.hypot(np.roll(x, -1) - x, np.roll(y, -1) - y)
        span = seg + np.roll(seg, 1)  # arc distance from i-1 to i+1
    kappa = dphi / span
    if smooth and smooth > 1:
        kernel = np.ones(smooth) / smooth
        pad = smooth // 2
        ext = np.concatenate([kappa[-pad:], kappa, kappa[:pad]])
        kappa = np.convolve(ext, kernel, mode="same")[pad:-pad]
    return kappa


@dataclass
class Track:
    """Closed circuit: equidistant reference line plus border offsets.

    ``w_left``/``w_right`` are positive lateral extents (m) from the reference
    line to the respective border, so the borders always lie on opposite
    sides.  Derived arrays (stations, heading, curvature, normals) are
    computed once at construction; instances are treated as immutable.
    """

    name: str
    x: np.ndarray
    y: np.ndarray
    w_left: np.ndarray
    w_right: np.ndarray
    reference_kind: str = "centerline"

    s: np.ndarray = field(init=False, repr=False)
    ds: float = field(init=False, repr=False)
    total_length: float = field(init=False, repr=False)
    heading: np.ndarray = field(init=False, repr=False)
    curvature: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.x = np.asarray(self.x, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        self.w_left = np.asarray(self.w_left, dtype=float)
        self.w_right = np.asarray(self.w_right, dtype=float)
        n = len(self.x)
        if not (len(self.y) == len(self.w_left) == len(self.w_right) == n):
            raise ValueError("track arrays must share one length")
        if np.any(self.w_left <= 0) or np.any(self.w_right <= 0):
            raise ValueError("border widths must be positive")
        pts = np.column_stack([self.x, self.y])
        self.total_length = polyline_length(pts, closed=True)
        self.ds = self.total_length / n
        self.s = np.arange(n) * self.ds
        self.heading = headings_closed(self.x, self.y)
        self.curvature = curvature_closed(self.x, self.y, self.ds)

    @property
    def n_stations(self) -> int:
        return len(self.x)

    @property
    def normals(self) -> np.ndarray:
        """Unit left normals, shape (N, 2)."""
        return np.column_stack([-np.sin(self.heading), np.cos(self.heading)])

    @property
    def left_border(self) -> np.ndarray:
        return np.column_stack([self.x, self.y]) + self.normals * self.w_left[:, None]

    @property
    def right_border(self) -> np.ndarray:
        return np.column_stack([self.x, self.y]) - self.normals * self.w_right[:, None]

    @property
    def reference_line(self) -> np.ndarray:
        return np.column_stack([self.x, self.y])

    def max_width(self) -> float:
        return float(np.max(self.w_left + self.w_right))

    def station_index(self, s: float) -> int:
        return int(round(s / self.ds)) % self.n_stations

    def wrap_s(self, s: float) -> float:
        return float(s % self.total_length)

    @classmethod
    def from_points(
        cls,
        points: np.ndarray,
        w_left,
        w_right,
        n_stations: int,
        name: str = "track",
        reference_kind: str = "centerline",
    ) -> "Track":
        """Build a track from a closed polyline and border widths.

        Widths may be scalars or per-input-point arrays; they are resampled to
        the equidistant station grid alongside the reference line.
        """
        pts = np.asarray(points, dtype=float)
        ref = resample_closed(pts, n_stations)
        if np.isscalar(w_left):
            wl = np.full(n_stations, float(w_left))
        else:
            wl = _resample_scalar_closed(pts, np.asarray(w_left, float), n_stations)
        if np.isscalar(w_right):
            wr = np.full(n_stations, float(w_right))
        else:
            wr = _resample_scalar_closed(pts, np.asarray(w_right, float), n_stations)
        return cls(name=name, x=ref[:, 0], y=ref[:, 1], w_left=wl, w_right=wr,
                   reference_kind=reference_kind)


def _resample_scalar_closed(points: np.ndarray, values: np.ndarray, n: int) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    vals = np.asarray(values, dtype=float)
    if np.hypot(*(pts[0] - pts[-1])) > 1e-9:
        pts = np.vstack([pts, pts[0]])
        vals = np.concatenate([vals, vals[:1]])
    seg = np.hypot(np.diff(pts[:, 0]), np.diff(pts[:, 1]))
    s = np.concatenate([[0.0], np.cumsum(seg)])
    grid = np.arange(n) * (s[-1] / n)
    return np.interp(grid, s, vals)


# -- track file format -------------------------------------------------------
#
# CSV with header  x_m,y_m,w_left_m,w_right_m  and one row per reference-line
# point, ordered along the driving direction.  The loop must close (first and
# last point within 1 m; an exact duplicate closing row is optional).  Lines
# starting with '#' are comments; '# name: <id>' and
# '# reference: <centerline|mean-line>' set metadata.

TRACK_COLUMNS = ("x_m", "y_m", "w_left_m", "w_right_m")


def load_track(path, n_stations: int | None = None, ds: float = 2.0) -> Track:
    """Load a track file, validating closure and monotone arc length."""
    name = "track"
    reference_kind = "centerline"
    rows = []
    with open(path, newline="") as f:
        header = None
        for raw in f:
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                meta = line[1:].strip()
                if meta.lower().startswith("name:"):
                    name = meta[5:].strip()
                elif meta.lower().startswith("reference:"):
                    reference_kind = meta[10:].strip()
                continue
            if header is None:
                header = [c.strip() for c in line.split(",")]
                missing = set(TRACK_COLUMNS) - set(header)
                if missing:
                    raise SchemaError(
                        f"{path}: missing columns {sorted(missing)}"
                    )
                continue
            rows.append(line)
    if header is None or len(rows) < 3:
        raise SchemaError(f"{path}: need a header and at least 3 points")
    idx = {c: header.index(c) for c in TRACK_COLUMNS}
    data = np.zeros((len(rows), 4))
    for i, line in enumerate(rows):
        parts = line.split(",")
        if len(parts) < len(header):
            raise SchemaError(f"{path}: line {i + 2}: expected {len(header)} fields")
        try:
            data[i] = [float(parts[idx[c]]) for c in TRACK_COLUMNS]
        except ValueError as exc:
            raise SchemaError(f"{path}: line {i + 2}: {exc}") from exc
    pts = data[:, :2]
    closing_gap = float(np.hypot(*(pts[0] - pts[-1])))
    seg = np.hypot(np.diff(pts[:, 0]), np.diff(pts[:, 1]))
    if np.any(seg <= 0):
        bad = int(np.argmin(seg)) + 2
        raise SchemaError(f"{path}: arc length not strictly increasing near line {bad}")
    if closing_gap > max(1.0, 2.0 * float(np.median(seg))):
        raise SchemaError(f"{path}: reference line does not close (gap {closing_gap:.2f} m)")
    if np.any(data[:, 2] <= 0) or np.any(data[:, 3] <= 0):
        raise SchemaError(f"{path}: border widths must be positive")
    if n_stations is None:
        n_stations = max(64, int(round(polyline_length(pts) / ds)))
    return Track.from_points(pts, data[:, 2], data[:, 3], n_stations, name=name,
                             reference_kind=reference_kind)


def save_track(track: Track, path) -> None:
    with open(path, "w", newline="") as f:
        f.write(f"# name: {track.name}\n")
        f.write(f"# reference: {track.reference_kind}\n")
        writer = csv.writer(f)
        writer.writerow(TRACK_COLUMNS)
        for i in range(track.n_stations):
            writer.writerow([
                f"{track.x[i]:.6f}", f"{track.y[i]:.6f}",
                f"{track.w_left[i]:.6f}", f"{track.w_right[i]:.6f}",
            ])


# -- projection and curvilinear transforms -----------------------------------


@dataclass
class CurvilinearTrace:
    """A line expressed relative to a track's reference line.

    ``dy`` is the signed lateral offset (m, positive left), ``kappa`` the
    curvature of the traced line itself and ``heading`` its heading angle,
    all sampled at the track's equidistant stations ``s``.
    """

    s: np.ndarray
    dy: np.ndarray
    kappa: np.ndarray
    heading: np.ndarray


def _project_to_segment(p, a, b):
    """Return (t, dy, dist) for point p against segment a->b."""
    ab = b - a
    L = np.hypot(ab[0], ab[1])
    if L <= 0:
        return 0.0, 0.0, float(np.hypot(*(p - a)))
    t = float(np.dot(p - a, ab) / (L * L))
    t = min(max(t, 0.0), 1.0)
    foot = a + t * ab
    d = p - foot
    dy = float((ab[0] * d[1] - ab[1] * d[0]) / L)
    return t, dy, float(np.hypot(d[0], d[1]))


def project_closed(
    ref: np.ndarray,
    ds: float,
    point,
    seed_index: int | None = None,
    window: float = 30.0,
    ambiguity_ratio: float = 1.05,
) -> tuple[float, float, int]:
    """Project a point onto a closed equidistant polyline.

    Returns ``(s, dy, index)`` with ``dy`` signed positive to the left of the
    travel direction.  Without a seed the whole line is searched and an
    :class:`AmbiguousProjection` is raised when two well-separated stations
    are nearly equally close (folded geometry).  With a seed only stations
    within ``window`` meters of it are considered, which keeps the projection
    continuous along a lap.
    """
    p = np.asarray(point, dtype=float)
    n = len(ref)
    d2 = (ref[:, 0] - p[0]) ** 2 + (ref[:, 1] - p[1]) ** 2
    if seed_index is None:
        best = int(np.argmin(d2))
        best_d = math.sqrt(d2[best])
        sep = int(max(5, 0.05 * n))
        idx_off = (np.arange(n) - best) % n
        far = (idx_off > sep) & (idx_off < n - sep)
        if np.any(far):
            rival = math.sqrt(np.min(d2[far]))
            if rival <= max(best_d, 1e-9) * ambiguity_ratio and best_d > 1e-12:
                raise AmbiguousProjection(
                    f"projection of {p} is ambiguous: {best_d:.3f} m vs {rival:.3f} m"
                )
        cand = best
    else:
        half = max(2, int(math.ceil(window / ds)))
        offs = np.arange(-half, half + 1)
        idxs = (seed_index + offs) % n
        cand = int(idxs[np.argmin(d2[idxs])])
    # refine on the two segments adjacent to the candidate station
    best_tuple = None
    for i0 in ((cand - 1) % n, cand):
        a = ref[i0]
        b = ref[(i0 + 1) % n]
        t, dy, dist = _project_to_segment(p, a, b)
        if best_tuple is None or dist < best_tuple[0]:
            best_tuple = (dist, i0, t, dy)
    _, i0, t, dy = best_tuple
    s = ((i0 + t) * ds) % (n * ds)
    return s, dy, i0


def project_point(
    track: Track,
    point,
    seed_index: int | None = None,
    window: float = 30.0,
    ambiguity_ratio: float = 1.05,
) -> tuple[float, float, int]:
    """Project a point onto the track reference line; see :func:`project_closed`."""
    return project_closed(track.reference_line, track.ds, point,
                          seed_index=seed_index, window=window,
                          ambiguity_ratio=ambiguity_ratio)


def to_curvilinear(
    line: np.ndarray,
    track: Track,
    band: float | None = None,
) -> CurvilinearTrace:
    """Map a Cartesian line to ``dy(s)``/``kappa(s)`` against the track.

    The line is projected station-continuously onto the reference line, the
    signed offsets are resampled to the equidistant station grid and the
    curvature is recomputed from the reconstructed trace by finite differences
    of its heading.  Raises :class:`OutOfBand` when the line leaves the
    lateral band (default three track widths).
    """
    pts = np.asarray(line, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 4:
        raise ValueError("need an (M, 2) line with M >= 4")
    if band is None:
        band = 3.0 * track.max_width()
    m = len(pts)
    s_list = np.zeros(m)
    dy_list = np.zeros(m)
    seed = None
    for i in range(m):
        if seed is None:
            s_i, dy_i, seed = project_point(track, pts[i])
        else:
            step = float(np.hypot(*(pts[i] - pts[i - 1])))
            win = max(20.0, 4.0 * step)
            s_i, dy_i, seed = project_point(track, pts[i], seed_index=seed, window=win)
        if abs(dy_i) > band:
            raise OutOfBand(f"line leaves the lateral band at s={s_i:.1f} (dy={dy_i:.2f})")
        s_list[i] = s_i
        dy_list[i] = dy_i
    # unwrap the station sequence so it increases monotonically over the lap
    L = track.total_length
    s_unwrapped = s_list.copy()
    for i in range(1, m):
        while s_unwrapped[i] < s_unwrapped[i - 1] - 0.5 * L:
            s_unwrapped[i] += L
    # drop small backward jitter so dy(s) stays single-valued
    keep = np.ones(m, dtype=bool)
    last = s_unwrapped[0]
    for i in range(1, m):
        if s_unwrapped[i] <= last:
            keep[i] = False
        else:
            last = s_unwrapped[i]
    s_u = s_unwrapped[keep]
    dy_u = dy_list[keep]
    dy_grid = np.interp(track.s, s_u % L, dy_u, period=L)
    trace_xy = from_curvilinear(dy_grid, track)
    # trace points are not equidistant in their own arc length
    kappa = curvature_closed(trace_xy[:, 0], trace_xy[:, 1])
    heading = headings_closed(trace_xy[:, 0], trace_xy[:, 1])
    return CurvilinearTrace(s=track.s.copy(), dy=dy_grid, kappa=kappa, heading=heading)


def from_curvilinear(dy, track: Track) -> np.ndarray:
    """Reconstruct Cartesian points from lateral offsets at the stations.

    ``x*(s) = x'(s) - sin(phi(s)) dy(s)``, ``y*(s) = y'(s) + cos(phi(s)) dy(s)``
    with ``phi`` the reference-line heading.
    """
    if isinstance(dy, CurvilinearTrace):
        dy = dy.dy
    dy = np.asarray(dy, dtype=float)
    if len(dy) != track.n_stations:
        raise ValueError("dy must be sampled at the track stations")
    x = track.x - np.sin(track.heading) * dy
    y = track.y + np.cos(track.heading) * dy
    return np.column_stack([x, y])


# -- corner / straight analysis ----------------------------------------------


@dataclass
class Corner:
    """Closed interval [entry_s, exit_s] along the lap (may wrap the seam).

    A computed span of zero encodes a full-lap degenerate corner.
    """

    entry_s: float
    apex_s: float
    exit_s: float
    signed_peak_curvature: float

    def contains(self, s: float, total_length: float) -> bool:
        span = (self.exit_s - self.entry_s) % total_length
        if span == 0.0:
            return True
        return (s - self.entry_s) % total_length <= span


@dataclass
class Straight:
    """Open complement interval (start_s, end_s) between two corners."""

    start_s: float
    end_s: float

    def length(self, total_length: float) -> float:
        return (self.end_s - self.start_s) % total_length

    def contains(self, s: float, total_length: float) -> bool:
        span = (self.end_s - self.start_s) % total_length
        if span == 0.0:
            return True
        rel = (s - self.start_s) % total_length
        return 0.0 < rel < span


@dataclass
class BrakeZone:
    brake_s: float
    corner_index: int


@dataclass
class TrackAnalysis:
    corners: list[Corner]
    straights: list[Straight]
    brake_zones: list[BrakeZone]
    total_length: float
    warnings: list[str] = field(default_factory=list)

    def corner_at(self, s: float) -> int | None:
        for i, c in enumerate(self.corners):
            if c.contains(s, self.total_length):
                return i
        return None

    def straight_at(self, s: float) -> int | None:
        for i, st in enumerate(self.straights):
            if st.contains(s, self.total_length):
                return i
        return None


@dataclass
class AnalysisConfig:
    kappa_threshold: float = 0.01  # 1/m, separates straights from corners
    hysteresis: float = 0.2
    min_corner_length: float = 8.0  # m
    min_straight_length: float = 15.0  # m
    station_spacing: float = 2.0  # m, resampling for the analysed line


def analyse_track(
    mean_line: np.ndarray,
    track: Track,
    config: AnalysisConfig | None = None,
    speed: np.ndarray | None = None,
) -> TrackAnalysis:
    """Partition a closed line into corners and straights.

    Corners are maximal intervals where ``|kappa|`` exceeds the configured
    threshold (with a hysteresis band); the apex is the midpoint of the
    curvature-peak plateau.  Stations are arc length along ``mean_line``.
    When a ``speed`` profile (same stations) is supplied, a brake zone is
    placed where that profile first starts decreasing ahead of each corner.
    """
    cfg = config or AnalysisConfig()
    pts = np.asarray(mean_line, dtype=float)
    n = max(64, int(round(polyline_length(pts) / cfg.station_spacing)))
    line = resample_closed(pts, n)
    total = polyline_length(line)
    ds = total / n
    kappa = curvature_closed(line[:, 0], line[:, 1], ds)
    if speed is not None and len(speed) != n:
        # resample the provided profile onto the analysis grid
        s_in = np.linspace(0.0, total, len(speed), endpoint=False)
        speed = np.interp(np.arange(n) * ds, s_in, speed, period=total)

    thr_hi = cfg.kappa_threshold
    thr_lo = cfg.kappa_threshold * (1.0 - cfg.hysteresis)
    abs_k = np.abs(kappa)
    warnings: list[str] = []

    if np.all(abs_k >= thr_lo):
        apex_idx = _plateau_argmax(abs_k, np.arange(n))
        corner = Corner(0.0, apex_idx * ds, 0.0, float(kappa[apex_idx]))  # full lap
        warnings.append("no straights found: constant-curvature track (degenerate corner)")
        return TrackAnalysis([corner], [], [], total, warnings)
    if np.all(abs_k < thr_hi):
        warnings.append("no corners found: track is effectively straight")
        return TrackAnalysis([], [Straight(0.0, 0.0)], [], total, warnings)

    # anchor the scan at the flattest station so no corner spans the seam
    anchor = int(np.argmin(abs_k))
    shifted = np.roll(abs_k, -anchor)
    in_corner = False
    intervals: list[list[int]] = []
    for i in range(n):
        if not in_corner and shifted[i] > thr_hi:
            in_corner = True
            intervals.append([i, i])
        elif in_corner:
            if shifted[i] >= thr_lo:
                intervals[-1][1] = i
            else:
                in_corner = False
    # enforce minimum lengths: short corners dissolve, short gaps merge corners
    intervals = [iv for iv in intervals if (iv[1] - iv[0] + 1) * ds >= cfg.min_corner_length]
    merged: list[list[int]] = []
    for iv in intervals:
        if merged and (iv[0] - merged[-1][1]) * ds < cfg.min_straight_length:
            merged[-1][1] = iv[1]
        else:
            merged.append(iv)
    if len(merged) >= 2 and (n - merged[-1][1] + merged[0][0]) * ds < cfg.min_straight_length:
        merged[0][0] = merged.pop()[0] - n  # joins across the anchor seam

    corners: list[Corner] = []
    for a, b in merged:
        idxs = np.arange(a, b + 1)
        orig = (idxs + anchor) % n
        apex_local = _plateau_argmax(abs_k, orig)
        corners.append(Corner(
            entry_s=float(orig[0] % n) * ds,
            apex_s=float(apex_local * ds),
            exit_s=float(orig[-1] % n) * ds,
            signed_peak_curvature=float(kappa[apex_local]),
        ))
    corners.sort(key=lambda c: c.entry_s)
    if not corners:
        warnings.append("no corners found above the curvature threshold")
        return TrackAnalysis([], [Straight(0.0, 0.0)], [], total, warnings)

    straights: list[Straight] = []
    for i, c in enumerate(corners):
        nxt = corners[(i + 1) % len(corners)]
        if (nxt.entry_s - c.exit_s) % total > 0:
            straights.append(Straight(c.exit_s, nxt.entry_s))
    straights.sort(key=lambda st: st.start_s)

    brake_zones: list[BrakeZone] = []
    if speed is not None:
        for ci, c in enumerate(corners):
            apex_idx = int(round(c.apex_s / ds)) % n
            vmin_idx = apex_idx
            # min-speed station near the apex (search within the corner)
            span = int(((c.exit_s - c.entry_s) % total) / ds) + 1
            entry_idx = int(round(c.entry_s / ds)) % n
            corner_idxs = (entry_idx + np.arange(span)) % n
            vmin_idx = int(corner_idxs[np.argmin(speed[corner_idxs])])
            i = vmin_idx
            steps = 0
            while steps < n:
                prev = (i - 1) % n
                if speed[prev] > speed[i] + 1e-9:
                    i = prev
                    steps += 1
                else:
                    break
            if i != vmin_idx:
                brake_zones.append(BrakeZone(brake_s=float(i * ds), corner_index=ci))
    return TrackAnalysis(corners, straights, brake_zones, total, warnings)


def _plateau_argmax(values: np.ndarray, idxs: np.ndarray) -> int:
    """Index of the midpoint of the near-maximal plateau within ``idxs``."""
    v = values[idxs]
    peak = float(np.max(v))
    on = np.flatnonzero(v >= peak * 0.995)
    mid = on[len(on) // 2]
    return int(idxs[mid])
