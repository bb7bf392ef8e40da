"""Synthetic closed tracks and demonstration laps for experiments and tests.

Tracks are built from exact geometric primitives (straights, circular arcs,
rounded polygons), so corner locations, apex stations and curvatures are known
by construction.  Demonstration laps are noisy-optimal lines around a track:
a smooth base line plus smooth random lateral deviations whose magnitude
depends on the local corner tightness.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .track import Track, polyline_length


@dataclass
class ArcInfo:
    """Construction-time corner metadata (stations in reference arc length)."""

    start_s: float
    apex_s: float
    end_s: float
    signed_curvature: float


@dataclass
class TrackInfo:
    corners: list[ArcInfo] = field(default_factory=list)


def segments_track(
    segments,
    half_width: float = 6.0,
    name: str = "segments",
    point_spacing: float = 1.0,
    n_stations: int | None = None,
    closure_tol: float = 0.5,
) -> tuple[Track, TrackInfo]:
    """Build a closed track from ('s', length) and ('a', radius, angle_deg) parts.

    Arc angles are signed (positive turns left).  The segment list must return
    to the start pose within ``closure_tol``; the residual gap is snapped shut.
    """
    x, y, heading = 0.0, 0.0, 0.0
    pts = [(x, y)]
    info = TrackInfo()
    s_acc = 0.0
    for seg in segments:
        if seg[0] == "s":
            length = float(seg[1])
            n = max(1, int(math.ceil(length / point_spacing)))
            step = length / n
            for _ in range(n):
                x += step * math.cos(heading)
                y += step * math.sin(heading)
                pts.append((x, y))
            s_acc += length
        elif seg[0] == "a":
            radius, angle_deg = float(seg[1]), float(seg[2])
            angle = math.radians(angle_deg)
            arc_len = abs(radius * angle)
            n = max(2, int(math.ceil(arc_len / point_spacing)))
            dth = angle / n
            step = arc_len / n
            start_s = s_acc
            for _ in range(n):
                heading += dth
                x += step * math.cos(heading - dth / 2.0)
                y += step * math.sin(heading - dth / 2.0)
                pts.append((x, y))
            s_acc += arc_len
            info.corners.append(ArcInfo(
                start_s=start_s,
                apex_s=start_s + arc_len / 2.0,
                end_s=start_s + arc_len,
                signed_curvature=math.copysign(1.0 / radius, angle),
            ))
        else:
            raise ValueError(f"unknown segment kind {seg[0]!r}")
    gap = math.hypot(pts[-1][0] - pts[0][0], pts[-1][1] - pts[0][1])
    if gap > closure_tol:
        raise ValueError(f"segment list does not close (gap {gap:.3f} m)")
    arr = np.asarray(pts[:-1] if gap < 1e-9 else pts, dtype=float)
    if n_stations is None:
        n_stations = int(round(polyline_length(arr) / 2.0))
    trk = Track.from_points(arr, half_width, half_width, n_stations, name=name)
    return trk, info


def oval_track(
    straight: float = 250.0,
    radius: float = 60.0,
    half_width: float = 6.0,
    name: str = "oval",
    n_stations: int | None = None,
) -> tuple[Track, TrackInfo]:
    """Stadium oval: two straights joined by two 180-degree arcs."""
    segs = [
        ("s", straight),
        ("a", radius, 180.0),
        ("s", straight),
        ("a", radius, 180.0),
    ]
    return segments_track(segs, half_width, name=name, n_stations=n_stations)


def rounded_polygon_track(
    vertices,
    radii,
    half_width: float = 6.0,
    name: str = "polygon",
    point_spacing: float = 1.0,
    n_stations: int | None = None,
) -> tuple[Track, TrackInfo]:
    """Closed polygon with circular fillets of per-vertex radius.

    Closure is exact for any radii as long as adjacent fillets do not overlap
    along an edge.  Apexes sit at the arc midpoints on each vertex bisector.
    """
    verts = np.asarray(vertices, dtype=float)
    nv = len(verts)
    radii = np.broadcast_to(np.asarray(radii, dtype=float), (nv,))
    tang_pts = []  # (T_in, T_out, center, turn_angle, radius)
    for i in range(nv):
        u = verts[(i - 1) % nv]
        v = verts[i]
        w = verts[(i + 1) % nv]
        e1 = v - u
        e2 = w - v
        l1 = np.hypot(*e1)
        l2 = np.hypot(*e2)
        e1 = e1 / l1
        e2 = e2 / l2
        cross = e1[0] * e2[1] - e1[1] * e2[0]
        dot = float(np.clip(np.dot(e1, e2), -1.0, 1.0))
        turn = math.atan2(cross, dot)
        r = float(radii[i])
        t = r * math.tan(abs(turn) / 2.0)
        if t >= min(l1, l2) / 2.0:
            raise ValueError(f"fillet radius {r} too large at vertex {i}")
        t_in = v - e1 * t
        t_out = v + e2 * t
        n1 = np.array([-e1[1], e1[0]]) * (1.0 if turn > 0 else -1.0)
        center = t_in + n1 * r
        tang_pts.append((t_in, t_out, center, turn, r))

    pts: list[np.ndarray] = []
    info = TrackInfo()
    s_acc = 0.0

    def add_straight(a, b):
        nonlocal s_acc
        length = float(np.hypot(*(b - a)))
        n = max(1, int(math.ceil(length / point_spacing)))
        for k in range(1, n + 1):
            pts.append(a + (b - a) * (k / n))
        s_acc += length

    def add_arc(t_in, center, turn, r):
        nonlocal s_acc
        arc_len = abs(turn) * r
        n = max(2, int(math.ceil(arc_len / point_spacing)))
        a0 = math.atan2(t_in[1] - center[1], t_in[0] - center[0])
        start_s = s_acc
        for k in range(1, n + 1):
            ang = a0 + turn * (k / n)
            pts.append(center + r * np.array([math.cos(ang), math.sin(ang)]))
        s_acc += arc_len
        info.corners.append(ArcInfo(
            start_s=start_s,
            apex_s=start_s + arc_len / 2.0,
            end_s=start_s + arc_len,
            signed_curvature=math.copysign(1.0 / r, turn),
        ))

    pts.append(tang_pts[0][0].copy())
    for i in range(nv):
        t_in, t_out, center, turn, r = tang_pts[i]
        add_arc(t_in, center, turn, r)
        nxt_in = tang_pts[(i + 1) % nv][0]
        add_straight(t_out, nxt_in)

    arr = np.asarray(pts, dtype=float)
    if n_stations is None:
        n_stations = int(round(polyline_length(arr) / 2.0))
    trk = Track.from_points(arr, half_width, half_width, n_stations, name=name)
    return trk, info


def triangle_track(
    side: float = 380.0,
    radii=(55.0, 70.0, 45.0),
    half_width: float = 6.0,
    name: str = "tri",
) -> tuple[Track, TrackInfo]:
    """Rounded equilateral triangle: three well-separated corners."""
    h = side * math.sqrt(3.0) / 2.0
    verts = [(0.0, 0.0), (side, 0.0), (side / 2.0, h)]
    return rounded_polygon_track(verts, radii, half_width, name=name)


def square_track(
    side: float = 300.0,
    radii=(45.0, 60.0, 40.0, 70.0),
    half_width: float = 6.0,
    name: str = "quad",
) -> tuple[Track, TrackInfo]:
    verts = [(0.0, 0.0), (side, 0.0), (side, side), (0.0, side)]
    return rounded_polygon_track(verts, radii, half_width, name=name)


def hexagon_track(
    radius: float = 260.0,
    radii=(50.0, 35.0, 65.0, 45.0, 80.0, 55.0),
    half_width: float = 6.0,
    name: str = "hex",
) -> tuple[Track, TrackInfo]:
    """Rounded hexagon: six corners with distinct radii."""
    verts = [
        (radius * math.cos(2.0 * math.pi * k / 6), radius * math.sin(2.0 * math.pi * k / 6))
        for k in range(6)
    ]
    return rounded_polygon_track(verts, radii, half_width, name=name)


def long_straight_track(
    long_side: float = 700.0,
    short_side: float = 180.0,
    radii=(55.0, 55.0, 55.0, 55.0),
    half_width: float = 6.0,
    name: str = "drag",
) -> tuple[Track, TrackInfo]:
    """Rounded rectangle with two long straights, for speed-scaling studies."""
    verts = [(0.0, 0.0), (long_side, 0.0), (long_side, short_side), (0.0, short_side)]
    return rounded_polygon_track(verts, radii, half_width, name=name)


def circle_track(
    radius: float = 50.0,
    half_width: float = 6.0,
    name: str = "circle",
    n_stations: int | None = None,
) -> Track:
    theta = np.linspace(0.0, 2.0 * math.pi, 720, endpoint=False)
    pts = np.column_stack([radius * np.cos(theta), radius * np.sin(theta)])
    if n_stations is None:
        n_stations = int(round(2.0 * math.pi * radius / 2.0))
    return Track.from_points(pts, half_width, half_width, n_stations, name=name)
