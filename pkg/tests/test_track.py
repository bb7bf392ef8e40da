import numpy as np
import pytest

from racedriver import synthetic
from racedriver.errors import AmbiguousProjection, OutOfBand, SchemaError
from racedriver.track import (
    AnalysisConfig,
    Track,
    analyse_track,
    from_curvilinear,
    load_track,
    polyline_length,
    project_point,
    resample_closed,
    save_track,
    to_curvilinear,
)


@pytest.fixture(scope="module")
def oval():
    trk, _ = synthetic.oval_track()
    return trk


def test_stations_equidistant(oval):
    gaps = np.diff(oval.s)
    assert np.all(np.abs(gaps - oval.ds) < 1e-9)


def test_resampling_preserves_length():
    trk, _ = synthetic.oval_track()
    analytic = 2 * 250.0 + 2 * np.pi * 60.0
    assert abs(trk.total_length - analytic) / analytic < 1e-3


def test_reference_closes(oval):
    ref = oval.reference_line
    gap = np.hypot(*(ref[0] - ref[-1]))
    assert gap < 2.5 * oval.ds  # wrap segment closes the loop


def test_borders_on_opposite_sides(oval):
    # signed offsets of the borders against the reference have opposite signs
    normals = oval.normals
    dl = np.einsum("ij,ij->i", oval.left_border - oval.reference_line, normals)
    dr = np.einsum("ij,ij->i", oval.right_border - oval.reference_line, normals)
    assert np.all(dl > 0)
    assert np.all(dr < 0)


def test_from_curvilinear_zero_offset(oval):
    out = from_curvilinear(np.zeros(oval.n_stations), oval)
    assert np.allclose(out, oval.reference_line)


def test_from_curvilinear_constant_offset_on_straight(oval):
    # phi = 0 along the first straight: y shifts by +2, x unchanged
    out = from_curvilinear(np.full(oval.n_stations, 2.0), oval)
    straight = np.abs(oval.curvature) < 1e-4
    straight &= np.abs(oval.heading) < 1e-3
    assert straight.sum() > 20
    assert np.allclose(out[straight, 1], oval.y[straight] + 2.0, atol=1e-6)
    assert np.allclose(out[straight, 0], oval.x[straight], atol=1e-6)


def test_identity_trace(oval):
    trace = to_curvilinear(oval.reference_line, oval)
    assert np.max(np.abs(trace.dy)) < 1e-6
    assert np.allclose(trace.kappa, oval.curvature, atol=2e-4)


def test_constant_offset_trace(oval):
    line = from_curvilinear(np.ones(oval.n_stations), oval)
    trace = to_curvilinear(line, oval)
    assert np.allclose(trace.dy, 1.0, atol=1e-3)
    straight = np.abs(oval.curvature) < 1e-4
    assert np.max(np.abs(trace.kappa[straight])) < 1e-3


def test_concentric_circle_offset():
    # reference circle R=100, inner concentric circle R=99 (CCW): dy = +1,
    # kappa = 1/99 (closed-form geometry); fine stations keep the chord
    # sagitta of the discretized reference below the 1e-3 tolerance
    ref = synthetic.circle_track(radius=100.0, half_width=5.0, n_stations=1571)
    theta = np.linspace(0, 2 * np.pi, 3000, endpoint=False)
    inner = np.column_stack([99.0 * np.cos(theta), 99.0 * np.sin(theta)])
    trace = to_curvilinear(inner, ref)
    assert np.allclose(trace.dy, 1.0, atol=1e-3)
    assert trace.kappa.mean() == pytest.approx(1.0 / 99.0, rel=1e-4)
    assert np.allclose(trace.kappa, 1.0 / 99.0, rtol=2e-2)


def test_round_trip_random_smooth_lines(oval):
    rng = np.random.default_rng(7)
    n = oval.n_stations
    for _ in range(5):
        # smooth periodic dy via a few random Fourier modes
        k = np.arange(1, 6)
        phase = rng.uniform(0, 2 * np.pi, len(k))
        amp = rng.uniform(0.2, 1.0, len(k)) / k
        arg = 2 * np.pi * np.outer(oval.s / oval.total_length, k)
        dy = (np.cos(arg + phase) * amp).sum(axis=1)
        line = from_curvilinear(dy, oval)
        trace = to_curvilinear(line, oval)
        rms = np.sqrt(np.mean((trace.dy - dy) ** 2))
        assert rms < 1e-3


def test_out_of_band():
    trk, _ = synthetic.oval_track(half_width=5.0)
    line = from_curvilinear(np.full(trk.n_stations, 40.0), trk)
    with pytest.raises(OutOfBand):
        to_curvilinear(line, trk, band=35.0)


def test_ambiguous_projection_on_folded_geometry():
    # a point equidistant from two far-apart stations of a narrow hairpin
    trk, _ = synthetic.oval_track(straight=400.0, radius=30.0, half_width=4.0)
    # center of the stadium: equally far from both straights
    mid = np.array([200.0, 30.0])
    with pytest.raises(AmbiguousProjection):
        project_point(trk, mid)


def test_project_point_seeded_is_continuous(oval):
    line = from_curvilinear(np.ones(oval.n_stations), oval)
    seed = None
    prev_s = None
    for p in line[::5]:
        if seed is None:
            s, dy, seed = project_point(oval, p)
        else:
            s, dy, seed = project_point(oval, p, seed_index=seed)
        if prev_s is not None:
            step = (s - prev_s) % oval.total_length
            assert step < 15.0
        prev_s = s


def test_analyse_oval(oval):
    ana = analyse_track(oval.reference_line, oval)
    assert len(ana.corners) == 2
    assert len(ana.straights) == 2
    for c in ana.corners:
        assert c.contains(c.apex_s, ana.total_length)


def test_analyse_circle_degenerate():
    trk = synthetic.circle_track(radius=50.0)
    ana = analyse_track(trk.reference_line, trk)
    assert len(ana.straights) == 0
    assert len(ana.corners) == 1
    assert ana.warnings


def test_partition_covers_track_once(oval):
    ana = analyse_track(oval.reference_line, oval)
    for s in np.linspace(0, ana.total_length, 400, endpoint=False):
        in_corner = ana.corner_at(s) is not None
        in_straight = ana.straight_at(s) is not None
        assert in_corner != in_straight, f"station {s} in both/neither"


def test_hexagon_apexes_match_construction():
    trk, info = synthetic.hexagon_track()
    cfg = AnalysisConfig(station_spacing=2.0)
    ana = analyse_track(trk.reference_line, trk, cfg)
    assert len(ana.corners) == 6
    built = sorted(c.apex_s for c in info.corners)
    found = sorted(c.apex_s for c in ana.corners)
    for b, f in zip(built, found):
        assert abs(b - f) <= 2 * cfg.station_spacing + 1e-9


def test_track_file_round_trip(tmp_path, oval):
    path = tmp_path / "oval.csv"
    save_track(oval, path)
    loaded = load_track(path, n_stations=oval.n_stations)
    assert loaded.name == oval.name
    assert abs(loaded.total_length - oval.total_length) / oval.total_length < 1e-3
    assert np.allclose(loaded.w_left, oval.w_left, atol=1e-3)


def test_track_file_schema_errors(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("x_m,y_m,w_left_m\n0,0,5\n")
    with pytest.raises(SchemaError):
        load_track(bad)
    open_loop = tmp_path / "open.csv"
    rows = ["x_m,y_m,w_left_m,w_right_m"]
    rows += [f"{x},0.0,5,5" for x in range(0, 100, 2)]
    open_loop.write_text("\n".join(rows) + "\n")
    with pytest.raises(SchemaError):
        load_track(open_loop)


def test_resample_closed_rejects_garbage():
    with pytest.raises(ValueError):
        resample_closed(np.zeros((2, 2)), 10)


def test_polyline_length_closed_vs_open():
    square = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float)
    assert polyline_length(square, closed=True) == pytest.approx(4.0)
    assert polyline_length(square, closed=False) == pytest.approx(3.0)
