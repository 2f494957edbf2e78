import math

import numpy as np
import pytest

from mixtwin.geometry import (
    FULL_SCALE,
    PHYSICAL_MINIATURE,
    DegenerateTrack,
    Pose2D,
    Track,
    build_mcct_loop,
    convert_pose,
    project_to_track,
    signed_gap,
    wrap_angle,
)


@pytest.fixture(scope="module")
def loop():
    return build_mcct_loop()


def test_convert_pose_mini_to_full():
    p = convert_pose(Pose2D(0.3, 0.5, 1.0), PHYSICAL_MINIATURE, FULL_SCALE)
    assert p.x == pytest.approx(4.2)
    assert p.y == pytest.approx(7.0)
    assert p.theta == 1.0


def test_convert_pose_identity():
    p = Pose2D(1.25, -3.5, 0.7)
    assert convert_pose(p, FULL_SCALE, FULL_SCALE) == p


def test_convert_pose_full_to_mini():
    p = convert_pose(Pose2D(4.2, 7.0, 1.0), FULL_SCALE, PHYSICAL_MINIATURE)
    assert p.x == pytest.approx(0.3)
    assert p.y == pytest.approx(0.5)
    assert p.theta == 1.0


def test_convert_pose_round_trip_relative_error():
    rng = np.random.default_rng(3)
    for _ in range(200):
        p = Pose2D(*rng.uniform(-100, 100, size=2), rng.uniform(-math.pi, math.pi))
        q = convert_pose(convert_pose(p, PHYSICAL_MINIATURE, FULL_SCALE), FULL_SCALE, PHYSICAL_MINIATURE)
        assert abs(q.x - p.x) <= 1e-9 * max(1.0, abs(p.x))
        assert abs(q.y - p.y) <= 1e-9 * max(1.0, abs(p.y))
        assert q.theta == p.theta


def test_wrap_angle_range():
    for theta in np.linspace(-20, 20, 400):
        w = wrap_angle(theta)
        assert -math.pi < w <= math.pi
        assert abs(math.cos(w) - math.cos(theta)) < 1e-12
        assert abs(math.sin(w) - math.sin(theta)) < 1e-12


def test_loop_perimeter_and_closure(loop):
    pts = loop.waypoints
    assert np.allclose(pts[0], pts[-1])
    perimeter = float(np.hypot(*np.diff(pts, axis=0).T).sum())
    assert loop.lap_length == pytest.approx(perimeter, rel=1e-12)
    # 17.5 m miniature lap at 1:14.
    assert loop.lap_length == pytest.approx(245.0, rel=1e-3)


def test_degenerate_track_rejected():
    with pytest.raises(DegenerateTrack):
        Track(np.array([[0.0, 0.0], [1.0, 0.0]]))
    with pytest.raises(DegenerateTrack):
        Track(np.array([[0.0, 0.0], [0.0, 0.0], [0.0, 0.0], [0.0, 0.0]]))


def test_landmark_must_be_on_lap():
    with pytest.raises(ValueError):
        build_mcct_loop(landmark_e_s=260.0)


def test_project_on_waypoint_tangent_heading(loop):
    s = 12.0
    x, y = loop.point_at(s)
    heading = loop.heading_at(s)
    s_hat, lateral, heading_err = loop.project(Pose2D(x, y, heading))
    assert s_hat == pytest.approx(s, abs=1e-9)
    assert lateral == pytest.approx(0.0, abs=1e-9)
    assert heading_err == pytest.approx(0.0, abs=1e-9)


def test_project_left_offset_positive(loop):
    # Bottom straight runs along +x; left of travel is +y.
    s = 10.0
    x, y = loop.point_at(s)
    _, lateral, _ = loop.project(Pose2D(x, y + 0.5, 0.0))
    assert lateral == pytest.approx(0.5, abs=1e-9)
    _, lateral, _ = loop.project(Pose2D(x, y - 0.5, 0.0))
    assert lateral == pytest.approx(-0.5, abs=1e-9)


def test_project_matches_brute_force_nearest_point(loop):
    """Oracle: exhaustive nearest-point search on a 1 mm-sampled centerline."""
    fine = np.arange(0.0, loop.lap_length, 0.001)
    fx = np.interp(fine, *_cumulative(loop))
    fy = np.interp(fine, _cumulative(loop)[0], loop.waypoints[:, 1])
    rng = np.random.default_rng(11)
    for _ in range(25):
        s = rng.uniform(0, loop.lap_length)
        x, y = loop.point_at(s)
        px = x + rng.uniform(-1.5, 1.5)
        py = y + rng.uniform(-1.5, 1.5)
        s_hat, lateral, _ = loop.project(Pose2D(px, py, 0.0))
        i = int(np.argmin((fx - px) ** 2 + (fy - py) ** 2))
        s_brute = fine[i]
        d_brute = math.hypot(fx[i] - px, fy[i] - py)
        ds = abs(s_hat - s_brute)
        ds = min(ds, loop.lap_length - ds)
        assert ds <= 0.002
        assert abs(abs(lateral) - d_brute) <= 0.002


def _cumulative(track: Track):
    pts = track.waypoints
    seg = np.hypot(*np.diff(pts, axis=0).T)
    return np.concatenate([[0.0], np.cumsum(seg)]), pts[:, 0]


def test_point_at_project_round_trip(loop):
    for s in np.linspace(0.0, loop.lap_length, 500, endpoint=False):
        x, y = loop.point_at(s)
        s_hat, _, _ = project_to_track(loop, Pose2D(x, y, 0.0))
        ds = abs(s_hat - s)
        assert min(ds, loop.lap_length - ds) < 0.002


def test_signed_gap_examples():
    track = _lap245()
    assert signed_gap(track, 10.0, 18.4) == pytest.approx(8.4)
    assert signed_gap(track, 240.0, 3.4) == pytest.approx(8.4)
    assert signed_gap(track, 50.0, 50.0) == pytest.approx(track.lap_length)


def test_signed_gap_complement():
    track = _lap245()
    rng = np.random.default_rng(5)
    for _ in range(100):
        a, b = rng.uniform(0, track.lap_length, size=2)
        if a == b:
            continue
        total = signed_gap(track, a, b) + signed_gap(track, b, a)
        assert total == pytest.approx(track.lap_length)


def _lap245() -> Track:
    # Square loop with perimeter exactly 245 m, enough for gap arithmetic.
    side = 245.0 / 4.0
    return Track(
        np.array([[0.0, 0.0], [side, 0.0], [side, side], [0.0, side], [0.0, 0.0]])
    )
