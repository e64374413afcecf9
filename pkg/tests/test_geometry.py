import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pnp.geometry import (
    SQRT3, HexFrame, Point, Polygon, adjacent_centers, center_of, coverage_fraction,
    hex_distance, is_lattice_center, needed_tiles, neighbors, owning_center,
    point_in_hex, tile_of,
)

FRAME = HexFrame(Point(0.0, 0.0), 0.0, 5.0)


def lattice_oracle(frame, rings=5):
    """Centers within ``rings`` steps of the origin, built from two unit
    vectors at theta+30 and theta+90 degrees (no axial helper involved)."""
    step = SQRT3 * frame.side
    a = (step * math.cos(frame.theta + math.pi / 6), step * math.sin(frame.theta + math.pi / 6))
    b = (step * math.cos(frame.theta + math.pi / 2), step * math.sin(frame.theta + math.pi / 2))
    pts = []
    for i in range(-rings, rings + 1):
        for j in range(-rings, rings + 1):
            pts.append(Point(frame.origin.x + i * a[0] + j * b[0],
                             frame.origin.y + i * a[1] + j * b[1]))
    return pts


def in_hex_halfplanes(p, c, frame):
    """Intersection of the three slabs |n_k . (p - c)| <= apothem."""
    ap = frame.side * SQRT3 / 2
    for k in range(3):
        ang = frame.theta + math.pi / 6 + k * math.pi / 3
        if abs((p[0] - c[0]) * math.cos(ang) + (p[1] - c[1]) * math.sin(ang)) > ap:
            return False
    return True


frames = st.builds(
    HexFrame,
    st.builds(Point, st.floats(-50, 50), st.floats(-50, 50)),
    st.floats(0, 2 * math.pi),
    st.floats(0.5, 10),
)


def test_adjacent_center_at_thirty_degrees():
    # sqrt(3)*5*(cos 30, sin 30), evaluated by hand: (7.5, 4.330127)
    got = adjacent_centers(Point(0, 0), FRAME)
    assert any(math.isclose(p.x, 7.5, abs_tol=1e-9) and math.isclose(p.y, 4.330127019, abs_tol=1e-8)
               for p in got)
    assert all(math.isclose(math.hypot(*p), 8.660254038, abs_tol=1e-8) for p in got)


def test_rotation_by_sixty_degrees_gives_same_lattice():
    rotated = HexFrame(Point(0, 0), math.pi / 3, 5.0)
    assert rotated.theta == 0.0
    a = sorted((round(p.x, 9), round(p.y, 9)) for p in adjacent_centers(Point(0, 0), FRAME))
    b = sorted((round(p.x, 9), round(p.y, 9)) for p in adjacent_centers(Point(0, 0), rotated))
    assert a == b


def test_off_lattice_center_rejected():
    with pytest.raises(ValueError):
        adjacent_centers(Point(1.0, 0.0), FRAME)


def test_frame_validation():
    with pytest.raises(ValueError):
        HexFrame(Point(0, 0), 0.0, 0.0)
    with pytest.raises(ValueError):
        HexFrame(Point(0, 0), 0.0, 1.0, starter_ts=-1.0)


def test_frame_key_orders_by_timestamp_then_id():
    old = HexFrame(Point(0, 0), 0.0, 5.0, 1.0, 9)
    new = HexFrame(Point(0, 0), 0.0, 5.0, 2.0, 1)
    tie = HexFrame(Point(0, 0), 0.0, 5.0, 1.0, 3)
    assert old.key < new.key
    assert tie.key < old.key


def test_point_in_hex_apothem_boundary():
    ap = 5.0 * SQRT3 / 2
    n = (math.cos(math.pi / 6), math.sin(math.pi / 6))
    eps = 1e-6
    inside = Point(n[0] * (ap - eps), n[1] * (ap - eps))
    outside = Point(n[0] * (ap + eps), n[1] * (ap + eps))
    assert point_in_hex(Point(0, 0), Point(0, 0), FRAME)
    assert point_in_hex(inside, Point(0, 0), FRAME)
    assert not point_in_hex(outside, Point(0, 0), FRAME)
    assert not point_in_hex(Point(5.01, 0), Point(0, 0), FRAME)
    # both half-plane check and oracle agree
    assert in_hex_halfplanes(inside, (0, 0), FRAME)
    assert not in_hex_halfplanes(outside, (0, 0), FRAME)


def test_edge_midpoint_goes_to_smaller_axial_index():
    # midpoint between (0,0) and (1,0) centers
    c1 = center_of((1, 0), FRAME)
    mid = Point(c1.x / 2, c1.y / 2)
    assert tile_of(mid, FRAME) == (0, 0)
    assert point_in_hex(mid, Point(0, 0), FRAME)
    assert not point_in_hex(mid, c1, FRAME)


def test_owning_center_matches_brute_force_nearest_center():
    rng = random.Random(1234)
    for frame in (FRAME, HexFrame(Point(3.2, -1.7), 0.4, 5.0), HexFrame(Point(0, 0), 1.0, 2.5)):
        centers = lattice_oracle(frame)
        reach = 3 * SQRT3 * frame.side
        for _ in range(1000):
            p = Point(frame.origin.x + rng.uniform(-reach, reach),
                      frame.origin.y + rng.uniform(-reach, reach))
            best = min(centers, key=lambda c: math.hypot(p.x - c.x, p.y - c.y))
            got = owning_center(p, frame)
            assert math.hypot(got.x - best.x, got.y - best.y) < 1e-9
            assert in_hex_halfplanes(p, got, frame)


def test_hex_distance_examples():
    assert hex_distance((0, 0), (0, 0)) == 0
    assert all(hex_distance((0, 0), n) == 1 for n in neighbors((0, 0)))
    assert hex_distance((0, 0), (2, -1)) == 2
    assert hex_distance((0, 0), (3, 3)) == 6


@settings(max_examples=200, deadline=None)
@given(frames, st.floats(-40, 40), st.floats(-40, 40))
def test_every_point_owned_by_exactly_one_tile(frame, dx, dy):
    p = Point(frame.origin.x + dx, frame.origin.y + dy)
    c = owning_center(p, frame)
    assert point_in_hex(p, c, frame)
    t = tile_of(p, frame)
    owners = [n for n in neighbors(t) if point_in_hex(p, center_of(n, frame), frame)]
    assert owners == []


@settings(max_examples=200, deadline=None)
@given(frames, st.integers(-20, 20), st.integers(-20, 20))
def test_adjacency_is_symmetric_and_equidistant(frame, i, j):
    c = center_of((i, j), frame)
    assert is_lattice_center(c, frame)
    adj = adjacent_centers(c, frame)
    assert len(adj) == 6
    for a in adj:
        assert math.isclose(math.hypot(a.x - c.x, a.y - c.y), SQRT3 * frame.side, rel_tol=1e-9)
        back = adjacent_centers(a, frame)
        assert any(math.hypot(b.x - c.x, b.y - c.y) < 1e-6 for b in back)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.5, 10))
def test_connectivity_condition(side):
    # r_tx >= sqrt(3)*r_s makes every adjacent pair mutually audible
    frame = HexFrame(Point(0, 0), 0.3, side)
    r_tx = SQRT3 * side
    for a in adjacent_centers(Point(0, 0), frame):
        assert math.hypot(*a) <= r_tx * (1 + 1e-12)


def test_polygon_validation():
    with pytest.raises(ValueError):
        Polygon((Point(0, 0), Point(1, 0)))
    with pytest.raises(ValueError):
        Polygon((Point(0, 0), Point(1, 1), Point(1, 0), Point(0, 1)))
    with pytest.raises(ValueError):
        Polygon((Point(0, 0), Point(1, 1), Point(2, 2)))


def test_nonconvex_polygon_contains():
    l_shape = Polygon((Point(0, 0), Point(10, 0), Point(10, 4), Point(4, 4), Point(4, 10), Point(0, 10)))
    assert l_shape.contains((2, 8))
    assert not l_shape.contains((8, 8))
    assert l_shape.area == pytest.approx(64.0)


def test_coverage_fraction_examples():
    square = Polygon.rectangle(0, 0, 10, 10)
    assert coverage_fraction([], square, 5.0) == 0.0
    one = coverage_fraction([(5, 5)], square, 5.0, resolution=0.05)
    assert one == pytest.approx(math.pi * 25 / 100, abs=0.01)
    with pytest.raises(ValueError):
        coverage_fraction([(5, 5)], square, 5.0, resolution=0.0)


@pytest.mark.parametrize("theta", [0.0, 0.37, 0.9])
def test_full_lattice_covers_aoi(theta):
    aoi = Polygon.rectangle(0, 0, 40, 30)
    frame = HexFrame(Point(11.0, 7.0), theta, 5.0)
    # every hexagon that reaches the AoI: center within one circumradius
    centers = [c for c in (center_of((i, j), frame) for i in range(-12, 13) for j in range(-12, 13))
               if aoi.contains(c) or aoi.distance(c) <= frame.side]
    assert coverage_fraction(centers, aoi, 5.0, resolution=0.25) == 1.0


def test_needed_tiles_include_center_inside_tiles():
    aoi = Polygon.rectangle(0, 0, 40, 30)
    frame = HexFrame(Point(11.0, 7.0), 0.2, 5.0)
    tiles = needed_tiles(frame, aoi)
    for i in range(-10, 11):
        for j in range(-10, 11):
            if aoi.contains(center_of((i, j), frame)):
                assert (i, j) in tiles
