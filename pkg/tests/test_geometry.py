import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from textspine.errors import GeometryError, ParameterError
from textspine.geometry import (ShrinkSchedule, area, as_polygon, is_simple, offset_polygon,
                                perimeter, repair_polygon, schedule_ratio, shrink_for_epoch,
                                shrink_offset, signed_area)

from oracles import fan_area, random_convex, random_simple

SQUARE = np.array([[0, 0], [10, 0], [10, 10], [0, 10]], dtype=float)
seeds = st.integers(0, 2 ** 32 - 1)


def test_unit_and_ten_squares():
    assert area([[0, 0], [1, 0], [1, 1], [0, 1]]) == 1
    assert perimeter([[0, 0], [1, 0], [1, 1], [0, 1]]) == 4
    assert area(SQUARE) == 100 and perimeter(SQUARE) == 40


@pytest.mark.parametrize("pts", [[[0, 0], [1, 1]], [[0, 0], [0, 0], [1, 1], [1, 1]], [[0, 0]] * 5])
def test_degenerate_polygons(pts):
    with pytest.raises(GeometryError):
        area(pts)


def test_ingestion_orients_ccw_and_drops_repeats():
    cw = SQUARE[::-1]
    p = as_polygon(np.vstack([cw, cw[:1]]))
    assert len(p) == 4 and signed_area(p) > 0


@pytest.mark.parametrize("seed", range(10))
def test_decagon_area_vs_fan_oracle(seed):
    poly = random_simple(np.random.default_rng(seed), n=10)
    assert area(poly) == pytest.approx(fan_area(poly), abs=1e-9)


def test_shrink_offset_square():
    assert shrink_offset(SQUARE, 0.4) == pytest.approx(2.1, abs=1e-12)
    assert shrink_offset(SQUARE, 0.5) == pytest.approx(1.875, abs=1e-12)
    assert shrink_offset(SQUARE, 1.0) == 0.0


@pytest.mark.parametrize("r", [0.0, -0.1, 1.5])
def test_shrink_ratio_domain(r):
    with pytest.raises(ParameterError):
        shrink_offset(SQUARE, r)


@settings(max_examples=30, deadline=None)
@given(seeds, st.floats(0.01, 0.99), st.floats(0.01, 0.99))
def test_shrink_offset_monotone_in_ratio(seed, r1, r2):
    poly = random_simple(np.random.default_rng(seed))
    lo, hi = sorted((r1, r2))
    assert shrink_offset(poly, lo) >= shrink_offset(poly, hi)


def test_square_inward_offset_exact():
    (inner,) = offset_polygon(SQUARE, -2.1)
    assert sorted(map(tuple, inner)) == [(2.1, 2.1), (2.1, 7.9), (7.9, 2.1), (7.9, 7.9)]
    assert area(inner) == pytest.approx(5.8 * 5.8, abs=1e-9)


@pytest.mark.parametrize("d", [-5.0, -7.5])
def test_square_vanishes(d):
    assert offset_polygon(SQUARE, d) == []


def test_zero_offset_copies():
    (p,) = offset_polygon(SQUARE, 0.0)
    assert np.array_equal(p, SQUARE) and p is not SQUARE


@pytest.mark.parametrize("seed", range(20))
def test_convex_round_trip_area(seed):
    rng = np.random.default_rng(seed)
    poly = random_convex(rng)
    d = float(rng.uniform(0.5, 5.0))
    (grown,) = offset_polygon(poly, d)
    (back,) = offset_polygon(grown, -d)
    assert area(back) == pytest.approx(area(poly), rel=0.02)


@settings(max_examples=40, deadline=None)
@given(seeds, st.floats(0.1, 6.0))
def test_offset_area_direction_simplicity_orientation(seed, d):
    poly = random_simple(np.random.default_rng(seed))
    for sign in (-1, 1):
        for q in (poly, poly[::-1]):
            pieces = offset_polygon(q, sign * d)
            for piece in pieces:
                assert is_simple(piece)
                assert np.sign(signed_area(piece)) == np.sign(signed_area(q))
                if sign < 0:
                    assert area(piece) <= area(q) + 1e-9
                else:
                    assert area(piece) >= area(q) - 1e-9


def test_pinched_polygon_splits():
    dumbbell = [[0, 0], [10, 0], [10, 4], [12, 4], [12, 0], [22, 0],
                [22, 10], [12, 10], [12, 6], [10, 6], [10, 10], [0, 10]]
    pieces = offset_polygon(dumbbell, -1.5)
    assert len(pieces) == 2


def test_repair_keeps_largest_piece():
    bowtie = [[0, 0], [10, 10], [10, 0], [0, 10]]
    assert not is_simple(bowtie)
    fixed = repair_polygon(bowtie, warn=False)
    assert is_simple(fixed) and area(fixed) == pytest.approx(25.0)


def test_schedule_endpoints_and_midpoint():
    s = ShrinkSchedule(0.4, 0.6, 1200)
    assert schedule_ratio(s, 0) == 0.4
    assert schedule_ratio(s, 1200) == 0.6
    assert schedule_ratio(s, 600) == pytest.approx(0.5, abs=1e-15)
    assert schedule_ratio(s, 5000) == 0.6


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 1200), st.integers(0, 1200))
def test_schedule_linear(e1, e2):
    if (e1 + e2) % 2:
        e2 += 1 if e2 < 1200 else -1
    s = ShrinkSchedule(0.4, 0.6, 1200)
    assert schedule_ratio(s, e1) + schedule_ratio(s, e2) == pytest.approx(
        2 * schedule_ratio(s, (e1 + e2) // 2), abs=1e-12)


@pytest.mark.parametrize("kw", [dict(r_a=0.0), dict(r_b=1.2), dict(max_epoch=0)])
def test_schedule_validation(kw):
    with pytest.raises(ParameterError):
        ShrinkSchedule(**kw)


def test_negative_epoch():
    with pytest.raises(ParameterError):
        schedule_ratio(ShrinkSchedule(), -1)


def test_shrink_for_epoch_square_and_unit_ratio():
    (inner,) = shrink_for_epoch(SQUARE, ShrinkSchedule(0.4, 0.6, 100), 0)
    assert area(inner) == pytest.approx(33.64, abs=1e-9)
    (same,) = shrink_for_epoch(SQUARE, ShrinkSchedule(1.0, 1.0, 10), 3)
    assert np.array_equal(same, SQUARE)


@pytest.mark.parametrize("seed", range(5))
def test_shrunk_area_non_decreasing(seed):
    poly = random_convex(np.random.default_rng(seed))
    s = ShrinkSchedule(0.4, 0.6, 50)
    areas = [sum(area(q) for q in shrink_for_epoch(poly, s, e)) for e in range(51)]
    assert all(b >= a - 1e-9 for a, b in zip(areas, areas[1:]))
