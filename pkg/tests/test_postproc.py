import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from textspine.errors import GeometryError, ParameterError
from textspine.geometry import area, is_simple, offset_polygon
from textspine.labels import rasterize_mask
from textspine.postproc import (DetectParams, binarize, connected_components, detect,
                                detections_to_json, dilate_instance, douglas_peucker,
                                trace_and_approx, trace_boundary)

from oracles import flood_fill_labels, union_find_count

seeds = st.integers(0, 2 ** 32 - 1)


def square(x0, y0, side):
    return np.array([[x0, y0], [x0 + side, y0], [x0 + side, y0 + side], [x0, y0 + side]], dtype=float)


# binarize / components -------------------------------------------------

def test_binarize_edges():
    assert not binarize(np.zeros((4, 4)), 0.3).any()
    assert binarize(np.random.default_rng(0).random((4, 4)), 0.0).all()


def test_binarize_vs_scalar_loop():
    prob = np.random.default_rng(1).random((9, 7))
    expected = np.array([[prob[y, x] >= 0.3 for x in range(7)] for y in range(9)])
    assert np.array_equal(binarize(prob, 0.3), expected)
    assert np.array_equal(binarize(prob[None, None], 0.3), expected)


@settings(max_examples=40, deadline=None)
@given(seeds, st.floats(0.01, 0.99), st.floats(0.01, 0.99))
def test_threshold_monotone(seed, t1, t2):
    prob = np.random.default_rng(seed).random((12, 12))
    lo, hi = sorted((t1, t2))
    assert binarize(prob, hi).sum() <= binarize(prob, lo).sum()


def test_diagonal_pixels_join():
    _, n = connected_components(np.eye(2, dtype=bool))
    assert n == 1


def test_checkerboard_components():
    board = (np.add.outer(np.arange(4), np.arange(4)) % 2 == 0)
    # each colour class is one 8-connected piece, so the board splits into 2
    _, n_on = connected_components(board)
    _, n_off = connected_components(~board)
    assert n_on + n_off == union_find_count(board, 8) + union_find_count(~board, 8) == 2
    assert union_find_count(board, 4) == 8


def test_empty_mask_no_components():
    labels, n = connected_components(np.zeros((5, 5), dtype=bool))
    assert n == 0 and not labels.any()


def test_all_3x3_masks_match_flood_fill():
    for bits in itertools.product((0, 1), repeat=9):
        m = np.array(bits, dtype=bool).reshape(3, 3)
        labels, n = connected_components(m)
        ref, ref_n = flood_fill_labels(m)
        assert n == ref_n and np.array_equal(labels, ref)


@settings(max_examples=100, deadline=None)
@given(seeds, st.floats(0.1, 0.9))
def test_random_6x6_match_flood_fill(seed, density):
    m = np.random.default_rng(seed).random((6, 6)) < density
    labels, n = connected_components(m)
    ref, ref_n = flood_fill_labels(m)
    assert n == ref_n and np.array_equal(labels, ref)


# tracing / simplification ---------------------------------------------

def test_trace_rectangle_visits_perimeter_once():
    region = np.zeros((6, 8), dtype=bool)
    region[1:4, 2:7] = True
    rc = trace_boundary(region)
    expected = {(y, x) for y in range(1, 4) for x in range(2, 7)} - {(2, x) for x in range(3, 6)}
    assert set(map(tuple, rc)) == expected
    assert len(rc) == len(expected)


def test_trace_follows_thin_diagonal_and_empty():
    rc = trace_boundary(np.eye(4, dtype=bool))
    assert set(map(tuple, rc)) == {(i, i) for i in range(4)}
    with pytest.raises(GeometryError):
        trace_boundary(np.zeros((3, 3), dtype=bool))


def test_rectangle_approximates_to_corners():
    region = np.ones((5, 9), dtype=bool)
    poly = trace_and_approx(region, 0.01, origin=(10, 20))
    assert len(poly) == 4
    corners = {(20.5, 10.5), (28.5, 10.5), (28.5, 14.5), (20.5, 14.5)}
    assert set(map(tuple, poly)) == corners


def test_single_pixel_is_unit_square():
    poly = trace_and_approx(np.ones((1, 1), dtype=bool), origin=(3, 4))
    assert area(poly) == 1 and set(map(tuple, poly)) == {(4, 3), (5, 3), (5, 4), (4, 4)}


def test_zero_eps_keeps_contour():
    region = np.zeros((9, 9), dtype=bool)
    region[2:7, 1:8] = True
    region[4, 8] = True
    contour = trace_boundary(region)[:, ::-1] + 0.5
    assert np.array_equal(trace_and_approx(region, 0.0), contour)
    assert np.array_equal(douglas_peucker(contour, 0.0), contour)


@settings(max_examples=40, deadline=None)
@given(seeds, st.floats(0.0, 3.0))
def test_dp_keeps_subset_in_order(seed, eps):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, 40))
    ang = np.sort(rng.uniform(0, 2 * np.pi, n))
    pts = np.c_[np.cos(ang), np.sin(ang)] * rng.uniform(5, 10, (n, 1))
    out = douglas_peucker(pts, eps)
    idx = [int(np.nonzero((pts == p).all(axis=1))[0][0]) for p in out]
    assert idx == sorted(idx)


def test_dp_collinear_collapses():
    line = np.c_[np.arange(10.0), np.zeros(10)]
    assert len(douglas_peucker(line, 0.1, closed=False)) == 2


# dilation --------------------------------------------------------------

def test_dilate_inner_square():
    grown = dilate_instance(square(2.1, 2.1, 5.8), 1.5)
    d = 33.64 / 23.2 * 1.5
    assert d == pytest.approx(2.175)
    lo, hi = grown.min(axis=0), grown.max(axis=0)
    np.testing.assert_allclose(hi - lo, [10.15, 10.15], atol=1e-9)
    assert area(grown) == pytest.approx(10.15 ** 2, abs=1e-9)


def test_dilate_zero_is_identity():
    s = square(1, 1, 4)
    assert np.array_equal(dilate_instance(s, 0.0), s)


@pytest.mark.parametrize("d_ts", [0.2, 1.0, 2.5])
def test_dilate_increases_area(d_ts):
    tri = np.array([[0, 0], [30, 0], [10, 25]], dtype=float)
    assert area(dilate_instance(tri, d_ts)) > area(tri)


# detect ----------------------------------------------------------------

def test_params_validation():
    for kw in (dict(bin_thresh=0.0), dict(score_thresh=1.0), dict(d_ts=-1), dict(min_area=-2)):
        with pytest.raises(ParameterError):
            DetectParams(**kw)


def test_blank_map():
    assert detect(np.zeros((32, 32))) == []


def test_square_round_trip():
    # matched ratio for squares: D_ts == D  <=>  d_ts = 2(1 - r^2) / (1 + r^2)
    r = 0.4
    d_ts = 2 * (1 - r * r) / (1 + r * r)
    original = square(20, 20, 40)
    (spine,) = offset_polygon(original, -10 * (1 - r * r))
    prob = rasterize_mask([spine], 80, 80).astype(float)
    (det,) = detect(prob, DetectParams(d_ts=d_ts))
    assert det.score == 1.0 and len(det.polygon) == 4
    for v in original:
        assert np.min(np.hypot(*(det.polygon - v).T)) <= 1.0


def test_two_blobs():
    prob = rasterize_mask([square(5, 5, 10), square(40, 30, 12)], 64, 64).astype(float)
    dets = detect(prob)
    assert len(dets) == 2
    assert all(is_simple(d.polygon) for d in dets)


def test_score_and_area_filters():
    prob = np.zeros((40, 40))
    prob[5:15, 5:15] = 0.4
    prob[25:35, 25:35] = 0.9
    prob[2, 30] = 1.0
    dets = detect(prob, DetectParams(score_thresh=0.5, min_area=4))
    assert len(dets) == 1 and dets[0].score == pytest.approx(0.9)
    assert len(detect(prob, DetectParams(score_thresh=0.3, min_area=0.5))) == 3


def test_scale_consistency():
    prob = rasterize_mask([square(6, 8, 14), [[30, 30], [50, 34], [44, 50]]], 64, 64).astype(float)
    base = detect(prob)
    for fx, fy in ((2, 2), (3, 0.5), (1.25, 7)):
        scaled = detect(prob, orig_w=64 * fx, orig_h=64 * fy)
        for a, b in zip(base, scaled):
            np.testing.assert_allclose(b.polygon, a.polygon * [fx, fy], rtol=1e-15)


def test_detection_json():
    prob = rasterize_mask([square(4, 4, 8)], 20, 20).astype(float)
    obj = detections_to_json("img", detect(prob))
    assert obj["image_id"] == "img" and len(obj["detections"]) == 1
    assert set(obj["detections"][0]) == {"points", "score"}
