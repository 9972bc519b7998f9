import json

import numpy as np
import pytest

from textspine.annotations import (annotation_files, load_annotation, parse_annotation,
                                   parse_ctw1500_line)
from textspine.errors import FormatError
from textspine.geometry import signed_area

POINTS14 = [(10 + 5 * i, 20) for i in range(7)] + [(40 - 5 * i, 35) for i in range(7)]


def test_absolute_28_values():
    line = ",".join(str(v) for p in POINTS14 for v in p)
    pts, ignore = parse_ctw1500_line(line)
    assert pts.shape == (14, 2) and not ignore
    assert tuple(pts[0]) == (10, 20)


def test_bbox_plus_offsets_layout():
    offs = [(x - 10, y - 20) for x, y in POINTS14]
    line = ",".join(map(str, [10, 20, 40, 35] + [v for p in offs for v in p]))
    pts, _ = parse_ctw1500_line(line)
    np.testing.assert_array_equal(pts, np.array(POINTS14, dtype=float))


def test_transcription_and_ignore_marker():
    pts, ignore = parse_ctw1500_line("0,0,10,0,10,10,0,10,###")
    assert ignore and len(pts) == 4
    _, ignore = parse_ctw1500_line("0,0,10,0,10,10,0,10,hello, world")
    assert not ignore


@pytest.mark.parametrize("line", ["1,2,3", "1,2,3,4,5,6,7", "abc"])
def test_malformed_lines(line):
    with pytest.raises(FormatError):
        parse_ctw1500_line(line)


def test_blank_line():
    assert parse_ctw1500_line("   ") is None


def test_load_txt_with_size_default(tmp_path):
    p = tmp_path / "0001.txt"
    p.write_text("0,0,10,0,10,10,0,10\n\n20,20,30,20,30,30,###\n")
    ann = load_annotation(p)
    assert ann.image_id == "0001" and len(ann.instances) == 2
    assert (ann.width, ann.height) == (31, 31)
    assert [i.ignore for i in ann.instances] == [False, True]
    assert (load_annotation(p, 64, 48).width, load_annotation(p, 64, 48).height) == (64, 48)


def test_json_roundtrip_and_orientation(tmp_path):
    obj = {"width": 50, "height": 40, "instances": [
        {"points": [[0, 0], [0, 10], [10, 10], [10, 0]], "ignore": False},
        {"points": [[20, 20], [30, 20], [25, 30]], "ignore": True}]}
    p = tmp_path / "img.json"
    p.write_text(json.dumps(obj))
    ann = load_annotation(p)
    assert all(signed_area(i.points) > 0 for i in ann.instances)
    again = parse_annotation(ann.to_json(), "img")
    assert again.to_json() == ann.to_json()


def test_bad_json(tmp_path):
    p = tmp_path / "x.json"
    p.write_text("{")
    with pytest.raises(FormatError):
        load_annotation(p)
    with pytest.raises(FormatError):
        parse_annotation({"instances": []})
    with pytest.raises(FormatError):
        load_annotation(tmp_path / "x.csv")


def test_degenerate_instance_skipped():
    ann = parse_annotation({"width": 5, "height": 5, "instances": [{"points": [[0, 0], [1, 1]]}]})
    assert ann.instances == ()


def test_self_intersecting_repaired():
    ann = parse_annotation({"width": 20, "height": 20, "instances": [
        {"points": [[0, 0], [10, 10], [10, 0], [0, 10]]}]})
    assert len(ann.instances) == 1


def test_annotation_files(tmp_path):
    for name in ("b.json", "a.txt", "c.png"):
        (tmp_path / name).write_text("")
    assert [p.name for p in annotation_files(tmp_path)] == ["a.txt", "b.json"]
    assert annotation_files(tmp_path / "a.txt") == [tmp_path / "a.txt"]
