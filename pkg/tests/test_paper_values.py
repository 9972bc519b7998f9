"""Published constants, checked against the source text and tied to the defaults."""
import re
from pathlib import Path

import numpy as np
import pytest

from textspine.cli import build_parser
from textspine.geometry import shrink_offset
from textspine.labels import bce_ohem_loss

SOURCE = Path(__file__).resolve().parents[1] / "paper.md"

pytestmark = pytest.mark.skipif(not SOURCE.exists(), reason="source text not present")


@pytest.fixture(scope="module")
def text():
    return SOURCE.read_text(encoding="utf-8")


def _defaults(*argv):
    return build_parser().parse_args(list(argv))


def test_schedule_endpoints(text):
    assert re.search(r"r_a\s*=\s*0\.4\$? and \$?r_b\s*=\s*0\.6", text)
    args = _defaults("gen-labels", "a", "b")
    assert (args.r_a, args.r_b) == (0.4, 0.6)


def test_max_epoch(text):
    assert re.search(r"\b1200 epochs\b", text)
    assert _defaults("gen-labels", "a", "b").max_epoch == 1200


@pytest.mark.parametrize("size", [640, 800])
def test_inference_sizes(text, size):
    assert re.search(r"\b640 and 800\b", text)
    assert _defaults("detect", "x", "--out", "o", "--size", str(size)).size == size


def test_shrink_offset_form(text):
    assert re.search(r"D = \\frac\{A\}\{L\} \(1 - r\^2\)", text)
    square = np.array([[0, 0], [10, 0], [10, 10], [0, 10]], float)
    assert shrink_offset(square, 0.4) == pytest.approx(100 / 40 * (1 - 0.16), abs=1e-12)


def test_ohem_ratio(text):
    assert re.search(r"\b1 : 3\b", text)
    target = np.zeros((1, 1, 4, 4))
    target[..., 0, :2] = 1
    assert bce_ohem_loss(np.full(target.shape, 0.5), target).n_neg_selected == 6
