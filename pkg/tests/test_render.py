import re

import numpy as np
import pytest

from conftest import GOLDEN
from repsim.analysis import compare_sets
from repsim.errors import InputError, LengthMismatch, NotSquare
from repsim.fixtures import GeneratorSpec, gen_model_pair
from repsim.render import (
    SimilarityMatrix,
    curve_csv,
    curve_from_matrix,
    curve_svg,
    gray,
    heatmap_svg,
    matrix_csv,
    read_curve_csv,
    read_matrix_csv,
    render_curve,
    render_heatmap,
)
from repsim.topology import LayerDescriptor, NetworkTopology, generic_topology

TINY = NetworkTopology("tiny", (LayerDescriptor(0, "convolution", "backbone", "3x3"),
                                LayerDescriptor(1, "convolution", "head", "1x1"),
                                LayerDescriptor(2, "detection", "head")))
M3 = [[1.0, 0.5, 0.0], [0.25, 1.0, 0.75], [0.0, 0.1, 1.0]]


def fills(svg):
    return re.findall(r'<rect x="\d+" y="\d+" width="6" height="6" fill="(#[0-9a-f]{6})"/>', svg)


def test_gray_levels():
    assert [gray(v) for v in (0.0, 0.5, 1.0)] == ["#000000", "#808080", "#ffffff"]


def test_single_cell_extremes():
    assert fills(heatmap_svg(SimilarityMatrix("a", "b", [[1.0]]))) == ["#ffffff"]
    assert fills(heatmap_svg(SimilarityMatrix("a", "b", [[0.0]]))) == ["#000000"]


def test_one_rect_per_cell():
    m = SimilarityMatrix("a", "b", np.full((4, 7), 0.3))
    assert len(fills(heatmap_svg(m))) == 28


def test_heatmap_golden():
    m = SimilarityMatrix("a", "b", M3, TINY, TINY)
    assert heatmap_svg(m) == (GOLDEN / "heatmap_3x3.svg").read_text()


def test_curve_golden():
    svg = curve_svg({"a vs b": [1.0, 0.5, 0.25], "a vs c": [0.2, 0.6, 0.4]}, TINY)
    assert svg == (GOLDEN / "curve_3.svg").read_text()


def test_render_is_deterministic(tmp_path):
    m = SimilarityMatrix("a", "b", M3, TINY, TINY)
    render_heatmap(m, None, None, tmp_path / "1.svg")
    render_heatmap(m, None, None, tmp_path / "2.svg")
    render_curve({"x": [0.1, 0.2, 0.3]}, TINY, tmp_path / "3.svg")
    render_curve({"x": [0.1, 0.2, 0.3]}, TINY, tmp_path / "4.svg")
    assert (tmp_path / "1.svg").read_bytes() == (tmp_path / "2.svg").read_bytes()
    assert (tmp_path / "3.svg").read_bytes() == (tmp_path / "4.svg").read_bytes()


def test_yolo_ticks(yolo):
    m = SimilarityMatrix("a", "a", np.eye(107), yolo, yolo)
    svg = heatmap_svg(m)
    labels = [int(t) for t in re.findall(r'text-anchor="end">(\d+)</text>', svg)]
    assert labels == [82, 83, 86, 94, 95, 98, 106]
    guides = re.search(r'<g id="guides".*?</g>', curve_svg({"c": [0.5] * 107}, yolo), re.S).group(0)
    assert guides.count("<line") == 3


def test_matrix_validation(yolo):
    with pytest.raises(InputError):
        SimilarityMatrix("a", "b", [[1.5]])
    with pytest.raises(LengthMismatch):
        SimilarityMatrix("a", "b", np.eye(3), yolo)


def test_curve_length_mismatch(yolo):
    with pytest.raises(LengthMismatch):
        curve_svg({"c": [0.5] * 106}, yolo)
    with pytest.raises(LengthMismatch):
        curve_svg({"c": [0.5] * 3, "d": [0.5] * 4})


def test_not_square():
    with pytest.raises(NotSquare):
        curve_from_matrix(SimilarityMatrix("a", "b", np.full((2, 3), 0.5)))


def test_diagonal_equals_curve():
    spec = GeneratorSpec.uniform(4, generic_topology(12), n=30, layer_shape=(1, 1, 8),
                                 scheme="shared_prefix", k=4)
    a, b = gen_model_pair(spec)
    for metric in ("linear_cka", "svcca", "pwcca"):
        full = compare_sets(a, b, metric)
        direct = compare_sets(a, b, metric, full_matrix=False).curve
        assert curve_from_matrix(full.matrix) == direct == full.curve


def test_csv_roundtrip(tmp_path):
    m = SimilarityMatrix("a", "b", M3)
    (tmp_path / "m.csv").write_text(matrix_csv(m, [5, 6, 7], [0, 1, 2]))
    values, rows, cols = read_matrix_csv(tmp_path / "m.csv")
    assert np.array_equal(values, np.array(M3)) and rows == [5, 6, 7] and cols == [0, 1, 2]
    (tmp_path / "c.csv").write_text(curve_csv({"fwd": [0.1, 0.2, 0.3]}, [0, 1, 2], TINY))
    curves, idx = read_curve_csv(tmp_path / "c.csv")
    assert curves == {"fwd": [0.1, 0.2, 0.3]} and idx == [0, 1, 2]
    assert (tmp_path / "c.csv").read_text().splitlines()[3] == "2,detection,head,0.3"
