"""SVG figures and CSV dumps for similarity curves and layer-vs-layer matrices.

Output is a pure function of the data, the topologies and ``STYLE``; every
number is written with a fixed format so identical inputs give identical bytes.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence
from xml.sax.saxutils import escape

import numpy as np

from .errors import InputError, IoFailure, LengthMismatch, NotSquare
from .topology import NetworkTopology

STYLE = {
    "cell": 6,
    "margin": 40,
    "tick": 4,
    "font_size": 8,
    "plot_width": 640,
    "plot_height": 240,
    "stroke": 1.5,
    "palette": ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"),
    "guide": "#999999",
}


@dataclass(frozen=True)
class SimilarityMatrix:
    """Scores between every layer of model_a (rows) and model_b (columns)."""

    model_a: str
    model_b: str
    values: np.ndarray
    topo_a: NetworkTopology | None = None
    topo_b: NetworkTopology | None = None
    metric: str = "linear_cka"

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise InputError(f"similarity matrix must be 2-D, got shape {v.shape}")
        if v.size and (v.min() < 0.0 or v.max() > 1.0):
            raise InputError("similarity matrix entries must lie in [0, 1]")
        if self.topo_a is not None and len(self.topo_a) != v.shape[0]:
            raise LengthMismatch(f"{v.shape[0]} rows for a {len(self.topo_a)}-layer topology")
        if self.topo_b is not None and len(self.topo_b) != v.shape[1]:
            raise LengthMismatch(f"{v.shape[1]} columns for a {len(self.topo_b)}-layer topology")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


def curve_from_matrix(m: SimilarityMatrix) -> list[float]:
    """The main diagonal, i.e. layer i of model_a against layer i of model_b."""
    rows, cols = m.shape
    if rows != cols:
        raise NotSquare(f"matrix is {rows}x{cols}")
    return [float(m.values[i, i]) for i in range(rows)]


def gray(v: float) -> str:
    level = int(math.floor(255.0 * min(max(v, 0.0), 1.0) + 0.5))
    return "#{0:02x}{0:02x}{0:02x}".format(level)


def _f(x: float) -> str:
    return f"{x:.2f}"


def _write(path, text: str) -> None:
    try:
        Path(path).write_text(text, encoding="utf-8", newline="\n")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def _tick_indices(topo: NetworkTopology | None) -> list[int]:
    if topo is None:
        return []
    return sorted(topo.indices_of("detection") + topo.indices_of("route"))


def heatmap_svg(m: SimilarityMatrix, topo_a: NetworkTopology | None = None,
                topo_b: NetworkTopology | None = None) -> str:
    topo_a = topo_a or m.topo_a
    topo_b = topo_b or m.topo_b
    cell, margin, tick, fs = STYLE["cell"], STYLE["margin"], STYLE["tick"], STYLE["font_size"]
    rows, cols = m.shape
    width, height = 2 * margin + cell * cols, 2 * margin + cell * rows
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<title>{escape(m.metric)}: {escape(m.model_a)} vs {escape(m.model_b)}</title>',
        '<g id="cells" shape-rendering="crispEdges">',
    ]
    for i in range(rows):
        y = margin + i * cell
        for j in range(cols):
            out.append(f'<rect x="{margin + j * cell}" y="{y}" width="{cell}" height="{cell}" '
                       f'fill="{gray(float(m.values[i, j]))}"/>')
    out.append("</g>")
    out.append('<g id="ticks" stroke="#000000" stroke-width="1">')
    for i in _tick_indices(topo_a):
        y = margin + i * cell + cell / 2
        out.append(f'<line x1="{margin - tick}" y1="{_f(y)}" x2="{margin}" y2="{_f(y)}"/>')
    for j in _tick_indices(topo_b):
        x = margin + j * cell + cell / 2
        y0 = margin + rows * cell
        out.append(f'<line x1="{_f(x)}" y1="{y0}" x2="{_f(x)}" y2="{y0 + tick}"/>')
    out.append("</g>")
    out.append(f'<g id="labels" font-family="sans-serif" font-size="{fs}" fill="#000000">')
    for i in _tick_indices(topo_a):
        y = margin + i * cell + cell / 2 + fs / 3
        out.append(f'<text x="{margin - tick - 2}" y="{_f(y)}" text-anchor="end">{i}</text>')
    for j in _tick_indices(topo_b):
        x = margin + j * cell + cell / 2
        out.append(f'<text x="{_f(x)}" y="{margin + rows * cell + tick + fs}" '
                   f'text-anchor="middle">{j}</text>')
    out.append(f'<text x="{margin}" y="{margin - 8}">{escape(m.model_a)} (rows) vs '
               f'{escape(m.model_b)} (columns)</text>')
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def render_heatmap(m: SimilarityMatrix, topo_a: NetworkTopology | None, topo_b: NetworkTopology | None,
                   path) -> None:
    """One grayscale rect per cell (0 black, 1 white); ticks at route and detection layers."""
    _write(path, heatmap_svg(m, topo_a, topo_b))


def curve_svg(curves: Mapping[str, Sequence[float]], topo: NetworkTopology | None = None) -> str:
    if not curves:
        raise InputError("no curves to render")
    lengths = {len(c) for c in curves.values()}
    if len(lengths) != 1 or (topo is not None and lengths != {len(topo)}):
        raise LengthMismatch(f"curve lengths {sorted(lengths)} do not match "
                             f"{'each other' if topo is None else f'{len(topo)} layers'}")
    (n_layers,) = lengths
    margin, fs = STYLE["margin"], STYLE["font_size"]
    pw, ph = STYLE["plot_width"], STYLE["plot_height"]
    width, height = 2 * margin + pw, 2 * margin + ph

    def x_of(i: int) -> float:
        return margin + (pw * i / (n_layers - 1) if n_layers > 1 else pw / 2)

    def y_of(v: float) -> float:
        return margin + ph * (1.0 - min(max(v, 0.0), 1.0))

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="{margin}" y="{margin}" width="{pw}" height="{ph}" fill="none" stroke="#000000"/>',
        f'<g id="guides" stroke="{STYLE["guide"]}" stroke-dasharray="3,3">',
    ]
    if topo is not None:
        for i in topo.indices_of("detection"):
            out.append(f'<line x1="{_f(x_of(i))}" y1="{margin}" x2="{_f(x_of(i))}" y2="{margin + ph}"/>')
    out.append("</g>")
    out.append('<g id="curves" fill="none">')
    palette = STYLE["palette"]
    for k, (label, curve) in enumerate(curves.items()):
        pts = " ".join(f"{_f(x_of(i))},{_f(y_of(float(v)))}" for i, v in enumerate(curve))
        out.append(f'<polyline stroke="{palette[k % len(palette)]}" stroke-width="{STYLE["stroke"]}" '
                   f'points="{pts}"><title>{escape(label)}</title></polyline>')
    out.append("</g>")
    out.append(f'<g id="legend" font-family="sans-serif" font-size="{fs}">')
    for k, label in enumerate(curves):
        y = margin + 12 + 12 * k
        x = margin + pw - 120
        out.append(f'<line x1="{x}" y1="{y}" x2="{x + 16}" y2="{y}" '
                   f'stroke="{palette[k % len(palette)]}" stroke-width="{STYLE["stroke"]}"/>')
        out.append(f'<text x="{x + 20}" y="{y + fs / 3:.2f}">{escape(label)}</text>')
    out.append("</g>")
    out.append(f'<g id="axes" font-family="sans-serif" font-size="{fs}" fill="#000000">')
    for v in (0.0, 0.5, 1.0):
        out.append(f'<text x="{margin - 4}" y="{_f(y_of(v) + fs / 3)}" text-anchor="end">{v:.1f}</text>')
    for i in sorted({0, n_layers - 1} | set(topo.indices_of("detection") if topo else ())):
        out.append(f'<text x="{_f(x_of(i))}" y="{margin + ph + fs + 4}" text-anchor="middle">{i}</text>')
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def render_curve(curves: Mapping[str, Sequence[float]], topo: NetworkTopology | None, path) -> None:
    """One polyline per labelled curve; dashed guides at detection layers."""
    _write(path, curve_svg(curves, topo))


# --------------------------------------------------------------------------
# CSV


def g9(x: float) -> str:
    return format(float(x), ".9g")


def matrix_csv(m: SimilarityMatrix, row_labels: Sequence[int] | None = None,
               col_labels: Sequence[int] | None = None) -> str:
    rows, cols = m.shape
    row_labels = list(row_labels) if row_labels is not None else list(range(rows))
    col_labels = list(col_labels) if col_labels is not None else list(range(cols))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["layer"] + col_labels)
    for i in range(rows):
        w.writerow([row_labels[i]] + [g9(v) for v in m.values[i]])
    return buf.getvalue()


def read_matrix_csv(path) -> tuple[np.ndarray, list[int], list[int]]:
    try:
        with open(path, newline="") as fh:
            table = list(csv.reader(fh))
        cols = [int(c) for c in table[0][1:]]
        rows = [int(r[0]) for r in table[1:]]
        values = np.array([[float(v) for v in r[1:]] for r in table[1:]])
    except (OSError, ValueError, IndexError) as exc:
        raise InputError(f"cannot read matrix CSV {path}: {exc}") from None
    return values, rows, cols


def curve_csv(curves: Mapping[str, Sequence[float]], layer_indices: Sequence[int],
              topo: NetworkTopology | None = None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["layer_index", "kind", "region", *curves])
    for pos, idx in enumerate(layer_indices):
        layer = topo[pos] if topo is not None else None
        w.writerow([idx, layer.kind if layer else "", layer.region if layer else "",
                    *(g9(c[pos]) for c in curves.values())])
    return buf.getvalue()


def read_curve_csv(path) -> tuple[dict[str, list[float]], list[int]]:
    try:
        with open(path, newline="") as fh:
            table = list(csv.DictReader(fh))
        if not table:
            raise ValueError("empty curve file")
        names = [k for k in table[0] if k not in ("layer_index", "kind", "region")]
        curves = {k: [float(r[k]) for r in table] for k in names}
        return curves, [int(r["layer_index"]) for r in table]
    except (OSError, ValueError, KeyError) as exc:
        raise InputError(f"cannot read curve CSV {path}: {exc}") from None
