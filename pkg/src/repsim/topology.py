"""Layer maps used to annotate and aggregate per-layer similarity.

A topology is plain data and can be loaded from JSON::

    {"name": "yolov3",
     "layers": [{"index": 0, "kind": "convolution", "region": "backbone",
                 "links": [], "downscales": false, "kernel": "3x3"}, ...]}

YOLOv3 (Darknet-53 backbone plus three-scale head, 107 layers) is built in.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .errors import InputError, LengthMismatch, TopologyError

KINDS = ("convolution", "residual", "route", "upsample", "detection")
REGIONS = ("backbone", "head")
KERNELS = ("1x1", "3x3")


@dataclass(frozen=True)
class LayerDescriptor:
    index: int
    kind: str
    region: str
    kernel: str | None = None
    downscales: bool = False
    links: tuple[int, ...] = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise TopologyError(f"layer {self.index}: unknown kind {self.kind!r}")
        if self.region not in REGIONS:
            raise TopologyError(f"layer {self.index}: unknown region {self.region!r}")
        if self.kernel is not None and self.kernel not in KERNELS:
            raise TopologyError(f"layer {self.index}: unknown kernel {self.kernel!r}")
        object.__setattr__(self, "links", tuple(int(i) for i in self.links))
        n_links = len(self.links)
        if self.kind == "residual" and n_links != 2:
            raise TopologyError(f"residual layer {self.index} needs 2 links, has {n_links}")
        if self.kind == "route" and n_links not in (1, 2):
            raise TopologyError(f"route layer {self.index} needs 1 or 2 links, has {n_links}")
        if self.kind not in ("residual", "route") and n_links:
            raise TopologyError(f"{self.kind} layer {self.index} cannot have links")
        if any(not 0 <= i < self.index for i in self.links):
            raise TopologyError(f"layer {self.index}: links {self.links} must point backwards")

    def to_json(self) -> dict:
        doc = {"index": self.index, "kind": self.kind, "region": self.region,
               "links": list(self.links), "downscales": self.downscales}
        if self.kernel is not None:
            doc["kernel"] = self.kernel
        return doc


@dataclass(frozen=True)
class NetworkTopology:
    name: str
    layers: tuple[LayerDescriptor, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        for pos, layer in enumerate(self.layers):
            if layer.index != pos:
                raise TopologyError(f"layer indices must be 0..{len(self.layers) - 1} without gaps")

    def __len__(self):
        return len(self.layers)

    def __getitem__(self, index: int) -> LayerDescriptor:
        return self.layers[index]

    def indices_of(self, kind: str) -> list[int]:
        return [layer.index for layer in self.layers if layer.kind == kind]

    def region_indices(self, region: str) -> list[int]:
        if region == "all":
            return list(range(len(self.layers)))
        if region not in REGIONS:
            raise InputError(f"unknown region {region!r}; use all, backbone or head")
        return [layer.index for layer in self.layers if layer.region == region]

    def to_json(self) -> dict:
        return {"name": self.name, "layers": [layer.to_json() for layer in self.layers]}

    @classmethod
    def from_json(cls, doc: dict) -> "NetworkTopology":
        try:
            layers = [
                LayerDescriptor(
                    index=int(d["index"]), kind=d["kind"], region=d["region"],
                    kernel=d.get("kernel"), downscales=bool(d.get("downscales", False)),
                    links=tuple(d.get("links", ())),
                )
                for d in doc["layers"]
            ]
            return cls(str(doc["name"]), tuple(layers))
        except (KeyError, TypeError, ValueError) as exc:
            raise TopologyError(f"malformed topology: {exc}") from None


def load_topology(path) -> NetworkTopology:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise InputError(f"no such topology file: {path}") from None
    except json.JSONDecodeError as exc:
        raise TopologyError(f"{path}: invalid JSON ({exc})") from None
    return NetworkTopology.from_json(doc)


def save_topology(topo: NetworkTopology, path) -> None:
    Path(path).write_text(json.dumps(topo.to_json(), indent=2) + "\n")


def generic_topology(n_layers: int, name: str = "generic") -> NetworkTopology:
    """Featureless stand-in: every layer a backbone convolution."""
    return NetworkTopology(name, tuple(LayerDescriptor(i, "convolution", "backbone")
                                       for i in range(n_layers)))


# --------------------------------------------------------------------------
# YOLOv3
#
# Darknet-53: stem conv, then stages of residual blocks (conv1x1, conv3x3,
# shortcut) each preceded by a stride-2 3x3 conv.  Head: three detection
# branches joined by route/upsample layers.  Index lists were checked against
# darknet's cfg/yolov3.cfg (see tests/test_topology.py).

_STAGE_BLOCKS = (1, 2, 8, 8, 4)
HEAD_START = 75

YOLOV3_RESIDUAL = (4, 8, 11, 15, 18, 21, 24, 27, 30, 33, 36, 40, 43, 46, 49, 52, 55, 58, 61,
                   65, 68, 71, 74)
YOLOV3_ROUTE = {83: (79,), 86: (85, 61), 95: (91,), 98: (97, 36)}
YOLOV3_UPSAMPLE = (85, 97)
YOLOV3_DETECTION = (82, 94, 106)
YOLOV3_DOWNSCALE = (1, 5, 12, 37, 62)


def _yolov3_layers() -> list[LayerDescriptor]:
    layers: list[LayerDescriptor] = []

    def add(kind, kernel=None, downscales=False, links=()):
        idx = len(layers)
        region = "backbone" if idx < HEAD_START else "head"
        layers.append(LayerDescriptor(idx, kind, region, kernel, downscales, tuple(links)))
        return idx

    add("convolution", "3x3")
    for blocks in _STAGE_BLOCKS:
        add("convolution", "3x3", downscales=True)
        for _ in range(blocks):
            add("convolution", "1x1")
            add("convolution", "3x3")
            idx = len(layers)
            add("residual", links=(idx - 1, idx - 3))

    route_from = (61, 36)
    for branch in range(3):
        if branch:
            # route back to the branch's last 1x1 conv before its output convs
            last = len(layers)
            add("route", links=(last - 4,))
            add("convolution", "1x1")
            add("upsample")
            idx = len(layers)
            add("route", links=(idx - 1, route_from[branch - 1]))
        for _ in range(3):
            add("convolution", "1x1")
            add("convolution", "3x3")
        add("convolution", "1x1")
        add("detection")
    return layers


def yolov3_topology() -> NetworkTopology:
    topo = NetworkTopology("yolov3", tuple(_yolov3_layers()))
    assert tuple(topo.indices_of("residual")) == YOLOV3_RESIDUAL
    assert {i: topo[i].links for i in topo.indices_of("route")} == YOLOV3_ROUTE
    assert tuple(topo.indices_of("detection")) == YOLOV3_DETECTION
    return topo


BUILTIN = {"yolov3": yolov3_topology}


def resolve_topology(spec: str | None, n_layers: int | None = None) -> NetworkTopology:
    """Built-in name, ``generic`` (needs ``n_layers``) or a JSON file path."""
    if spec is None or spec == "generic":
        if n_layers is None:
            raise InputError("generic topology needs a layer count")
        return generic_topology(n_layers)
    if spec in BUILTIN:
        return BUILTIN[spec]()
    return load_topology(spec)


# --------------------------------------------------------------------------
# aggregation and annotation


def _check_length(values: Sequence, topo: NetworkTopology) -> None:
    if len(values) != len(topo):
        raise LengthMismatch(f"{len(values)} scores for a {len(topo)}-layer topology")


def region_mean(curve: Sequence[float], topo: NetworkTopology, region: str = "all") -> float:
    """Unweighted mean of the scores whose layer falls in ``region``."""
    _check_length(curve, topo)
    idx = topo.region_indices(region)
    if not idx:
        raise InputError(f"topology {topo.name!r} has no {region} layers")
    return sum(float(curve[i]) for i in idx) / len(idx)


def region_means(curve: Sequence[float], topo: NetworkTopology) -> dict[str, float]:
    out = {"all": region_mean(curve, topo, "all")}
    for region in REGIONS:
        if topo.region_indices(region):
            out[region] = region_mean(curve, topo, region)
    return out


PEAK_TOL = 1e-12


def local_peaks(curve: Sequence[float], tol: float = PEAK_TOL) -> list[int]:
    """Interior indices whose score exceeds both neighbours by more than ``tol``.

    The tolerance keeps rounding noise on flat stretches (e.g. a self-comparison
    diagonal of 1 +- 1 ulp) from registering as peaks.
    """
    return [i for i in range(1, len(curve) - 1)
            if curve[i] - curve[i - 1] > tol and curve[i] - curve[i + 1] > tol]


def block_boundaries(topo: NetworkTopology) -> list[int]:
    """Route and detection layer indices, which split a layer-vs-layer grid."""
    return sorted(topo.indices_of("route") + topo.indices_of("detection"))


def _blocks(topo: NetworkTopology) -> list[tuple[int, int]]:
    """Contiguous [start, end] ranges; each route/detection layer closes a block."""
    blocks, start = [], 0
    for b in block_boundaries(topo):
        blocks.append((start, b))
        start = b + 1
    if start < len(topo):
        blocks.append((start, len(topo) - 1))
    return blocks


def annotate(values, topo: NetworkTopology) -> dict:
    """Tag a per-layer curve (1-D) or a square layer-vs-layer matrix (2-D).

    For a curve: one row per layer with kind/region and a peak flag, plus the
    peak set and how many peaks land on residual layers.  For a matrix: the
    same rows built from its diagonal and a block list split at route and
    detection layers, with the mean similarity inside each diagonal block.
    """
    rows = [list(r) for r in values] if _is_matrix(values) else None
    if rows is not None and any(len(r) != len(rows) for r in rows):
        raise LengthMismatch("matrix annotation needs a square matrix")
    curve = [rows[i][i] for i in range(len(rows))] if rows is not None else [float(v) for v in values]
    _check_length(curve, topo)
    peaks = local_peaks(curve)
    peak_set = set(peaks)
    residual = set(topo.indices_of("residual"))
    report = {
        "topology": topo.name,
        "layers": [
            {"index": layer.index, "kind": layer.kind, "region": layer.region,
             "score": float(curve[layer.index]), "peak": layer.index in peak_set}
            for layer in topo.layers
        ],
        "peaks": peaks,
        "residual_peaks": sorted(peak_set & residual),
        "non_residual_peaks": sorted(peak_set - residual),
    }
    if rows is not None:
        blocks = []
        for start, end in _blocks(topo):
            cells = [float(rows[i][j]) for i in range(start, end + 1) for j in range(start, end + 1)]
            blocks.append({"start": start, "end": end, "mean": sum(cells) / len(cells)})
        report["blocks"] = blocks
    return report


def _is_matrix(values) -> bool:
    try:
        first = values[0]
    except (IndexError, TypeError, KeyError):
        return False
    return hasattr(first, "__len__")


def residual_peak_fraction(curve: Iterable[float], topo: NetworkTopology) -> float:
    """Share of backbone peaks that sit on residual layers."""
    curve = list(curve)
    backbone = set(topo.region_indices("backbone"))
    peaks = [i for i in local_peaks(curve) if i in backbone]
    if not peaks:
        return 0.0
    residual = set(topo.indices_of("residual"))
    return sum(i in residual for i in peaks) / len(peaks)
