"""Detection evaluation: label mapping, small-box filtering, IoU and mAP@0.5.

Box files are JSON lines, one box per line::

    {"image_id": "img0", "label": "car", "x": 10, "y": 20, "w": 30, "h": 40, "score": 0.9}

``score`` is present on predictions only.  Coordinates are the top-left corner
plus width/height in pixels.
"""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import InputError, MissingFile, MissingScores, UnknownLabel

COMMON_LABELS = ("person", "cycle", "car", "bus", "truck")
IOU_THRESHOLD = 0.5
DEFAULT_MIN_AREA = 100.0


@dataclass(frozen=True)
class BoundingBox:
    image_id: str
    label: str
    x: float
    y: float
    w: float
    h: float
    score: float | None = None

    def __post_init__(self):
        if not (self.w > 0 and self.h > 0):
            raise InputError(f"box in {self.image_id!r} has non-positive size {self.w}x{self.h}")
        if self.score is not None and not 0.0 <= self.score <= 1.0:
            raise InputError(f"score {self.score} outside [0, 1]")

    @property
    def area(self) -> float:
        return self.w * self.h

    def to_json(self) -> dict:
        doc = {"image_id": self.image_id, "label": self.label,
               "x": self.x, "y": self.y, "w": self.w, "h": self.h}
        if self.score is not None:
            doc["score"] = self.score
        return doc


@dataclass(frozen=True)
class LabelMap:
    name: str
    mapping: Mapping[str, str]

    def __post_init__(self):
        bad = {src: dst for src, dst in self.mapping.items() if dst not in COMMON_LABELS}
        if bad:
            raise InputError(f"label map {self.name!r} targets non-common labels: {bad}")

    def __getitem__(self, label: str) -> str:
        try:
            return self.mapping[label]
        except KeyError:
            raise UnknownLabel(label) from None

    def __contains__(self, label: str) -> bool:
        return label in self.mapping

    def with_identity(self) -> "LabelMap":
        """Same map, additionally sending every common label to itself."""
        return LabelMap(self.name, {**{c: c for c in COMMON_LABELS}, **dict(self.mapping)})


BDD_MAP = LabelMap("bdd", {
    "person": "person", "rider": "person",
    "bike": "cycle", "motor": "cycle",
    "car": "car",
    "bus": "bus",
    "truck": "truck",
})

GTAV_MAP = LabelMap("gtav", {
    "person": "person",
    "bicycle": "cycle", "motorcycle": "cycle",
    "car": "car", "van": "car",
    "bus": "bus",
    "truck": "truck", "trailer": "truck",
})

BUILTIN_MAPS = {"bdd": BDD_MAP, "gtav": GTAV_MAP}


def resolve_label_map(spec: str | None) -> LabelMap | None:
    """``bdd``/``gtav``, a JSON file of source->common pairs, or None for no mapping."""
    if spec is None or spec == "none":
        return None
    if spec in BUILTIN_MAPS:
        return BUILTIN_MAPS[spec]
    path = Path(spec)
    if not path.is_file():
        raise MissingFile(f"no such label map: {spec}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise InputError(f"{path}: label map must be a JSON object")
    return LabelMap(path.stem, {str(k): str(v) for k, v in doc.items()})


def map_labels(boxes: Iterable[BoundingBox], m: LabelMap) -> list[BoundingBox]:
    return [replace(b, label=m[b.label]) for b in boxes]


def filter_small(boxes: Iterable[BoundingBox], min_area: float = DEFAULT_MIN_AREA) -> list[BoundingBox]:
    """Drop boxes with w*h strictly below ``min_area`` square pixels."""
    if min_area < 0:
        raise InputError("min_area must be non-negative")
    return [b for b in boxes if b.area >= min_area]


def iou(a: BoundingBox, b: BoundingBox) -> float:
    iw = min(a.x + a.w, b.x + b.w) - max(a.x, b.x)
    ih = min(a.y + a.h, b.y + b.h) - max(a.y, b.y)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


def average_precision(recall: Sequence[float], precision: Sequence[float]) -> float:
    """Area under the all-points interpolated precision/recall curve.

    Precision is replaced by its running maximum from the right, then summed
    over every recall step.
    """
    mrec = [0.0, *recall, 1.0]
    mpre = [0.0, *precision, 0.0]
    for i in range(len(mpre) - 2, -1, -1):
        mpre[i] = max(mpre[i], mpre[i + 1])
    return sum((mrec[i + 1] - mrec[i]) * mpre[i + 1]
               for i in range(len(mrec) - 1) if mrec[i + 1] != mrec[i])


def match_predictions(gt: Sequence[BoundingBox], preds: Sequence[BoundingBox],
                      threshold: float = IOU_THRESHOLD) -> list[bool]:
    """Greedy one-to-one matching for a single class.

    Predictions are visited by descending score (ties keep input order); each
    takes the still-unmatched ground-truth box of the same image with the
    highest IoU (ties: lowest ground-truth index) if that IoU >= threshold.
    Returns one TP flag per prediction in visiting order.
    """
    by_image: dict[str, list[int]] = defaultdict(list)
    for gi, g in enumerate(gt):
        by_image[g.image_id].append(gi)
    taken = [False] * len(gt)
    flags = []
    for p in sorted(preds, key=lambda b: -b.score):
        best, best_iou = -1, threshold
        for gi in by_image.get(p.image_id, ()):
            if taken[gi]:
                continue
            o = iou(p, gt[gi])
            if o > best_iou or (o == best_iou and best < 0):
                best, best_iou = gi, o
        if best >= 0:
            taken[best] = True
        flags.append(best >= 0)
    return flags


def class_ap(gt: Sequence[BoundingBox], preds: Sequence[BoundingBox],
             threshold: float = IOU_THRESHOLD) -> float:
    flags = match_predictions(gt, preds, threshold)
    tp = fp = 0
    recall, precision = [], []
    for hit in flags:
        tp += hit
        fp += not hit
        recall.append(tp / len(gt))
        precision.append(tp / (tp + fp))
    return average_precision(recall, precision)


@dataclass(frozen=True)
class DetectionReport:
    per_class: dict[str, float | None]
    mAP: float | None
    n_gt: dict[str, int]
    n_pred: dict[str, int]
    notes: tuple[str, ...] = ()

    def to_json(self) -> dict:
        return {"mAP": self.mAP, "iou_threshold": IOU_THRESHOLD, "per_class": self.per_class,
                "n_gt": self.n_gt, "n_pred": self.n_pred, "notes": list(self.notes)}


def map_at_50(gt: Sequence[BoundingBox], preds: Sequence[BoundingBox],
              classes: Sequence[str] = COMMON_LABELS) -> DetectionReport:
    """Per-class AP at IoU 0.5 and their unweighted mean.

    Classes with no ground truth have undefined AP (None) and are left out of
    the mean, with a note.
    """
    missing = [p for p in preds if p.score is None]
    if missing:
        raise MissingScores(f"{len(missing)} prediction(s) without a score, e.g. in {missing[0].image_id!r}")
    per_class, n_gt, n_pred, notes = {}, {}, {}, []
    for c in classes:
        g = [b for b in gt if b.label == c]
        p = [b for b in preds if b.label == c]
        n_gt[c], n_pred[c] = len(g), len(p)
        if not g:
            per_class[c] = None
            notes.append(f"class {c!r} has no ground truth; excluded from mAP")
            continue
        per_class[c] = class_ap(g, p)
    stray = sorted({b.label for b in list(gt) + list(preds)} - set(classes))
    if stray:
        notes.append(f"ignored labels outside the class list: {stray}")
    defined = [v for v in per_class.values() if v is not None]
    mAP = sum(defined) / len(defined) if defined else None
    return DetectionReport(per_class, mAP, n_gt, n_pred, tuple(notes))


def read_boxes(path) -> list[BoundingBox]:
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"no such box file: {path}")
    boxes = []
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        if not line.strip():
            continue
        try:
            d = json.loads(line)
            score = d.get("score")
            boxes.append(BoundingBox(str(d["image_id"]), str(d["label"]), float(d["x"]), float(d["y"]),
                                     float(d["w"]), float(d["h"]),
                                     None if score is None else float(score)))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise InputError(f"{path}:{lineno}: bad box record ({exc})") from None
    return boxes


def write_boxes(boxes: Iterable[BoundingBox], path) -> None:
    with open(path, "w") as fh:
        for b in boxes:
            fh.write(json.dumps(b.to_json()) + "\n")


def evaluate(gt: Sequence[BoundingBox], preds: Sequence[BoundingBox], label_map: LabelMap | None = None,
             min_area: float = DEFAULT_MIN_AREA) -> DetectionReport:
    """Map labels, drop small ground-truth boxes, then compute mAP@0.5.

    The area filter applies to ground truth only; it is a dataset cleaning
    step, not a prediction threshold.
    """
    if label_map is not None:
        gt = map_labels(gt, label_map)
        # detector output is usually already in the common alphabet
        preds = map_labels(preds, label_map.with_identity())
    gt = filter_small(gt, min_area)
    return map_at_50(gt, preds)
