"""Summary statistics of layer outputs (mean, median, std, min, max)."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .activation_store import ActivationSet, ActivationTensor
from .errors import EmptySet

STAT_NAMES = ("mean", "median", "std", "min", "max")


@dataclass(frozen=True)
class LayerStats:
    layer_index: int | None
    mean: float
    median: float
    std: float
    min: float
    max: float

    def row(self) -> tuple[float, ...]:
        return tuple(getattr(self, name) for name in STAT_NAMES)


@dataclass(frozen=True)
class ModelStats:
    model_id: str
    per_layer: tuple[LayerStats, ...]
    averaged: LayerStats
    pooled: bool = False


def _stats(values: np.ndarray, layer_index) -> LayerStats:
    v = np.asarray(values, dtype=np.float64).ravel()
    # population std; median of an even count averages the two central values
    return LayerStats(layer_index, float(v.mean()), float(np.median(v)), float(v.std()),
                      float(v.min()), float(v.max()))


def layer_stats(t: ActivationTensor) -> LayerStats:
    return _stats(t.values, t.layer_index)


def model_stats(s: ActivationSet, pooled: bool = False) -> ModelStats:
    """Per-layer statistics plus a model-level summary.

    By default every statistic is averaged over layers with equal weight
    (so ``averaged.median`` is a mean of medians).  ``pooled=True`` instead
    computes the summary over all activations of all layers at once.
    """
    if s is None or len(s) == 0:
        raise EmptySet("no layers to summarize")
    per_layer = tuple(layer_stats(t) for t in s)
    if pooled:
        averaged = _stats(np.concatenate([np.asarray(t.values, np.float64).ravel() for t in s]), None)
    else:
        table = np.array([ls.row() for ls in per_layer])
        averaged = LayerStats(None, *(float(x) for x in table.mean(axis=0)))
    return ModelStats(s.model_id, per_layer, averaged, pooled)


def _g9(x: float) -> str:
    return format(x, ".9g")


def stats_csv(models: list[ModelStats] | ModelStats) -> str:
    """CSV text: model_id, layer_index (or ALL), mean, median, std, min, max."""
    if isinstance(models, ModelStats):
        models = [models]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("model_id", "layer_index") + STAT_NAMES)
    for m in models:
        for ls in m.per_layer:
            w.writerow((m.model_id, ls.layer_index) + tuple(_g9(x) for x in ls.row()))
        w.writerow((m.model_id, "ALL") + tuple(_g9(x) for x in m.averaged.row()))
    return buf.getvalue()


__all__ = ["LayerStats", "ModelStats", "layer_stats", "model_stats", "stats_csv", "STAT_NAMES"]
