"""Layer-wise similarity between two activation sets.

Each layer is reduced once to a small n-by-n (or n-by-k) summary: a centered
Gram matrix for CKA, an orthonormal basis for SVCCA/PWCCA.  Curve and matrix
entries are then computed by the same pair function from the same summaries,
so the matrix diagonal is bit-identical to the curve.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .activation_store import ActivationSet, as_matrix
from .errors import InconsistentBatch, InputError, NoSignal
from .render import SimilarityMatrix
from .similarity import (
    _clamp,
    _pwcca_from_bases,
    _svcca_from_bases,
    center_columns,
    cka_from_grams,
    gram_linear,
    svd_basis,
    truncate_basis,
)
from .topology import NetworkTopology

METRIC_ALIASES = {"cka": "linear_cka", "linear_cka": "linear_cka", "svcca": "svcca", "pwcca": "pwcca"}


def max_workers() -> int:
    env = os.environ.get("REPSIM_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise InputError(f"REPSIM_THREADS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


def _map(fn, items):
    items = list(items)
    workers = min(max_workers(), len(items))
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(workers) as pool:
        return list(pool.map(fn, items))


def normalize_metric(metric: str) -> str:
    try:
        return METRIC_ALIASES[metric]
    except KeyError:
        raise InputError(f"unknown metric {metric!r}; use cka, svcca or pwcca") from None


@dataclass
class _Layers:
    indices: list[int]
    summaries: list
    widths: list[int]


def _summarize(s: ActivationSet, metric: str, variance_kept: float) -> _Layers:
    tensors = list(s)

    def one(t):
        x = as_matrix(t)
        try:
            if metric == "linear_cka":
                g = gram_linear(x, center=True)
                cka_from_grams(g, g)  # raises NoSignal on constant layers
                return g
            u, sv = svd_basis(x)
            return truncate_basis(u, sv, variance_kept) if metric == "svcca" else u
        except NoSignal:
            return None

    summaries = _map(one, tensors)
    bad = [t.layer_index for t, v in zip(tensors, summaries) if v is None]
    if bad:
        raise NoSignal(f"{s.model_id!r}: layers with no signal (constant over examples): {bad}", bad)
    return _Layers([t.layer_index for t in tensors], summaries, [t.n_features for t in tensors])


def _pair(metric: str, a, b) -> float:
    if metric == "linear_cka":
        return cka_from_grams(a, b).value
    if metric == "svcca":
        return _clamp(_svcca_from_bases(a, b))
    qx, xc = a
    return _clamp(_pwcca_from_bases(qx, xc, b))


def _row_side(s: ActivationSet, layers: _Layers, pos: int, metric: str):
    """The row-model summary; PWCCA additionally needs the centered activations."""
    if metric != "pwcca":
        return layers.summaries[pos]
    t = s[layers.indices[pos]]
    return layers.summaries[pos], center_columns(as_matrix(t)).values


@dataclass(frozen=True)
class Comparison:
    metric: str
    layer_indices: list[int]
    curve: list[float]
    matrix: SimilarityMatrix


def compare_sets(a: ActivationSet, b: ActivationSet, metric: str = "linear_cka",
                 variance_kept: float = 0.99, topo_a: NetworkTopology | None = None,
                 topo_b: NetworkTopology | None = None, full_matrix: bool = True) -> Comparison:
    """Per-layer curve (layer i vs layer i) and the full layer-vs-layer matrix."""
    metric = normalize_metric(metric)
    if a.n != b.n:
        raise InconsistentBatch(f"{a.model_id!r} has n={a.n}, {b.model_id!r} has n={b.n}")
    la = _summarize(a, metric, variance_kept)
    lb = la if b is a else _summarize(b, metric, variance_kept)

    def row(i):
        left = _row_side(a, la, i, metric)
        cols = range(len(lb.indices)) if full_matrix else [i]
        return [_pair(metric, left, lb.summaries[j]) for j in cols]

    if full_matrix:
        rows = _map(row, range(len(la.indices)))
        values = np.array(rows, dtype=np.float64).reshape(len(la.indices), len(lb.indices))
        if la.indices != lb.indices:
            curve = []
        else:
            curve = [rows[i][i] for i in range(len(rows))]
    else:
        if la.indices != lb.indices:
            raise InputError("per-layer curve needs both sets to have the same layer indices")
        curve = [r[0] for r in _map(row, range(len(la.indices)))]
        values = np.diag(curve)
    matrix = SimilarityMatrix(a.model_id, b.model_id, values, topo_a, topo_b, metric)
    return Comparison(metric, la.indices, curve, matrix)


def layer_curve(a: ActivationSet, b: ActivationSet, metric: str = "linear_cka",
                variance_kept: float = 0.99) -> list[float]:
    """Score of layer i in ``a`` against layer i in ``b``, computed directly."""
    return compare_sets(a, b, metric, variance_kept, full_matrix=False).curve


def layer_matrix(a: ActivationSet, b: ActivationSet, metric: str = "linear_cka",
                 variance_kept: float = 0.99, topo_a=None, topo_b=None) -> SimilarityMatrix:
    return compare_sets(a, b, metric, variance_kept, topo_a, topo_b).matrix
