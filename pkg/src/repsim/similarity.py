"""Representational similarity between two sets of activations of the same examples.

Every function takes matrices with one row per example and one column per
feature (``FeatureMatrix`` or any 2-D array).  Rows of X and Y must describe
the same examples in the same order; column counts may differ.

Linear CKA is available through two numerically independent routes:

* the feature path, ``|Yc^T Xc|_F^2 / (|Xc^T Xc|_F |Yc^T Yc|_F)``, evaluated in
  column blocks so no p-by-p product is ever materialized;
* the Gram path, ``tr(Kc Lc) / sqrt(tr(Kc Kc) tr(Lc Lc))`` on centered n-by-n
  Gram matrices, which never needs more than O(n^2 + n*block) memory.

``linear_cka`` picks the Gram path when either width exceeds n.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .activation_store import FeatureMatrix
from .errors import (
    ComputationError,
    DegenerateInput,
    NoSignal,
    OrderMismatch,
    RowCountMismatch,
    ShapeMismatch,
    TooFewRows,
)

METRICS = ("linear_cka", "svcca", "pwcca")
GRAM_BLOCK = 4096
FEATURE_BLOCK = 2048
# singular values below this fraction of the largest are treated as zero
RANK_RTOL = 1e-10
# |Xc|_F below this fraction of |X|_F means the columns were constant
SIGNAL_RTOL = 1e-10
CLAMP_SLACK = 1e-9


@dataclass(frozen=True)
class SimilarityScore:
    value: float
    metric: str
    n_examples: int
    p_x: int
    p_y: int

    def __float__(self):
        return float(self.value)


@dataclass(frozen=True)
class GramMatrix:
    """n-by-n inner products between examples.

    ``raw_sq_norm`` is |X|_F^2 of the uncentered input; it only serves to
    tell "constant layer" apart from "small activations".
    """

    values: np.ndarray
    double_centered: bool = False
    raw_sq_norm: float | None = None

    def __post_init__(self):
        v = self.values
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ShapeMismatch(f"Gram matrix must be square, got {v.shape}")

    @property
    def n(self) -> int:
        return self.values.shape[0]


def _raw(X) -> np.ndarray:
    a = X.values if isinstance(X, FeatureMatrix) else np.asarray(X)
    if a.ndim != 2:
        raise ShapeMismatch(f"expected a 2-D matrix, got shape {a.shape}")
    return a


def _clamp(value: float) -> float:
    if not (-CLAMP_SLACK <= value <= 1.0 + CLAMP_SLACK):
        raise ComputationError(f"similarity {value!r} is outside [0, 1] beyond rounding slack")
    return min(max(value, 0.0), 1.0)


def _check_pair(x: np.ndarray, y: np.ndarray) -> int:
    if x.shape[0] != y.shape[0]:
        raise RowCountMismatch(f"X has {x.shape[0]} examples, Y has {y.shape[0]}")
    if x.shape[0] < 2:
        raise TooFewRows("need at least two examples")
    return x.shape[0]


def column_means(X, block_size: int = GRAM_BLOCK) -> np.ndarray:
    """Float64 column means, read in column blocks (safe for memory maps)."""
    x = _raw(X)
    out = np.empty(x.shape[1])
    for a in range(0, x.shape[1], block_size):
        out[a:a + block_size] = x[:, a:a + block_size].astype(np.float64).mean(axis=0)
    return out


def _block(x: np.ndarray, means: np.ndarray | None, a: int, size: int) -> np.ndarray:
    b = x[:, a:a + size].astype(np.float64)
    if means is not None:
        b -= means[a:a + size]
    return b


def center_columns(X) -> FeatureMatrix:
    """Subtract each column's mean. Returns a float64 ``FeatureMatrix`` flagged centered."""
    if isinstance(X, FeatureMatrix) and X.centered:
        return X
    x = _raw(X)
    if x.shape[0] < 2:
        raise TooFewRows("centering needs at least two rows")
    x = x.astype(np.float64)
    x -= x.mean(axis=0)
    return FeatureMatrix(x, centered=True)


def _no_signal(centered_sq: float, raw_sq: float) -> bool:
    return centered_sq <= (SIGNAL_RTOL ** 2) * raw_sq or centered_sq == 0.0


# --------------------------------------------------------------------------
# Gram path


def gram_linear(X, block_size: int = GRAM_BLOCK, center: bool = False) -> GramMatrix:
    """K = X X^T accumulated over column blocks.

    With ``center=True`` the columns are centered block by block first, so the
    result is already H K H and large common offsets never enter the sum.
    """
    x = _raw(X)
    if x.size == 0:
        raise ShapeMismatch("empty matrix")
    n, p = x.shape
    means = column_means(x, block_size) if center else None
    K = np.zeros((n, n))
    raw_sq = 0.0
    for a in range(0, p, block_size):
        b = _block(x, None, a, block_size)
        raw_sq += float(np.einsum("ij,ij->", b, b))
        if means is not None:
            b -= means[a:a + block_size]
        K += b @ b.T
    K = (K + K.T) * 0.5
    return GramMatrix(K, double_centered=center, raw_sq_norm=raw_sq)


def center_gram(K) -> np.ndarray:
    """H K H with H = I - 11^T/n."""
    k = K.values if isinstance(K, GramMatrix) else np.asarray(K, dtype=np.float64)
    row = k.mean(axis=0)
    return k - row[None, :] - row[:, None] + row.mean()


def _centered_gram(K: GramMatrix) -> tuple[np.ndarray, float]:
    kc = K.values if K.double_centered else center_gram(K)
    raw = K.raw_sq_norm if K.raw_sq_norm is not None else float(np.trace(K.values))
    return kc, raw


def _cka_centered_grams(kc: np.ndarray, lc: np.ndarray) -> float:
    hsic_xy = float(np.einsum("ij,ij->", kc, lc))
    hsic_xx = float(np.einsum("ij,ij->", kc, kc))
    hsic_yy = float(np.einsum("ij,ij->", lc, lc))
    return hsic_xy / math.sqrt(hsic_xx * hsic_yy)


def cka_from_grams(K: GramMatrix, L: GramMatrix, p_x: int = 0, p_y: int = 0) -> SimilarityScore:
    if not isinstance(K, GramMatrix):
        K = GramMatrix(np.asarray(K, dtype=np.float64))
    if not isinstance(L, GramMatrix):
        L = GramMatrix(np.asarray(L, dtype=np.float64))
    if K.n != L.n:
        raise OrderMismatch(f"Gram matrices have orders {K.n} and {L.n}")
    if K.n < 2:
        raise TooFewRows("need at least two examples")
    kc, k_raw = _centered_gram(K)
    lc, l_raw = _centered_gram(L)
    for name, c, raw in (("X", kc, k_raw), ("Y", lc, l_raw)):
        if _no_signal(float(np.trace(c)), raw):
            raise NoSignal(f"{name} is constant across examples")
    return SimilarityScore(_clamp(_cka_centered_grams(kc, lc)), "linear_cka", K.n, p_x, p_y)


# --------------------------------------------------------------------------
# feature path


def _cross_sq_frobenius(x, mx, y, my, block_size: int, same: bool) -> float:
    """|Y^T X|_F^2 via column-block pairs; halves the work when X is Y."""
    total = 0.0
    px, py = x.shape[1], y.shape[1]
    for a in range(0, px, block_size):
        xa = _block(x, mx, a, block_size)
        start = a if same else 0
        for b in range(start, py, block_size):
            yb = xa if (same and b == a) else _block(y, my, b, block_size)
            s = float(np.square(yb.T @ xa).sum())
            total += s if (not same or b == a) else 2.0 * s
    return total


def _feature_cka(x, y, centered: bool, block_size: int) -> float:
    mx = column_means(x) if centered else None
    my = column_means(y) if centered else None
    xx = _cross_sq_frobenius(x, mx, x, mx, block_size, same=True)
    yy = _cross_sq_frobenius(y, my, y, my, block_size, same=True)
    if xx == 0.0 or yy == 0.0:
        raise NoSignal("input is constant across examples")
    xy = _cross_sq_frobenius(x, mx, y, my, block_size, same=False)
    return xy / (math.sqrt(xx) * math.sqrt(yy))


def _sq_norm(x, means) -> tuple[float, float]:
    """(|X - means|_F^2, |X|_F^2) in column blocks."""
    centered = raw = 0.0
    for a in range(0, x.shape[1], GRAM_BLOCK):
        b = _block(x, None, a, GRAM_BLOCK)
        raw += float(np.einsum("ij,ij->", b, b))
        b -= means[a:a + GRAM_BLOCK]
        centered += float(np.einsum("ij,ij->", b, b))
    return centered, raw


def linear_cka(
    X,
    Y,
    method: Literal["auto", "features", "gram"] = "auto",
    centered: bool = True,
    block_size: int | None = None,
) -> SimilarityScore:
    """Linear CKA between two representations of the same n examples.

    ``centered=False`` skips column centering; the result is then not CKA and
    is only meant for debugging.
    """
    x, y = _raw(X), _raw(Y)
    n = _check_pair(x, y)
    px, py = x.shape[1], y.shape[1]
    if method == "auto":
        method = "gram" if max(px, py) > n else "features"
    if method == "gram":
        K = gram_linear(x, block_size or GRAM_BLOCK, center=centered)
        L = gram_linear(y, block_size or GRAM_BLOCK, center=centered)
        if not centered:
            value = _cka_centered_grams(K.values, L.values)
            return SimilarityScore(_clamp(value), "linear_cka", n, px, py)
        return cka_from_grams(K, L, px, py)
    if method != "features":
        raise ValueError(f"unknown method {method!r}")
    if centered:
        for name, m in (("X", x), ("Y", y)):
            if _no_signal(*_sq_norm(m, column_means(m))):
                raise NoSignal(f"{name} is constant across examples")
    value = _feature_cka(x, y, centered, block_size or FEATURE_BLOCK)
    return SimilarityScore(_clamp(value), "linear_cka", n, px, py)


# --------------------------------------------------------------------------
# CCA family


def svd_basis(X) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal basis of the centered column space plus its singular values.

    Directions with singular value below ``RANK_RTOL`` times the largest are
    dropped, which is the regularization that keeps CCA well-posed.
    """
    x = _raw(X)
    xc = center_columns(x).values
    if _no_signal(float(np.einsum("ij,ij->", xc, xc)), float(np.square(x, dtype=np.float64).sum())):
        raise NoSignal("input is constant across examples")
    u, s, _ = np.linalg.svd(xc, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        raise NoSignal("input is constant across examples")
    keep = s > RANK_RTOL * s[0]
    return u[:, keep], s[keep]


def truncate_basis(u: np.ndarray, s: np.ndarray, variance_kept: float) -> np.ndarray:
    """Leading columns of ``u`` that capture ``variance_kept`` of sum(s^2)."""
    if not 0.0 < variance_kept <= 1.0:
        raise ValueError(f"variance_kept must be in (0, 1], got {variance_kept}")
    energy = np.cumsum(s * s)
    k = int(np.searchsorted(energy, variance_kept * energy[-1] * (1 - 1e-12))) + 1
    return u[:, :min(k, u.shape[1])]


def canonical_correlations(qx: np.ndarray, qy: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Canonical correlations between the spans of two orthonormal bases.

    Returns (rho, a) with rho descending; ``qx @ a`` are X's canonical variates.
    """
    a, rho, _ = np.linalg.svd(qx.T @ qy, full_matrices=False)
    return np.clip(rho, 0.0, 1.0), a


def _svcca_from_bases(ux: np.ndarray, uy: np.ndarray) -> float:
    rho, _ = canonical_correlations(ux, uy)
    return float(rho.mean())


def _pwcca_from_bases(qx: np.ndarray, xc: np.ndarray, qy: np.ndarray) -> float:
    rho, a = canonical_correlations(qx, qy)
    variates = qx @ a
    weights = np.abs(variates.T @ xc).sum(axis=1)
    weights = weights / weights.sum()
    return float(weights @ rho)


def svcca(X, Y, variance_kept: float = 0.99) -> SimilarityScore:
    """Mean canonical correlation after SVD truncation of each side."""
    x, y = _raw(X), _raw(Y)
    n = _check_pair(x, y)
    ux = truncate_basis(*svd_basis(x), variance_kept)
    uy = truncate_basis(*svd_basis(y), variance_kept)
    return SimilarityScore(_clamp(_svcca_from_bases(ux, uy)), "svcca", n, x.shape[1], y.shape[1])


def pwcca(X, Y) -> SimilarityScore:
    """Projection-weighted mean canonical correlation.

    Weights come from how strongly X's (the first argument's) centered neurons
    project on each of X's canonical variates, so pwcca(X, Y) != pwcca(Y, X)
    in general.
    """
    x, y = _raw(X), _raw(Y)
    n = _check_pair(x, y)
    qx, _ = svd_basis(x)
    qy, _ = svd_basis(y)
    xc = center_columns(x).values
    return SimilarityScore(_clamp(_pwcca_from_bases(qx, xc, qy)), "pwcca", n, x.shape[1], y.shape[1])


def mean_distance(X, Y) -> float:
    """Mean Euclidean distance between paired rows. Not scale invariant."""
    x, y = _raw(X), _raw(Y)
    if x.shape != y.shape:
        raise ShapeMismatch(f"shapes differ: {x.shape} vs {y.shape}")
    d = x.astype(np.float64) - y.astype(np.float64)
    return float(np.sqrt(np.einsum("ij,ij->i", d, d)).mean())


def similarity(X, Y, metric: str = "linear_cka", **kwargs) -> SimilarityScore:
    if metric in ("linear_cka", "cka"):
        return linear_cka(X, Y, **kwargs)
    if metric == "svcca":
        return svcca(X, Y, **kwargs)
    if metric == "pwcca":
        return pwcca(X, Y)
    raise ValueError(f"unknown metric {metric!r}; expected one of {METRICS}")


__all__ = [
    "METRICS", "SimilarityScore", "GramMatrix", "DegenerateInput", "NoSignal",
    "center_columns", "column_means", "gram_linear", "center_gram", "cka_from_grams",
    "linear_cka", "svd_basis", "truncate_basis", "canonical_correlations",
    "svcca", "pwcca", "mean_distance", "similarity",
]
