"""Feature fusion and two-sample t-statistic ranking.

A fused sample is the concatenation of the three backbone feature vectors in
the fixed order (vgg16, googlenet, resnet50).  Features are scored per
column with the unequal-variance (Welch) t-statistic between the two classes
and ranked by descending absolute score.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError

BACKBONE_ORDER = ("vgg16", "googlenet", "resnet50")
FEATURE_LENGTH = 1000

# Guards the Welch denominator when both classes are constant.
WELCH_EPSILON = 1e-12


@dataclass(frozen=True)
class FeatureMatrix:
    """Row-per-sample feature matrix with parallel integer labels (1=covid)."""

    values: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if values.ndim != 2:
            raise InvalidArgumentError("feature matrix must be 2-D")
        if labels.ndim != 1 or labels.size != values.shape[0]:
            raise InvalidArgumentError("labels must parallel the matrix rows")
        if not np.all((labels == 0) | (labels == 1)):
            raise InvalidArgumentError("labels must be 0 or 1")
        if not np.all(np.isfinite(values)):
            raise InvalidArgumentError("feature matrix contains non-finite values")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "labels", labels)

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class RankedSelection:
    """Permutation of feature indices by descending |t|, with all t values."""

    order: np.ndarray
    t_values: np.ndarray

    def __post_init__(self):
        order = np.asarray(self.order, dtype=np.int64)
        t_values = np.asarray(self.t_values, dtype=np.float64)
        if sorted(order.tolist()) != list(range(t_values.size)):
            raise InvalidArgumentError("order is not a permutation of the features")
        object.__setattr__(self, "order", order)
        object.__setattr__(self, "t_values", t_values)


def fuse_features(v1, v2, v3, expected_length: int | None = FEATURE_LENGTH) -> np.ndarray:
    """Concatenate three per-backbone vectors in backbone order.

    ``expected_length=None`` relaxes the per-vector length check (tests use
    short vectors); the inputs must still share one length.
    """
    vectors = [np.asarray(v, dtype=np.float64) for v in (v1, v2, v3)]
    for v in vectors:
        if v.ndim != 1:
            raise InvalidArgumentError("feature vectors must be 1-D")
        if expected_length is not None and v.size != expected_length:
            raise InvalidArgumentError(
                f"feature vector has length {v.size}, expected {expected_length}")
    if len({v.size for v in vectors}) != 1:
        raise InvalidArgumentError("feature vectors must share one length")
    return np.concatenate(vectors)


def t_score(values_class1, values_class2) -> float:
    """Welch statistic ``(m1 - m2) / sqrt(s1^2/n1 + s2^2/n2 + eps)``.

    Sample variances (n-1 denominator); the epsilon keeps the degenerate
    constant-vs-constant case at exactly 0 instead of 0/0.
    """
    a = np.asarray(values_class1, dtype=np.float64)
    b = np.asarray(values_class2, dtype=np.float64)
    if a.ndim != 1 or b.ndim != 1 or a.size < 2 or b.size < 2:
        raise InvalidArgumentError("each class needs at least 2 samples")
    num = a.mean() - b.mean()
    den = math.sqrt(a.var(ddof=1) / a.size + b.var(ddof=1) / b.size + WELCH_EPSILON)
    return float(num / den)


def rank_features(m: FeatureMatrix) -> RankedSelection:
    """Score every column with :func:`t_score` (covid minus nofinding) and
    sort indices by descending |t|, ties broken by ascending index."""
    mask1 = m.labels == 1
    mask2 = m.labels == 0
    n1 = int(mask1.sum())
    n2 = int(mask2.sum())
    if n1 < 2 or n2 < 2:
        raise InvalidArgumentError("ranking needs at least 2 rows per class")
    a = m.values[mask1]
    b = m.values[mask2]
    num = a.mean(axis=0) - b.mean(axis=0)
    den = np.sqrt(a.var(axis=0, ddof=1) / n1 + b.var(axis=0, ddof=1) / n2 + WELCH_EPSILON)
    t = num / den
    order = np.lexsort((np.arange(m.dim), -np.abs(t)))
    return RankedSelection(order=order, t_values=t)


def select_top_k(m: FeatureMatrix, r: RankedSelection, k: int) -> FeatureMatrix:
    """Restrict the matrix to the top-k ranked columns, in ranking order."""
    if r.t_values.size != m.dim:
        raise InvalidArgumentError("selection was computed for a different dim")
    if not 1 <= k <= m.dim:
        raise InvalidArgumentError(f"k={k} out of range [1, {m.dim}]")
    cols = r.order[:k]
    return FeatureMatrix(values=m.values[:, cols], labels=m.labels)


def apply_selection(values: np.ndarray, r: RankedSelection, k: int) -> np.ndarray:
    """Column-select raw rows (e.g. held-out samples) with a stored ranking."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 1:
        values = values[None, :]
    if values.shape[1] != r.t_values.size:
        raise InvalidArgumentError("row dim does not match the stored ranking")
    if not 1 <= k <= values.shape[1]:
        raise InvalidArgumentError(f"k={k} out of range [1, {values.shape[1]}]")
    return values[:, r.order[:k]]
