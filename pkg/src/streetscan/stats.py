"""Classification metrics, paired bootstrap, McNemar tests, and Moran's I.

NotOccupied is the positive class throughout. The paired bootstrap
resamples parcels with replacement and recomputes every metric for both
strategies on the same resample, which is what makes the difference
distribution (two-stage minus one-stage) a paired comparison. Moran's I
uses row-standardized spatial weights and a permutation null by default.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np
from scipy import sparse
from scipy import stats as sps

from .decision import OccupancyLabel
from .errors import InputError, LengthMismatchError, ZeroVarianceError

__all__ = [
    "BootstrapResult",
    "ConfusionMatrix",
    "MetricComparison",
    "MetricSet",
    "MoranMethod",
    "MoranResult",
    "SpatialWeights",
    "confusion",
    "knn_weights",
    "mcnemar",
    "metrics",
    "morans_i",
    "paired_bootstrap",
]

METRIC_NAMES = ("precision", "recall", "f1", "kappa", "accuracy")


@dataclass(frozen=True)
class ConfusionMatrix:
    """Counts with NotOccupied as the positive class."""

    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self) -> None:
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise InputError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class MetricSet:
    """Scores in [0, 1] (kappa in [-1, 1]); None marks an undefined ratio."""

    precision: Optional[float]
    recall: Optional[float]
    f1: Optional[float]
    kappa: Optional[float]
    accuracy: Optional[float]

    def as_dict(self) -> dict[str, Optional[float]]:
        return {name: getattr(self, name) for name in METRIC_NAMES}


def confusion(
    preds: Sequence[OccupancyLabel], gts: Sequence[OccupancyLabel]
) -> ConfusionMatrix:
    """Tally predictions against ground truth; Uncertain must be pre-filtered."""
    if len(preds) != len(gts):
        raise LengthMismatchError(f"{len(preds)} predictions vs {len(gts)} truths")
    tp = fp = fn = tn = 0
    for p, g in zip(preds, gts):
        if OccupancyLabel.UNCERTAIN in (p, g):
            raise InputError("Uncertain labels must be filtered before scoring")
        if g is OccupancyLabel.NOT_OCCUPIED:
            if p is OccupancyLabel.NOT_OCCUPIED:
                tp += 1
            else:
                fn += 1
        else:
            if p is OccupancyLabel.NOT_OCCUPIED:
                fp += 1
            else:
                tn += 1
    return ConfusionMatrix(tp, fp, fn, tn)


def metrics(cm: ConfusionMatrix) -> MetricSet:
    """Precision, recall, F1, Cohen's kappa, accuracy from one matrix.

    Ratios with a zero denominator are reported as None (absent), never
    coerced to 0.
    """
    if cm.total == 0:
        raise InputError("cannot score an empty confusion matrix")
    n = cm.total
    precision = cm.tp / (cm.tp + cm.fp) if cm.tp + cm.fp > 0 else None
    recall = cm.tp / (cm.tp + cm.fn) if cm.tp + cm.fn > 0 else None
    if precision is None or recall is None or precision + recall == 0:
        f1 = None
    else:
        f1 = 2 * precision * recall / (precision + recall)
    accuracy = (cm.tp + cm.tn) / n
    p_e = ((cm.tp + cm.fp) * (cm.tp + cm.fn) + (cm.fn + cm.tn) * (cm.fp + cm.tn)) / (n * n)
    kappa = (accuracy - p_e) / (1.0 - p_e) if p_e < 1.0 else None
    return MetricSet(precision, recall, f1, kappa, accuracy)


@dataclass(frozen=True)
class BootstrapResult:
    point: float
    ci_low: float
    ci_high: float
    n_resamples: int
    seed: int


@dataclass(frozen=True)
class MetricComparison:
    """One metric's bootstrap summary: each strategy plus their difference."""

    one_stage: BootstrapResult
    two_stage: BootstrapResult
    delta: BootstrapResult
    p_value: float
    dropped_fraction: float


def _labels_to_bool(labels: Sequence[OccupancyLabel]) -> np.ndarray:
    arr = np.empty(len(labels), dtype=bool)
    for i, label in enumerate(labels):
        if label is OccupancyLabel.UNCERTAIN:
            raise InputError("Uncertain labels must be filtered before scoring")
        arr[i] = label is OccupancyLabel.NOT_OCCUPIED
    return arr


def _metric_arrays(tp, fp, fn, tn) -> dict[str, np.ndarray]:
    """Vectorized metric formulas; undefined entries are NaN."""
    tp, fp, fn, tn = (np.asarray(a, dtype=float) for a in (tp, fp, fn, tn))
    n = tp + fp + fn + tn
    with np.errstate(divide="ignore", invalid="ignore"):
        precision = np.where(tp + fp > 0, tp / (tp + fp), np.nan)
        recall = np.where(tp + fn > 0, tp / (tp + fn), np.nan)
        f1 = np.where(
            precision + recall > 0, 2 * precision * recall / (precision + recall), np.nan
        )
        accuracy = (tp + tn) / n
        p_e = ((tp + fp) * (tp + fn) + (fn + tn) * (fp + tn)) / (n * n)
        kappa = np.where(p_e < 1.0, (accuracy - p_e) / (1.0 - p_e), np.nan)
    return {
        "precision": precision,
        "recall": recall,
        "f1": f1,
        "kappa": kappa,
        "accuracy": accuracy,
    }


def paired_bootstrap(
    gts: Sequence[OccupancyLabel],
    preds_one_stage: Sequence[OccupancyLabel],
    preds_two_stage: Sequence[OccupancyLabel],
    n_resamples: int = 10_000,
    seed: int | None = None,
    drop_warn_threshold: float = 0.01,
) -> dict[str, MetricComparison]:
    """Parcel-level paired bootstrap for every metric plus two-minus-one deltas.

    Both strategies are rescored on the same resampled parcels. CIs are
    percentile 95% intervals; the delta p-value is the two-sided
    sign-fraction 2*min(P(d<=0), P(d>=0)) clamped to [0, 1]. Resamples
    where a metric is undefined (a class absent) are dropped for that
    metric, with the drop rate reported and warned about above 1%.
    """
    if seed is None:
        raise InputError("paired_bootstrap requires an explicit seed")
    n = len(gts)
    if n < 10:
        raise InputError(f"paired bootstrap needs >= 10 parcels, got {n}")
    if not (len(preds_one_stage) == len(preds_two_stage) == n):
        raise LengthMismatchError("prediction columns must match ground-truth length")
    gt = _labels_to_bool(gts)
    p1 = _labels_to_bool(preds_one_stage)
    p2 = _labels_to_bool(preds_two_stage)

    # per-parcel confusion-cell indicators: [tp, fp, fn, tn] x both strategies
    cells = np.empty((n, 8), dtype=np.int8)
    for off, pred in ((0, p1), (4, p2)):
        cells[:, off + 0] = pred & gt
        cells[:, off + 1] = pred & ~gt
        cells[:, off + 2] = ~pred & gt
        cells[:, off + 3] = ~pred & ~gt

    full = cells.sum(axis=0, dtype=np.int64)
    point_one = _metric_arrays(*full[:4])
    point_two = _metric_arrays(*full[4:])

    rng = np.random.default_rng(seed)
    counts = np.empty((n_resamples, 8), dtype=np.int64)
    chunk = max(1, min(n_resamples, 4_000_000 // max(n, 1)))
    for start in range(0, n_resamples, chunk):
        stop = min(start + chunk, n_resamples)
        idx = rng.integers(0, n, size=(stop - start, n))
        counts[start:stop] = cells[idx].sum(axis=1, dtype=np.int64)

    m_one = _metric_arrays(*(counts[:, j] for j in range(4)))
    m_two = _metric_arrays(*(counts[:, j] for j in range(4, 8)))

    out: dict[str, MetricComparison] = {}
    for name in METRIC_NAMES:
        a, b = m_one[name], m_two[name]
        d = b - a
        valid_a, valid_b, valid_d = ~np.isnan(a), ~np.isnan(b), ~np.isnan(d)
        dropped = 1.0 - valid_d.mean()
        if dropped > drop_warn_threshold:
            warnings.warn(
                f"{name}: {dropped:.1%} of resamples dropped as degenerate",
                stacklevel=2,
            )
        point_a = float(point_one[name])
        point_b = float(point_two[name])

        def _result(point: float, sims: np.ndarray, valid: np.ndarray) -> BootstrapResult:
            if not valid.any():
                return BootstrapResult(point, float("nan"), float("nan"), n_resamples, seed)
            lo, hi = np.percentile(sims[valid], [2.5, 97.5])
            return BootstrapResult(point, float(lo), float(hi), n_resamples, seed)

        if valid_d.any():
            dv = d[valid_d]
            p = 2.0 * min(float((dv <= 0).mean()), float((dv >= 0).mean()))
            p = min(1.0, p)
        else:
            p = float("nan")
        out[name] = MetricComparison(
            one_stage=_result(point_a, a, valid_a),
            two_stage=_result(point_b, b, valid_b),
            delta=_result(point_b - point_a, d, valid_d),
            p_value=p,
            dropped_fraction=float(dropped),
        )
    return out


def mcnemar(b: int, c: int, exact: bool = False) -> tuple[float, float]:
    """Paired test on discordant counts b (only A wrong) and c (only B wrong).

    Default is the continuity-corrected chi-squared statistic
    (|b-c|-1)^2 / (b+c) with one degree of freedom; equal discordant
    counts (including zero) short-circuit to statistic 0, p 1. With
    ``exact=True`` (sensible when b+c < 25) the statistic is min(b, c)
    and the p-value is the two-sided binomial tail at rate one half.
    """
    if b < 0 or c < 0:
        raise InputError("discordant counts must be non-negative")
    if b == c:
        return 0.0, 1.0
    if exact:
        k, total = min(b, c), b + c
        p = min(1.0, 2.0 * float(sps.binom.cdf(k, total, 0.5)))
        return float(k), p
    stat = (abs(b - c) - 1) ** 2 / (b + c)
    return float(stat), float(sps.chi2.sf(stat, df=1))


class SpatialWeights:
    """Row-standardized neighbor weights (no self-neighbors)."""

    def __init__(self, matrix: sparse.csr_matrix):
        m = sparse.csr_matrix(matrix, dtype=float)
        if m.shape[0] != m.shape[1]:
            raise InputError(f"weights must be square, got {m.shape}")
        if m.diagonal().any():
            raise InputError("self-neighbors are not allowed")
        if (m.data < 0).any():
            raise InputError("weights must be non-negative")
        rows = np.asarray(m.sum(axis=1)).ravel()
        nonempty = rows > 0
        if nonempty.any() and np.abs(rows[nonempty] - 1.0).max() > 1e-12:
            raise InputError("non-empty rows must sum to 1 (row-standardized)")
        self.matrix = m
        self.n = m.shape[0]

    @classmethod
    def from_adjacency(cls, adjacency: np.ndarray) -> "SpatialWeights":
        """Row-standardize a boolean adjacency matrix."""
        a = np.asarray(adjacency, dtype=float)
        np.fill_diagonal(a, 0.0)
        rows = a.sum(axis=1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            w = np.where(rows > 0, a / rows, 0.0)
        return cls(sparse.csr_matrix(w))

    def s_moments(self) -> tuple[float, float, float]:
        """S0, S1, S2 sums used by the analytic randomization variance."""
        w = self.matrix
        s0 = float(w.sum())
        ws = w + w.T
        s1 = 0.5 * float(ws.multiply(ws).sum())
        row = np.asarray(w.sum(axis=1)).ravel()
        col = np.asarray(w.sum(axis=0)).ravel()
        s2 = float(((row + col) ** 2).sum())
        return s0, s1, s2


def knn_weights(points: np.ndarray, k: int = 8) -> SpatialWeights:
    """Symmetric k-nearest-neighbor weights from plane coordinates.

    Neighbor sets are symmetrized by union before row standardization.
    Distance ties (including duplicate points) resolve in index order.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise InputError(f"expected (n, 2) plane coordinates, got {pts.shape}")
    n = len(pts)
    if n <= k:
        raise InputError(f"need more points ({n}) than neighbors ({k})")
    diff = pts[:, None, :] - pts[None, :, :]
    d2 = np.einsum("ijk,ijk->ij", diff, diff)
    adjacency = np.zeros((n, n), dtype=bool)
    for i in range(n):
        order = np.argsort(d2[i], kind="stable")  # stable sort = index-order ties
        neighbors = order[order != i][:k]
        adjacency[i, neighbors] = True
    adjacency |= adjacency.T
    return SpatialWeights.from_adjacency(adjacency)


class MoranMethod(Enum):
    PERMUTATION = "Permutation"
    ANALYTIC_RANDOMIZATION = "AnalyticRandomization"


@dataclass(frozen=True)
class MoranResult:
    i: float
    expected_i: float
    p_value: float
    n: int
    method: MoranMethod


def morans_i(
    values: Sequence[float],
    w: SpatialWeights,
    permutations: int = 999,
    seed: int | None = None,
    method: MoranMethod = MoranMethod.PERMUTATION,
) -> MoranResult:
    """Global Moran's I with a one-sided p-value in the observed direction.

        I = (n / S0) * sum_ij w_ij z_i z_j / sum_i z_i^2

    where z are deviations from the mean. E[I] = -1/(n-1) under the
    randomization null. The default p-value ranks the observed I against
    value permutations with the +1 correction; the analytic variant uses
    the Cliff-Ord randomization variance and a normal approximation.
    Binary fields are analyzed as 0/1 numeric values.
    """
    y = np.asarray(values, dtype=float)
    n = y.size
    if n < 10:
        raise InputError(f"Moran's I needs n >= 10, got {n}")
    if w.n != n:
        raise LengthMismatchError(f"{n} values vs {w.n} weight rows")
    z = y - y.mean()
    z2 = float(z @ z)
    if z2 == 0.0:
        raise ZeroVarianceError("values are constant; Moran's I is undefined")
    mat = w.matrix
    s0, s1, s2 = w.s_moments()
    i_obs = (n / s0) * float(z @ (mat @ z)) / z2
    expected = -1.0 / (n - 1)

    if method is MoranMethod.ANALYTIC_RANDOMIZATION:
        b2 = n * float((z**4).sum()) / z2**2
        num = n * ((n * n - 3 * n + 3) * s1 - n * s2 + 3 * s0 * s0) - b2 * (
            (n * n - n) * s1 - 2 * n * s2 + 6 * s0 * s0
        )
        den = (n - 1) * (n - 2) * (n - 3) * s0 * s0
        var = num / den - expected**2
        zscore = (i_obs - expected) / np.sqrt(var)
        p = float(sps.norm.sf(zscore) if i_obs >= expected else sps.norm.cdf(zscore))
        return MoranResult(i_obs, expected, p, n, method)

    if seed is None:
        raise InputError("permutation test requires an explicit seed")
    if permutations < 1:
        raise InputError("permutations must be >= 1")
    rng = np.random.default_rng(seed)
    perm = np.argsort(rng.random((permutations, n)), axis=1)
    zp = z[perm]
    lag = (mat @ zp.T).T
    sims = (n / s0) * np.einsum("ij,ij->i", zp, lag) / z2
    if i_obs >= expected:
        extreme = int((sims >= i_obs).sum())
    else:
        extreme = int((sims <= i_obs).sum())
    p = (extreme + 1.0) / (permutations + 1.0)
    return MoranResult(i_obs, expected, float(p), n, MoranMethod.PERMUTATION)
