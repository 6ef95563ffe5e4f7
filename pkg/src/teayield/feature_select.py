"""Feature ranking and subset selection.

Ranking uses the regression form of the relief family: for each sampled
instance, the k nearest neighbors (Manhattan distance over range-normalized
features) contribute to three accumulators - probability weight of a
different target (ndc), of a different feature value (nda), and of both
together (ndcda) - with neighbor influence decaying exponentially in rank.
The final weight per feature is

    W = ndcda / ndc - (nda - ndcda) / (m - ndc)

which is positive for features whose variation coincides with target
variation among near neighbors.  Subset selection then walks the ranked
order, cross-validating each prefix and stopping once adding features no
longer strictly reduces pooled RMSE.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import kernels
from .dataset import FeatureMatrix
from .errors import DataError, FitError, TeaYieldError
from .evaluation import cross_validate, make_folds
from .util import derive_seed


@dataclass(frozen=True)
class ReliefParams:
    k: int = 10
    iterations: int | None = None  # None = every sample exactly once
    decay_sigma: float | None = 20.0  # None = uniform neighbor influence


@dataclass(frozen=True)
class RankedFeatures:
    feature_names: tuple[str, ...]
    weights: np.ndarray
    order: np.ndarray
    params: ReliefParams

    def ordered_names(self) -> tuple[str, ...]:
        return tuple(self.feature_names[i] for i in self.order)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["feature", "weight", "rank"])
            for rank, i in enumerate(self.order, start=1):
                writer.writerow([self.feature_names[i],
                                 repr(float(self.weights[i])), rank])


@dataclass(frozen=True)
class SelectionResult:
    selected: tuple[str, ...]
    trace: tuple[tuple[int, float], ...]
    evaluator_name: str

    def trace_to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["subset_size", "cv_rmse"])
            for size, rmse in self.trace:
                writer.writerow([size, repr(float(rmse))])


def neighbor_rank_weights(k: int, decay_sigma: float | None) -> np.ndarray:
    """Influence of the r-th nearest neighbor, normalized to sum to 1."""
    if decay_sigma is None:
        return np.full(k, 1.0 / k)
    if decay_sigma <= 0:
        raise DataError(f"decay_sigma must be > 0 or None, got {decay_sigma}")
    raw = np.exp(-(np.arange(1, k + 1) / decay_sigma) ** 2)
    return raw / raw.sum()


def relief_weights_from_counts(ndc: float, nda: np.ndarray, ndcda: np.ndarray,
                               m_used: int) -> np.ndarray:
    hit_term = ndcda / ndc if ndc > 0.0 else np.zeros_like(ndcda)
    rest = m_used - ndc
    miss_term = (nda - ndcda) / rest if rest > 0.0 else np.zeros_like(nda)
    return hit_term - miss_term


def rank_order(weights: np.ndarray) -> np.ndarray:
    """Descending by weight; exact ties keep the lower column index first."""
    f = weights.shape[0]
    return np.lexsort((np.arange(f), -weights))


def rrelieff(m: FeatureMatrix, k: int = 10, iterations: int | None = None,
             seed: int = 0, decay_sigma: float | None = 20.0) -> RankedFeatures:
    """Rank features by the regression relief weight.

    Features and target are internally normalized by their observed range, so
    the ranking is invariant under positive affine rescaling of any column.
    ``iterations=None`` visits every sample exactly once (deterministic);
    smaller values sample that many instances without replacement.
    """
    n, f = m.values.shape
    if k < 1:
        raise DataError(f"neighbor count k must be >= 1, got {k}")
    if k >= n:
        raise DataError(f"need k < n samples; got k={k} with n={n}")
    ranges = np.ptp(m.values, axis=0)
    zero = np.nonzero(ranges == 0.0)[0]
    if zero.size:
        raise FitError(f"column {m.column_names[zero[0]]!r} has zero range; "
                       "relief diff is undefined")
    y_range = np.ptp(m.target)
    if y_range == 0.0:
        raise FitError("target has zero range; relief diff is undefined")

    xn = np.ascontiguousarray((m.values - m.values.min(axis=0)) / ranges)
    yn = np.ascontiguousarray((m.target - m.target.min()) / y_range)
    if iterations is None or iterations == n:
        sample_idx = np.arange(n, dtype=np.int64)
    elif 1 <= iterations < n:
        sample_idx = np.sort(np.random.default_rng(seed).choice(
            n, size=iterations, replace=False)).astype(np.int64)
    else:
        raise DataError(f"iterations must be in 1..{n} or None, got {iterations}")

    rank_w = neighbor_rank_weights(k, decay_sigma)
    ndc, nda, ndcda = kernels.relief_accumulate(xn, yn, sample_idx, k, rank_w)
    weights = relief_weights_from_counts(ndc, nda, ndcda, sample_idx.shape[0])
    params = ReliefParams(k, iterations, decay_sigma)
    return RankedFeatures(m.column_names, weights, rank_order(weights), params)


def _dedupe_exact(m: FeatureMatrix, names: list[str]) -> list[str]:
    # Exact duplicate columns add no information to a prefix: evaluating the
    # set with duplicates dropped keeps the score identical to the smaller
    # prefix, so redundant copies can never register as an improvement.
    kept: list[str] = []
    for name in names:
        col = m.column(name)
        if not any(np.array_equal(col, m.column(prev)) for prev in kept):
            kept.append(name)
    return kept


def sequential_forward_select(m: FeatureMatrix, ranked: RankedFeatures,
                              evaluator, folds: int = 10, seed: int = 0,
                              patience: int = 1,
                              evaluator_name: str = "evaluator") -> SelectionResult:
    """Grow prefixes of the ranked order while CV RMSE strictly improves.

    ``evaluator`` is a learner factory (see ``regressors``); every prefix is
    scored with the same fold plan and a prefix-derived fit seed, so a trace
    entry can be reproduced by rerunning ``cross_validate`` on that prefix.
    Stops after ``patience`` consecutive non-improving prefix sizes and
    returns the best prefix seen.
    """
    if patience < 1:
        raise DataError(f"patience must be >= 1, got {patience}")
    order_names = list(ranked.ordered_names())
    if not order_names:
        raise DataError("ranked feature list is empty")
    plan = make_folds(m.n_samples, folds, seed)
    trace: list[tuple[int, float]] = []
    best_rmse = np.inf
    best_size = 0
    bad = 0
    for size in range(1, len(order_names) + 1):
        prefix = order_names[:size]
        sub = m.subset(_dedupe_exact(m, prefix))
        try:
            rmse = cross_validate(sub, evaluator, plan,
                                  derive_seed(seed, size)).pooled_rmse
        except TeaYieldError as exc:
            raise type(exc)(f"prefix of size {size} ({prefix}): {exc}") from exc
        trace.append((size, rmse))
        if rmse < best_rmse:
            best_rmse = rmse
            best_size = size
            bad = 0
        else:
            bad += 1
            if bad >= patience:
                break
    return SelectionResult(tuple(order_names[:best_size]), tuple(trace),
                           evaluator_name)
