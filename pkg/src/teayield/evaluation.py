"""Metrics, data splitting, k-fold cross-validation, and grid search.

The harness is model-agnostic: it takes learner factories (see
``regressors``), so any preprocessing a factory performs is refit on every
training fold and never sees the scored rows.  The staged pipeline report
lives in ``pipeline.stage_report``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .dataset import FeatureMatrix
from .errors import DataError, TeaYieldError
from .util import as_float_array, derive_seed


@dataclass(frozen=True)
class MetricsReport:
    """mae/mse/rmse plus R^2 (None when the true values are constant)."""

    mae: float
    mse: float
    rmse: float
    r2: float | None

    def as_dict(self) -> dict:
        return {"mae": self.mae, "mse": self.mse, "rmse": self.rmse,
                "r2": self.r2}


@dataclass(frozen=True)
class FoldPlan:
    k: int
    assignment: np.ndarray
    seed: int

    @property
    def n(self) -> int:
        return self.assignment.shape[0]

    def fold_indices(self, fold: int) -> tuple[np.ndarray, np.ndarray]:
        """(train_rows, eval_rows) for one fold."""
        mask = self.assignment == fold
        return np.nonzero(~mask)[0], np.nonzero(mask)[0]


@dataclass(frozen=True)
class CVResult:
    fold_metrics: tuple[MetricsReport, ...]
    pooled_rmse: float
    mean_rmse: float
    oof_predictions: np.ndarray
    plan: FoldPlan


@dataclass(frozen=True)
class GridPoint:
    params: dict
    rmse: float | None
    error: str | None = None


@dataclass(frozen=True)
class GridSearchResult:
    best_params: dict
    best_rmse: float
    trace: tuple[GridPoint, ...]


def metrics(y_true, y_pred) -> MetricsReport:
    """MAE, MSE, RMSE = sqrt(MSE), and R^2 = 1 - SSE/SST.

    R^2 is reported as None when y_true is constant (SST = 0); the other
    metrics are still returned.
    """
    y_true = as_float_array(y_true, "y_true")
    y_pred = as_float_array(y_pred, "y_pred")
    if y_true.shape[0] != y_pred.shape[0]:
        raise DataError("metrics requires vectors of equal length")
    if y_true.shape[0] < 1:
        raise DataError("metrics requires at least one sample")
    err = y_pred - y_true
    mae = float(np.abs(err).mean())
    mse = float((err * err).mean())
    rmse = math.sqrt(mse)
    sst = float(((y_true - y_true.mean()) ** 2).sum())
    r2 = None if sst == 0.0 else 1.0 - float((err * err).sum()) / sst
    return MetricsReport(mae, mse, rmse, r2)


def make_folds(n: int, k: int, seed: int) -> FoldPlan:
    """Seeded shuffle, then round-robin assignment: fold sizes differ by <= 1."""
    if not 2 <= k <= n:
        raise DataError(f"fold count must satisfy 2 <= k <= {n}, got {k}")
    perm = np.random.default_rng(seed).permutation(n)
    assignment = np.empty(n, dtype=np.int64)
    assignment[perm] = np.arange(n) % k
    return FoldPlan(int(k), assignment, int(seed))


def cross_validate(m: FeatureMatrix, factory, plan: FoldPlan,
                   seed: int = 0) -> CVResult:
    """Fit on out-of-fold rows, score in-fold, pool over the concatenation.

    ``factory(train_matrix, fit_seed)`` must return a prediction closure and
    is called once per fold with a fold-derived seed, so results do not
    depend on evaluation order.
    """
    if plan.n != m.n_samples:
        raise DataError(f"fold plan covers {plan.n} samples, matrix has "
                        f"{m.n_samples}")
    oof = np.empty(m.n_samples)
    reports = []
    for fold in range(plan.k):
        train_rows, eval_rows = plan.fold_indices(fold)
        try:
            predict_fn = factory(m.take_rows(train_rows), derive_seed(seed, fold))
            preds = np.asarray(predict_fn(m.take_rows(eval_rows)), dtype=np.float64)
        except TeaYieldError as exc:
            raise type(exc)(f"fold {fold}: {exc}") from exc
        if preds.shape != (eval_rows.shape[0],):
            raise DataError(f"fold {fold}: factory returned shape {preds.shape}, "
                            f"expected ({eval_rows.shape[0]},)")
        oof[eval_rows] = preds
        reports.append(metrics(m.target[eval_rows], preds))
    pooled = metrics(m.target, oof)
    mean_rmse = float(np.mean([r.rmse for r in reports]))
    oof.flags.writeable = False
    return CVResult(tuple(reports), pooled.rmse, mean_rmse, oof, plan)


def holdout_split(m: FeatureMatrix, test_fraction: float,
                  seed: int) -> tuple[FeatureMatrix, FeatureMatrix]:
    """Seeded shuffle split into (train, test); both sides keep row order."""
    if not 0.0 < test_fraction < 1.0:
        raise DataError(f"test_fraction must be in (0, 1), got {test_fraction}")
    n = m.n_samples
    if n < 2:
        raise DataError("need at least 2 samples to split")
    n_test = min(n - 1, max(1, round(test_fraction * n)))
    perm = np.random.default_rng(seed).permutation(n)
    test_rows = np.sort(perm[:n_test])
    train_rows = np.sort(perm[n_test:])
    return m.take_rows(train_rows), m.take_rows(test_rows)


def grid_search(m: FeatureMatrix, family, grid: dict, plan: FoldPlan,
                seed: int = 0) -> GridSearchResult:
    """Exhaustive CV over a parameter lattice.

    ``family(params)`` must return a learner factory.  Failed points are
    recorded and skipped.  Ties break toward the lexicographically smallest
    parameter value tuple (keys compared in sorted order).
    """
    if not grid or any(len(v) == 0 for v in grid.values()):
        raise DataError("grid must have at least one value per parameter")
    keys = sorted(grid)
    trace = []
    best: tuple | None = None
    best_params: dict | None = None
    best_rmse = math.inf
    for combo in itertools.product(*(grid[k] for k in keys)):
        params = dict(zip(keys, combo))
        try:
            rmse = cross_validate(m, family(params), plan, seed).pooled_rmse
        except TeaYieldError as exc:
            trace.append(GridPoint(params, None, str(exc)))
            continue
        trace.append(GridPoint(params, rmse))
        if rmse < best_rmse or (rmse == best_rmse and best is not None
                                and combo < best):
            best, best_params, best_rmse = combo, params, rmse
    if best_params is None:
        raise DataError("every grid point failed to fit")
    return GridSearchResult(best_params, best_rmse, tuple(trace))
