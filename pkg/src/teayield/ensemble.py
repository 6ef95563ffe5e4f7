"""Selected, error-weighted ensemble of shallow networks.

The procedure: train a pool of single-hidden-layer networks with random
hidden sizes and random training subsamples for diversity; rank the pool by
running the relief feature ranker on the matrix of learner predictions
(each learner is a "feature", the true target is the target); walk the
ranked order adding learners while cross-validated RMSE of the weighted
combination strictly improves; weight the survivors by a decreasing
logistic in their training error,

    raw_i = 1 / (1 + exp(b * (eps_i - c))),   w_i = raw_i / sum(raw),

so lower-error learners get strictly larger weights; predict by the convex
combination sum(w_i * y_i).  The fitted preprocessing needed to score raw
records travels inside the model.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy.special import expit

from .dataset import FeatureMatrix, derive_avg_temp
from .errors import ConfigError, DataError, FitError
from .evaluation import FoldPlan, make_folds
from .feature_select import ReliefParams, rank_order, rrelieff
from .preprocess import ScalerState, apply_scaler, log_transform
from .regressors import HIDDEN_RANGE, MLPModel, MLPTrainConfig, fit_mlp, predict
from .util import derive_seed


@dataclass(frozen=True)
class EnsembleConfig:
    """Pool and weighting knobs.

    ``weight_c=None`` uses the median of the selected learners' errors;
    ``weight_b=None`` uses ln(9)/IQR of those errors, i.e. roughly a 9:1 raw
    weight ratio across the interquartile error range.  ``literal_weights``
    switches to the increasing-exponential weighting (see compute_weights).
    """

    pool_size: int = 100
    subsample_fraction: float = 0.8
    bootstrap: bool = False
    oof_errors: bool = False
    weight_b: float | None = None
    weight_c: float | None = None
    literal_weights: bool = False
    mlp: MLPTrainConfig = MLPTrainConfig(hidden_size=HIDDEN_RANGE[0])

    def __post_init__(self):
        if self.pool_size < 1:
            raise ConfigError(f"pool_size must be >= 1, got {self.pool_size}")
        if not 0.0 < self.subsample_fraction <= 1.0:
            raise ConfigError("subsample_fraction must be in (0, 1], got "
                              f"{self.subsample_fraction}")


@dataclass(frozen=True)
class BaseLearner:
    model: MLPModel
    hidden_size: int
    subsample_indices: tuple[int, ...]
    train_error: float
    seed: int


@dataclass(frozen=True)
class LearnerRanking:
    order: np.ndarray
    weights: np.ndarray
    params: ReliefParams


@dataclass(frozen=True)
class LearnerSelection:
    selected_positions: tuple[int, ...]
    trace: tuple[tuple[int, float], ...]


@dataclass(frozen=True)
class PreprocessState:
    """Everything needed to map a raw schema row to model inputs and the
    model output back to yield units.  Stages replay in fit order."""

    month_encoding: str
    add_avg_temp: bool
    stage_order: tuple[str, ...]
    selected_features: tuple[str, ...]
    scaler: ScalerState | None
    log_features: tuple[str, ...]
    log_target: bool
    target_center: float
    target_scale: float

    def apply_features(self, m: FeatureMatrix) -> FeatureMatrix:
        if self.add_avg_temp and "avg_temp" not in m.column_names:
            m = derive_avg_temp(m)
        for stage in self.stage_order:
            if stage == "feature_selection":
                missing = [c for c in self.selected_features
                           if c not in m.column_names]
                if missing:
                    raise DataError(f"input data lacks model columns {missing}")
                m = m.subset(self.selected_features)
            elif stage == "feature_scaling" and self.scaler is not None:
                m = apply_scaler(self.scaler, m)
            elif stage == "feature_transformation" and self.log_features:
                m = log_transform(m, self.log_features)
        return m


@dataclass(frozen=True)
class EnsembleModel:
    learners: tuple[BaseLearner, ...]
    weights: np.ndarray
    weight_b: float
    weight_c: float
    literal_weights: bool
    preprocess: PreprocessState

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.shape[0] != len(self.learners) or not self.learners:
            raise DataError("one weight per learner required, at least one learner")
        if abs(float(w.sum()) - 1.0) > 1e-12 or np.any(w <= 0.0):
            raise DataError("weights must be strictly positive and sum to 1")
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)


@dataclass(frozen=True)
class PoolEntry:
    index: int
    seed: int
    hidden_size: int
    train_error: float
    relief_weight: float
    selected: bool


@dataclass(frozen=True)
class PoolReport:
    entries: tuple[PoolEntry, ...]
    trace: tuple[tuple[int, float], ...]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["learner", "seed", "hidden", "train_mse",
                             "relief_weight", "selected"])
            for e in self.entries:
                writer.writerow([e.index, e.seed, e.hidden_size,
                                 repr(float(e.train_error)),
                                 repr(float(e.relief_weight)), int(e.selected)])


def _fit_member(m: FeatureMatrix, rows: np.ndarray, hidden: int,
                fit_seed: int, cfg: EnsembleConfig) -> BaseLearner:
    sub = m.take_rows(rows)
    model = fit_mlp(sub, replace(cfg.mlp, hidden_size=hidden), fit_seed)
    eps = model.train_error
    if cfg.oof_errors:
        unused = np.setdiff1d(np.arange(m.n_samples), rows)
        if unused.size:
            rest = m.take_rows(unused)
            resid = predict(model, rest) - rest.target
            eps = float((resid * resid).mean())
    return BaseLearner(model, hidden, tuple(int(r) for r in rows), eps,
                       int(fit_seed))


def _draw_rows(rng: np.random.Generator, n: int, cfg: EnsembleConfig) -> np.ndarray:
    n_sub = max(1, math.ceil(cfg.subsample_fraction * n))
    return np.sort(rng.choice(n, size=n_sub, replace=cfg.bootstrap))


def train_pool(m: FeatureMatrix, cfg: EnsembleConfig,
               seed: int) -> tuple[BaseLearner, ...]:
    """Train ``pool_size`` diverse learners.

    Learner i draws its hidden size uniformly in [5, 30] and its training
    rows (without replacement by default) from a seed derived from
    (seed, i), so the pool is identical however the fits are scheduled.
    """
    pool = []
    for i in range(cfg.pool_size):
        rng = np.random.default_rng(derive_seed(seed, i, 0))
        hidden = int(rng.integers(HIDDEN_RANGE[0], HIDDEN_RANGE[1] + 1))
        rows = _draw_rows(rng, m.n_samples, cfg)
        try:
            pool.append(_fit_member(m, rows, hidden, derive_seed(seed, i, 1), cfg))
        except FitError as exc:
            raise FitError(f"learner {i}: {exc}") from exc
    return tuple(pool)


def pool_predictions(pool: Sequence[BaseLearner], m: FeatureMatrix) -> np.ndarray:
    """(pool_size, n_samples) matrix of member predictions."""
    return np.vstack([predict(bl.model, m) for bl in pool])


def rank_learners(pool: Sequence[BaseLearner], m: FeatureMatrix,
                  relief: ReliefParams = ReliefParams()) -> LearnerRanking:
    """Rank learners by relief weight of their prediction columns.

    Constant-prediction learners would make the relief range normalization
    degenerate; they get weight -inf and sink to the bottom of the ranking
    (ordered among themselves by pool index) instead of aborting the run.
    """
    if not pool:
        raise DataError("cannot rank an empty pool")
    preds = pool_predictions(pool, m)
    weights = np.full(len(pool), -np.inf)
    good = [i for i in range(len(pool)) if np.ptp(preds[i]) > 0.0]
    if good:
        derived = FeatureMatrix(
            tuple(f"learner_{i:03d}" for i in good), preds[good].T, m.target,
            m.target_name)
        ranked = rrelieff(derived, k=relief.k, iterations=relief.iterations,
                          seed=0, decay_sigma=relief.decay_sigma)
        for pos, i in enumerate(good):
            weights[i] = ranked.weights[pos]
    return LearnerRanking(rank_order(weights), weights, relief)


def resolve_weight_params(errors: Sequence[float],
                          cfg: EnsembleConfig) -> tuple[float, float]:
    eps = np.asarray(errors, dtype=np.float64)
    c = float(np.median(eps)) if cfg.weight_c is None else float(cfg.weight_c)
    if cfg.weight_b is None:
        iqr = float(np.percentile(eps, 75) - np.percentile(eps, 25))
        b = math.log(9.0) / max(iqr, 1e-12)
    else:
        b = float(cfg.weight_b)
    return b, c


def compute_weights(errors, b: float, c: float,
                    literal: bool = False) -> np.ndarray:
    """Normalized learner weights from training errors.

    Default form: raw_i = 1 / (1 + exp(b * (eps_i - c))), a decreasing
    logistic, so a strictly larger error always gets a strictly smaller
    weight.  ``literal=True`` instead uses the increasing exponential
    exp(b * (|eps_i| - c)) (softmax in b*|eps|; kept for comparison).
    """
    eps = np.asarray(errors, dtype=np.float64)
    if eps.ndim != 1 or eps.shape[0] < 1:
        raise DataError("errors must be a non-empty vector")
    if not np.all(np.isfinite(eps)) or np.any(eps < 0.0):
        raise DataError("errors must be finite and >= 0")
    if b <= 0.0:
        raise ConfigError(f"weight steepness b must be > 0, got {b}")
    if literal:
        z = b * (np.abs(eps) - c)
        raw = np.exp(z - z.max())
    else:
        raw = expit(-b * (eps - c))
    total = float(raw.sum())
    if total <= 0.0:
        raise FitError(f"all raw weights underflowed to zero (b={b}, c={c}, "
                       f"errors in [{eps.min():g}, {eps.max():g}])")
    return raw / total


def select_learners(pool: Sequence[BaseLearner], ranking: LearnerRanking,
                    m: FeatureMatrix, cfg: EnsembleConfig, folds: int = 10,
                    seed: int = 0, patience: int = 1) -> LearnerSelection:
    """Grow ranked prefixes while CV RMSE of the combination improves.

    Cross-validation retrains each prefix member per fold (same hidden size,
    subsample redrawn from the fold's training rows, fold-derived seeds) so
    no learner scores rows it saw in training.  Combination weights are
    recomputed per prefix from the fold-trained members' errors.  Stops after
    ``patience`` consecutive non-improving prefix sizes and returns the best
    prefix of the ranked order.
    """
    if patience < 1:
        raise DataError(f"patience must be >= 1, got {patience}")
    if not pool:
        raise DataError("cannot select from an empty pool")
    plan = make_folds(m.n_samples, folds, seed)
    fold_rows = [plan.fold_indices(f) for f in range(plan.k)]
    fold_train = [m.take_rows(tr) for tr, _ in fold_rows]
    fold_eval = [m.take_rows(ev) for _, ev in fold_rows]
    cache: dict[tuple[int, int], tuple[float, np.ndarray]] = {}

    def member(fold: int, pos: int) -> tuple[float, np.ndarray]:
        # Fold copies are seeded by the learner's own seed, not its rank
        # position, so identical pool entries retrain identically and adding
        # a duplicate can never look like an improvement.
        identity = pool[pos].seed
        key = (fold, identity, pool[pos].hidden_size)
        if key not in cache:
            train = fold_train[fold]
            rng = np.random.default_rng(derive_seed(seed, fold, identity, 0))
            rows = _draw_rows(rng, train.n_samples, cfg)
            try:
                bl = _fit_member(train, rows, pool[pos].hidden_size,
                                 derive_seed(seed, fold, identity, 1), cfg)
            except FitError as exc:
                raise FitError(f"fold {fold}, learner {pos}: {exc}") from exc
            cache[key] = (bl.train_error, predict(bl.model, fold_eval[fold]))
        return cache[key]

    order = [int(i) for i in ranking.order]
    trace: list[tuple[int, float]] = []
    best_rmse = np.inf
    best_size = 0
    bad = 0
    for size in range(1, len(order) + 1):
        oof = np.empty(m.n_samples)
        for fold in range(plan.k):
            eps = []
            preds = []
            for pos in order[:size]:
                e, p = member(fold, pos)
                eps.append(e)
                preds.append(p)
            b, c = resolve_weight_params(eps, cfg)
            w = compute_weights(eps, b, c, cfg.literal_weights)
            oof[fold_rows[fold][1]] = w @ np.vstack(preds)
        resid = oof - m.target
        rmse = math.sqrt(float((resid * resid).mean()))
        trace.append((size, rmse))
        if rmse < best_rmse:
            best_rmse = rmse
            best_size = size
            bad = 0
        else:
            bad += 1
            if bad >= patience:
                break
    return LearnerSelection(tuple(order[:best_size]), tuple(trace))


def assemble(pool: Sequence[BaseLearner], selection: LearnerSelection,
             cfg: EnsembleConfig, preprocess: PreprocessState) -> EnsembleModel:
    """Build the final model from the selected pool members."""
    learners = tuple(pool[pos] for pos in selection.selected_positions)
    errors = [bl.train_error for bl in learners]
    b, c = resolve_weight_params(errors, cfg)
    weights = compute_weights(errors, b, c, cfg.literal_weights)
    return EnsembleModel(learners, weights, b, c, cfg.literal_weights, preprocess)


def _invert_target(state: PreprocessState, z: np.ndarray) -> np.ndarray:
    y = z * state.target_scale + state.target_center
    return np.exp(y) if state.log_target else y


def predict_members(e: EnsembleModel, m: FeatureMatrix) -> np.ndarray:
    """Per-learner predictions on raw schema data, in original yield units."""
    feats = e.preprocess.apply_features(m)
    return np.vstack([_invert_target(e.preprocess, predict(bl.model, feats))
                      for bl in e.learners])


def predict_ensemble(e: EnsembleModel, m: FeatureMatrix) -> np.ndarray:
    """Weighted-average prediction in original yield units.

    Members are combined in the (transformed, standardized) training space,
    then mapped back; since the inverse maps are monotone the output always
    stays within the per-learner prediction envelope.
    """
    feats = e.preprocess.apply_features(m)
    stacked = np.vstack([predict(bl.model, feats) for bl in e.learners])
    return _invert_target(e.preprocess, e.weights @ stacked)


def build_pool_report(pool: Sequence[BaseLearner], ranking: LearnerRanking,
                      selection: LearnerSelection) -> PoolReport:
    chosen = set(selection.selected_positions)
    entries = tuple(
        PoolEntry(i, bl.seed, bl.hidden_size, bl.train_error,
                  float(ranking.weights[i]), i in chosen)
        for i, bl in enumerate(pool))
    return PoolReport(entries, selection.trace)
