"""End-to-end pipeline: staged preprocessing, ensemble training, and the
stage-by-stage cross-validation report.

The preprocessing chain runs the configured stages in order (the default
order is selection, scaling, outlier removal, transformation).  For the
stage report, each stage's cross-validation refits the chain inside every
training fold by default, so no statistic computed from scored rows leaks
into fitting; ``paper_faithful = true`` instead fits the chain once globally
before folding, reproducing the simpler traditional procedure.  Outlier
removal only ever drops training rows; scored rows are never removed.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass

import numpy as np

from .config import PipelineConfig
from .dataset import FeatureMatrix, derive_avg_temp
from .ensemble import (BaseLearner, EnsembleModel, PoolReport, PreprocessState,
                       assemble, build_pool_report, predict_ensemble,
                       rank_learners, select_learners, train_pool)
from .errors import DataError, FitError
from .evaluation import (FoldPlan, MetricsReport, cross_validate, holdout_split,
                         make_folds, metrics)
from .feature_select import (RankedFeatures, SelectionResult, rrelieff,
                             sequential_forward_select)
from .preprocess import (OutlierReport, ScalerState, apply_scaler,
                         cooks_distance, fit_scaler, independent_columns,
                         log_transform, remove_outliers)
from .regressors import (fit_mlp, make_gpr_factory, make_linear_factory,
                         make_mlp_factory)
from .util import derive_seed

log = logging.getLogger(__name__)

STAGE_MODELS = ("mlr", "gpr", "mlp")

# Seed stream tags for the master seed.
_TAG_SELECT, _TAG_POOL, _TAG_PICK, _TAG_STAGE, _TAG_HOLDOUT, _TAG_SINGLE = range(1, 7)


@dataclass(frozen=True)
class ChainState:
    """Fitted feature-side preprocessing for one stage prefix."""

    stage_order: tuple[str, ...]
    selected: tuple[str, ...] | None
    scaler: ScalerState | None
    log_features: tuple[str, ...]
    log_target: bool


@dataclass(frozen=True)
class ChainArtifacts:
    ranked: RankedFeatures | None = None
    selection: SelectionResult | None = None
    outliers: OutlierReport | None = None


@dataclass(frozen=True)
class StageReport:
    stage_names: tuple[str, ...]
    model_names: tuple[str, ...]
    rmse: np.ndarray  # (n_models, n_stages)
    mlp_replicates: tuple[tuple[float, ...], ...]  # per stage
    mode: str

    def __post_init__(self):
        if not np.all(np.isfinite(self.rmse)):
            raise FitError("stage report contains non-finite cells")

    def cell(self, model: str, stage: str) -> float:
        return float(self.rmse[self.model_names.index(model),
                               self.stage_names.index(stage)])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["model", "stage", "cv_rmse", "replicates", "mode"])
            for i, model in enumerate(self.model_names):
                for j, stage in enumerate(self.stage_names):
                    reps = len(self.mlp_replicates[j]) if model == "mlp" else 1
                    writer.writerow([model, stage, repr(float(self.rmse[i, j])),
                                     reps, self.mode])


def sfs_evaluator(cfg: PipelineConfig):
    """Learner factory used to score feature prefixes."""
    if cfg.sfs_evaluator == "ridge":
        return make_linear_factory(cfg.sfs_ridge_lambda, standardize_features=True)
    if cfg.sfs_evaluator == "ols":
        return make_linear_factory(0.0)
    if cfg.sfs_evaluator == "gpr":
        return make_gpr_factory(cfg.gpr_signal_var, cfg.gpr_length_scale,
                                cfg.gpr_noise_var)
    return make_mlp_factory(cfg.mlp)


def fit_chain(m: FeatureMatrix, cfg: PipelineConfig, seed: int,
              stages: tuple[str, ...] | None = None
              ) -> tuple[FeatureMatrix, ChainState, ChainArtifacts]:
    """Fit the staged preprocessing on training data.

    Returns the transformed training matrix (outlier rows dropped), the
    fitted state to apply elsewhere, and the per-stage artifacts.
    """
    if stages is None:
        stages = cfg.stages
    selected = None
    scaler = None
    log_features: tuple[str, ...] = ()
    log_target = False
    ranked = None
    selection = None
    outliers = None
    for stage in stages:
        if stage == "feature_selection":
            ranked = rrelieff(m, k=cfg.relieff.k,
                              iterations=cfg.relieff.iterations,
                              seed=derive_seed(seed, 1),
                              decay_sigma=cfg.relieff.decay_sigma)
            selection = sequential_forward_select(
                m, ranked, sfs_evaluator(cfg), folds=cfg.cv_folds,
                seed=derive_seed(seed, 2), patience=cfg.sfs_patience,
                evaluator_name=cfg.sfs_evaluator)
            selected = selection.selected
            m = m.subset(selected)
        elif stage == "feature_scaling":
            columns = cfg.scale_columns
            if columns is not None:
                columns = tuple(c for c in columns if c in m.column_names)
                if not columns:
                    continue
            scaler = fit_scaler(m, columns)
            m = apply_scaler(scaler, m)
        elif stage == "outlier_removal":
            outliers = cooks_distance(m.subset(independent_columns(m)),
                                      cfg.outlier_threshold_for(m.n_samples))
            m = remove_outliers(m, outliers)
        elif stage == "feature_transformation":
            log_features = tuple(c for c in cfg.log_features
                                 if c in m.column_names)
            log_target = cfg.log_target
            columns = list(log_features)
            if log_target:
                columns.append(m.target_name)
            if columns:
                m = log_transform(m, columns)
    state = ChainState(tuple(stages), selected, scaler, log_features, log_target)
    return m, state, ChainArtifacts(ranked, selection, outliers)


def apply_chain(state: ChainState, m: FeatureMatrix) -> FeatureMatrix:
    """Apply a fitted chain to new data (features and target; no row drops)."""
    for stage in state.stage_order:
        if stage == "feature_selection" and state.selected is not None:
            m = m.subset(state.selected)
        elif stage == "feature_scaling" and state.scaler is not None:
            m = apply_scaler(state.scaler, m)
        elif stage == "feature_transformation":
            columns = list(state.log_features)
            if state.log_target:
                columns.append(m.target_name)
            if columns:
                m = log_transform(m, columns)
    return m


def prepare_input(m: FeatureMatrix) -> FeatureMatrix:
    """Ingestion-time derivations shared by all commands."""
    if "avg_temp" not in m.column_names:
        m = derive_avg_temp(m)
    return m


def fit_preprocess(m: FeatureMatrix, cfg: PipelineConfig
                   ) -> tuple[FeatureMatrix, PreprocessState, ChainArtifacts]:
    """Fit the full chain and standardize the target for pool training."""
    m = prepare_input(m)
    processed, chain, artifacts = fit_chain(m, cfg, derive_seed(cfg.seed,
                                                                _TAG_SELECT))
    mu = float(processed.target.mean())
    sd = float(processed.target.std(ddof=1)) if processed.n_samples > 1 else 0.0
    if sd == 0.0:
        raise FitError("target is constant after preprocessing; cannot train")
    processed = processed.with_target((processed.target - mu) / sd)
    state = PreprocessState(
        month_encoding=cfg.month_encoding, add_avg_temp=True,
        stage_order=chain.stage_order,
        selected_features=(chain.selected if chain.selected is not None
                           else m.column_names),
        scaler=chain.scaler, log_features=chain.log_features,
        log_target=chain.log_target, target_center=mu, target_scale=sd)
    return processed, state, artifacts


@dataclass(frozen=True)
class TrainingResult:
    model: EnsembleModel
    pool_report: PoolReport
    artifacts: ChainArtifacts


def train_ensemble_pipeline(m: FeatureMatrix, cfg: PipelineConfig) -> TrainingResult:
    """The full procedure: preprocess, pool, rank, select, weight."""
    processed, state, artifacts = fit_preprocess(m, cfg)
    pool = train_pool(processed, cfg.ensemble, derive_seed(cfg.seed, _TAG_POOL))
    ranking = rank_learners(pool, processed, cfg.relieff)
    selection = select_learners(pool, ranking, processed, cfg.ensemble,
                                folds=cfg.cv_folds,
                                seed=derive_seed(cfg.seed, _TAG_PICK),
                                patience=cfg.ensemble_patience)
    model = assemble(pool, selection, cfg.ensemble, state)
    return TrainingResult(model, build_pool_report(pool, ranking, selection),
                          artifacts)


def train_single_mlp(m: FeatureMatrix, cfg: PipelineConfig, seed: int,
                     hidden_size: int | None = None) -> EnsembleModel:
    """A single network wrapped as a one-member ensemble (baseline runs).

    ``hidden_size=None`` draws the width uniformly from the base-learner
    range, i.e. the pool recipe trained on the full data without ensembling.
    """
    from dataclasses import replace as _replace

    from .regressors import HIDDEN_RANGE

    processed, state, _ = fit_preprocess(m, cfg)
    if hidden_size is None:
        rng = np.random.default_rng(derive_seed(seed, 0))
        hidden_size = int(rng.integers(HIDDEN_RANGE[0], HIDDEN_RANGE[1] + 1))
    mlp_cfg = _replace(cfg.mlp, hidden_size=hidden_size)
    model = fit_mlp(processed, mlp_cfg, derive_seed(seed, 1))
    learner = BaseLearner(model, hidden_size,
                          tuple(range(processed.n_samples)),
                          model.train_error, int(seed))
    return EnsembleModel((learner,), np.array([1.0]), 1.0,
                         model.train_error, False, state)


def _stage_factories(cfg: PipelineConfig) -> dict:
    return {
        "mlr": lambda rep_seed: make_linear_factory(0.0, drop_dependent=True),
        "gpr": lambda rep_seed: make_gpr_factory(
            cfg.gpr_signal_var, cfg.gpr_length_scale, cfg.gpr_noise_var),
        "mlp": lambda rep_seed: make_mlp_factory(cfg.mlp),
    }


def _chain_cv_rmse(raw: FeatureMatrix, stages: tuple[str, ...],
                   cfg: PipelineConfig, factory, plan: FoldPlan, fit_seed: int,
                   chain_seed: int, chain_cache: dict) -> float:
    """Pooled CV RMSE with the chain refit inside each training fold.

    Chains per (stage prefix, fold) are cached and seeded independently of
    the model, so the three models share the identical fitted preprocessing.
    Scoring happens in the units of the transformed target, exactly as the
    trained model sees them.
    """
    oof = np.empty(raw.n_samples)
    truth = np.empty(raw.n_samples)
    for fold in range(plan.k):
        train_rows, eval_rows = plan.fold_indices(fold)
        key = (stages, fold)
        if key not in chain_cache:
            train_m, chain, _ = fit_chain(raw.take_rows(train_rows), cfg,
                                          derive_seed(chain_seed, fold), stages)
            chain_cache[key] = (train_m, chain)
        train_m, chain = chain_cache[key]
        eval_m = apply_chain(chain, raw.take_rows(eval_rows))
        predict_fn = factory(train_m, derive_seed(fit_seed, fold))
        oof[eval_rows] = np.asarray(predict_fn(eval_m), dtype=np.float64)
        truth[eval_rows] = eval_m.target
    resid = oof - truth
    return math.sqrt(float((resid * resid).mean()))


def stage_report(raw: FeatureMatrix, cfg: PipelineConfig, seed: int) -> StageReport:
    """CV RMSE of each in-scope model after each cumulative pipeline stage.

    The "raw" column uses no preprocessing; subsequent columns add the
    configured stages one at a time in order.  The network cell is the mean
    of ``mlp_replicates`` independently seeded trainings.  All models in a
    column share one fold plan.
    """
    raw = prepare_input(raw)
    stage_names = ("raw",) + tuple(cfg.stages)
    mode = "paper_faithful" if cfg.paper_faithful else "fold_refit"
    rmse = np.zeros((len(STAGE_MODELS), len(stage_names)))
    replicates: list[tuple[float, ...]] = []
    factories = _stage_factories(cfg)
    chain_cache: dict = {}
    plan = make_folds(raw.n_samples, cfg.cv_folds, derive_seed(seed, _TAG_STAGE))

    for j, stage in enumerate(stage_names):
        stages = tuple(cfg.stages[:j])
        if cfg.paper_faithful:
            stage_m, _, _ = fit_chain(raw, cfg, derive_seed(seed, _TAG_STAGE, j),
                                      stages)
            stage_plan = make_folds(stage_m.n_samples, cfg.cv_folds,
                                    derive_seed(seed, _TAG_STAGE))
        rep_cell: tuple[float, ...] = ()
        for i, model in enumerate(STAGE_MODELS):
            reps = cfg.mlp_replicates if model == "mlp" else 1
            values = []
            for r in range(reps):
                fit_seed = derive_seed(seed, _TAG_STAGE, j, i, r)
                factory = factories[model](fit_seed)
                try:
                    if cfg.paper_faithful:
                        values.append(cross_validate(stage_m, factory,
                                                     stage_plan,
                                                     fit_seed).pooled_rmse)
                    else:
                        values.append(_chain_cv_rmse(
                            raw, stages, cfg, factory, plan, fit_seed,
                            derive_seed(seed, _TAG_STAGE, j), chain_cache))
                except (FitError, DataError) as exc:
                    raise type(exc)(f"stage {stage!r}, model {model!r}: "
                                    f"{exc}") from exc
            rmse[i, j] = float(np.mean(values))
            if model == "mlp":
                rep_cell = tuple(values)
        replicates.append(rep_cell)
    return StageReport(stage_names, STAGE_MODELS, rmse, tuple(replicates), mode)


@dataclass(frozen=True)
class HoldoutEvaluation:
    stage: StageReport
    holdout: MetricsReport
    model: EnsembleModel
    pool_report: PoolReport


def evaluate_pipeline(m: FeatureMatrix, cfg: PipelineConfig) -> HoldoutEvaluation:
    """Hold out a test split, build the stage report and the ensemble on the
    training side only, then score the ensemble on the untouched split."""
    train_m, test_m = holdout_split(m, cfg.holdout_fraction,
                                    derive_seed(cfg.seed, _TAG_HOLDOUT))
    report = stage_report(train_m, cfg, cfg.seed)
    result = train_ensemble_pipeline(train_m, cfg)
    preds = predict_ensemble(result.model, test_m)
    scored = metrics(test_m.target, preds)
    return HoldoutEvaluation(report, scored, result.model, result.pool_report)
