"""Batch command-line front end.

Commands: ``synth`` (generate a synthetic dataset), ``inspect`` (correlation
and outlier reports), ``train`` (fit and save the ensemble), ``evaluate``
(stage report plus hold-out metrics), ``predict`` (score new rows with a
saved model).  Exit codes: 0 success, 1 user/data/config error, 2 internal
error.  Diagnostics go to stderr; data goes to stdout only when no output
path is given.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
from pathlib import Path

from .config import PipelineConfig, load_config, paper_defaults
from .dataset import (CANONICAL_SCHEMA, FeatureMatrix, correlation_report,
                      generate_synthetic, load_csv, render_csv, write_csv)
from .ensemble import EnsembleModel, predict_ensemble
from .errors import DataError, TeaYieldError
from .pipeline import evaluate_pipeline, prepare_input, train_ensemble_pipeline
from .preprocess import cooks_distance
from .serialize import load_model, save_model


def _read_config(args) -> PipelineConfig:
    cfg = load_config(args.config) if args.config else paper_defaults()
    if getattr(args, "seed", None) is not None:
        from dataclasses import replace
        cfg = replace(cfg, seed=args.seed)
    return cfg


def _file_schema(path, cfg: PipelineConfig) -> tuple[str, ...]:
    """Canonical schema plus extra feature columns.

    With ``feature_columns = auto`` the extras are taken from the file header
    itself (any non-canonical column becomes a numeric feature); otherwise
    they are exactly the configured list.
    """
    if cfg.feature_columns is not None:
        return CANONICAL_SCHEMA + tuple(cfg.feature_columns)
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            header = next(csv.reader(fh), None)
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc}") from None
    if not header:
        raise DataError(f"{path}: empty file")
    extras = tuple(h.strip() for h in header
                   if h.strip() not in CANONICAL_SCHEMA)
    return CANONICAL_SCHEMA + extras


def _load_data(path, cfg: PipelineConfig,
               month_encoding: str | None = None) -> FeatureMatrix:
    return load_csv(path, _file_schema(path, cfg),
                    month_encoding or cfg.month_encoding)


def _out_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_synth(args) -> int:
    cfg = _read_config(args)
    m = generate_synthetic(cfg.synth_n, cfg.seed, cfg.synth)
    if args.out:
        write_csv(m, args.out)
        print(f"wrote {m.n_samples} rows to {args.out}", file=sys.stderr)
    else:
        sys.stdout.write(render_csv(m))
    return 0


def cmd_inspect(args) -> int:
    cfg = _read_config(args)
    m = prepare_input(_load_data(args.data, cfg))
    out = _out_dir(args.out)
    report = correlation_report(m)
    report.to_csv(out / "correlation.csv")
    outliers = cooks_distance(m, cfg.outlier_threshold_for(m.n_samples))
    outliers.to_csv(out / "outliers.csv")
    print(f"correlation and outlier reports written to {out} "
          f"({len(outliers.flagged)} samples flagged at threshold "
          f"{outliers.threshold:g})", file=sys.stderr)
    return 0


def cmd_train(args) -> int:
    cfg = _read_config(args)
    m = _load_data(args.data, cfg)
    result = train_ensemble_pipeline(m, cfg)
    save_model(result.model, args.model)
    out = _out_dir(args.out) if args.out else Path(args.model).parent
    result.pool_report.to_csv(out / "pool_report.csv")
    if result.artifacts.ranked is not None:
        result.artifacts.ranked.to_csv(out / "feature_rank.csv")
    if result.artifacts.selection is not None:
        result.artifacts.selection.trace_to_csv(out / "feature_selection_trace.csv")
    print(f"trained ensemble of {len(result.model.learners)} learners; "
          f"model saved to {args.model}", file=sys.stderr)
    return 0


def cmd_evaluate(args) -> int:
    cfg = _read_config(args)
    m = _load_data(args.data, cfg)
    evaluation = evaluate_pipeline(m, cfg)
    out = _out_dir(args.out)
    evaluation.stage.to_csv(out / "stage_report.csv")
    scored = evaluation.holdout
    lines = [f"mae = {scored.mae!r}", f"mse = {scored.mse!r}",
             f"rmse = {scored.rmse!r}",
             f"r2 = {'undefined' if scored.r2 is None else repr(scored.r2)}"]
    (out / "holdout_metrics.txt").write_text("\n".join(lines) + "\n",
                                             encoding="utf-8")
    with open(out / "holdout_metrics.csv", "w", newline="",
              encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["metric", "value"])
        writer.writerow(["mae", repr(scored.mae)])
        writer.writerow(["mse", repr(scored.mse)])
        writer.writerow(["rmse", repr(scored.rmse)])
        writer.writerow(["r2", "undefined" if scored.r2 is None
                         else repr(scored.r2)])
    print("\n".join(lines))
    print(f"stage report and hold-out metrics written to {out}", file=sys.stderr)
    return 0


def cmd_predict(args) -> int:
    cfg = _read_config(args)
    model = load_model(args.model)
    if not isinstance(model, EnsembleModel):
        raise DataError(f"{args.model}: predict needs an ensemble model file")
    m = _load_data(args.data, cfg, month_encoding=model.preprocess.month_encoding)
    preds = predict_ensemble(model, m)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["row", "prediction"])
    for i, value in enumerate(preds):
        writer.writerow([i, repr(float(value))])
    if args.out:
        Path(args.out).write_text(buf.getvalue(), encoding="utf-8")
        print(f"wrote {len(preds)} predictions to {args.out}", file=sys.stderr)
    else:
        sys.stdout.write(buf.getvalue())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="teayield",
        description="Monthly crop-yield modeling: staged preprocessing, "
                    "baseline regressors, and a selected error-weighted "
                    "ensemble of shallow networks.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help_text, *, data=False, model_in=False,
            model_out=False, out_required=False, out_help="output directory"):
        p = sub.add_parser(name, help=help_text)
        if data:
            p.add_argument("--data", required=True, help="input CSV file")
        if model_in:
            p.add_argument("--model", required=True, help="saved model file")
        if model_out:
            p.add_argument("--model", required=True,
                           help="where to write the trained model")
        p.add_argument("--config", help="INI config file (defaults apply if omitted)")
        p.add_argument("--out", required=out_required, help=out_help)
        p.add_argument("--seed", type=int, help="override the config seed")
        p.set_defaults(fn=fn)
        return p

    add("synth", cmd_synth, "generate a synthetic dataset CSV",
        out_help="output CSV path (stdout if omitted)")
    add("inspect", cmd_inspect, "write correlation and outlier reports",
        data=True, out_required=True)
    add("train", cmd_train, "train and save the ensemble model",
        data=True, model_out=True,
        out_help="report directory (defaults to the model's directory)")
    add("evaluate", cmd_evaluate,
        "stage-by-stage report plus hold-out metrics",
        data=True, out_required=True)
    add("predict", cmd_predict, "score schema rows with a saved model",
        data=True, model_in=True,
        out_help="predictions CSV path (stdout if omitted)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except TeaYieldError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - last-resort boundary
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
