"""Versioned model persistence.

Format: one JSON document, ``{"format": "teayield-model", "version": 1,
"kind": <linear|gpr|mlp|ensemble>, ...}``.  Float64 arrays are embedded as
base64 of their little-endian bytes, scalars as plain JSON numbers, so a
round trip is prediction-exact; keys are sorted and separators fixed, so the
same model always serializes to the same bytes.
"""

from __future__ import annotations

import base64
import json
from dataclasses import asdict

import numpy as np
import scipy.linalg

from .ensemble import BaseLearner, EnsembleModel, PreprocessState
from .errors import DataError
from .preprocess import ScalerState
from .regressors import (GPRModel, LinearModel, MLPModel, MLPTrainConfig,
                         _sq_dists)

FORMAT_NAME = "teayield-model"
FORMAT_VERSION = 1


def _enc_array(a: np.ndarray) -> dict:
    a = np.ascontiguousarray(a, dtype=np.float64)
    return {"shape": list(a.shape),
            "data": base64.b64encode(a.astype("<f8").tobytes()).decode("ascii")}


def _dec_array(obj: dict) -> np.ndarray:
    raw = base64.b64decode(obj["data"])
    return np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(obj["shape"])


def _enc_linear(m: LinearModel) -> dict:
    return {"coefficients": _enc_array(m.coefficients),
            "intercept": m.intercept, "ridge_lambda": m.ridge_lambda}


def _dec_linear(obj: dict) -> LinearModel:
    return LinearModel(_dec_array(obj["coefficients"]), obj["intercept"],
                       obj["ridge_lambda"])


def _enc_gpr(m: GPRModel) -> dict:
    # The Cholesky factor is recomputed on load from the stored jitter; the
    # same inputs factor to the same bits, so predictions are unchanged.
    return {"signal_var": m.signal_var, "length_scale": m.length_scale,
            "noise_var": m.noise_var, "jitter": m.jitter,
            "x_train": _enc_array(m.x_train), "y_train": _enc_array(m.y_train)}


def _dec_gpr(obj: dict) -> GPRModel:
    x = _dec_array(obj["x_train"])
    y = _dec_array(obj["y_train"])
    sv, ls, nv = obj["signal_var"], obj["length_scale"], obj["noise_var"]
    k = sv * np.exp(-_sq_dists(x, x) / (2.0 * ls ** 2))
    c = k + (nv + obj["jitter"]) * np.eye(x.shape[0])
    lower = np.linalg.cholesky(c)
    alpha = scipy.linalg.cho_solve((lower, True), y)
    return GPRModel(sv, ls, nv, x, y, lower, alpha, obj["jitter"])


def _enc_mlp(m: MLPModel) -> dict:
    return {"hidden_size": m.hidden_size,
            "w_hidden": _enc_array(m.w_hidden), "b_hidden": _enc_array(m.b_hidden),
            "w_out": _enc_array(m.w_out), "b_out": m.b_out,
            "config": asdict(m.config), "seed": m.seed,
            "epochs_run": m.epochs_run, "train_error": m.train_error}


def _dec_mlp(obj: dict) -> MLPModel:
    return MLPModel(obj["hidden_size"], _dec_array(obj["w_hidden"]),
                    _dec_array(obj["b_hidden"]), _dec_array(obj["w_out"]),
                    obj["b_out"], MLPTrainConfig(**obj["config"]), obj["seed"],
                    obj["epochs_run"], obj["train_error"])


def _enc_ensemble(m: EnsembleModel) -> dict:
    state = m.preprocess
    return {
        "weights": _enc_array(m.weights),
        "weight_b": m.weight_b, "weight_c": m.weight_c,
        "literal_weights": m.literal_weights,
        "learners": [
            {"mlp": _enc_mlp(bl.model), "hidden_size": bl.hidden_size,
             "subsample_indices": list(bl.subsample_indices),
             "train_error": bl.train_error, "seed": bl.seed}
            for bl in m.learners],
        "preprocess": {
            "month_encoding": state.month_encoding,
            "add_avg_temp": state.add_avg_temp,
            "stage_order": list(state.stage_order),
            "selected_features": list(state.selected_features),
            "scaler": None if state.scaler is None else {
                "columns": list(state.scaler.columns),
                "means": _enc_array(state.scaler.means),
                "stds": _enc_array(state.scaler.stds)},
            "log_features": list(state.log_features),
            "log_target": state.log_target,
            "target_center": state.target_center,
            "target_scale": state.target_scale,
        },
    }


def _dec_ensemble(obj: dict) -> EnsembleModel:
    pre = obj["preprocess"]
    scaler = pre["scaler"]
    state = PreprocessState(
        month_encoding=pre["month_encoding"], add_avg_temp=pre["add_avg_temp"],
        stage_order=tuple(pre["stage_order"]),
        selected_features=tuple(pre["selected_features"]),
        scaler=None if scaler is None else ScalerState(
            tuple(scaler["columns"]), _dec_array(scaler["means"]),
            _dec_array(scaler["stds"])),
        log_features=tuple(pre["log_features"]), log_target=pre["log_target"],
        target_center=pre["target_center"], target_scale=pre["target_scale"])
    learners = tuple(
        BaseLearner(_dec_mlp(bl["mlp"]), bl["hidden_size"],
                    tuple(bl["subsample_indices"]), bl["train_error"],
                    bl["seed"])
        for bl in obj["learners"])
    return EnsembleModel(learners, _dec_array(obj["weights"]), obj["weight_b"],
                         obj["weight_c"], obj["literal_weights"], state)


_ENCODERS = {LinearModel: ("linear", _enc_linear), GPRModel: ("gpr", _enc_gpr),
             MLPModel: ("mlp", _enc_mlp), EnsembleModel: ("ensemble",
                                                          _enc_ensemble)}
_DECODERS = {"linear": _dec_linear, "gpr": _dec_gpr, "mlp": _dec_mlp,
             "ensemble": _dec_ensemble}


def model_to_json(model) -> str:
    for cls, (kind, encoder) in _ENCODERS.items():
        if isinstance(model, cls):
            doc = {"format": FORMAT_NAME, "version": FORMAT_VERSION,
                   "kind": kind, "model": encoder(model)}
            return json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n"
    raise DataError(f"cannot serialize object of type {type(model).__name__}")


def save_model(model, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(model_to_json(model))


def load_model(path):
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: not a valid model file ({exc})") from None
    if not isinstance(doc, dict) or doc.get("format") != FORMAT_NAME:
        raise DataError(f"{path}: not a {FORMAT_NAME} file")
    if doc.get("version") != FORMAT_VERSION:
        raise DataError(f"{path}: unsupported format version {doc.get('version')}")
    kind = doc.get("kind")
    if kind not in _DECODERS:
        raise DataError(f"{path}: unknown model kind {kind!r}")
    try:
        return _DECODERS[kind](doc["model"])
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{path}: corrupt model document ({exc})") from None
