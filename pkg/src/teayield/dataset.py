"""Data schema, CSV ingestion, correlation diagnostics, and synthetic data.

The unit of exchange between pipeline stages is :class:`FeatureMatrix`, an
immutable column-named numeric table with a separate target vector.  CSV
files follow a fixed monthly-observation schema; bookkeeping columns (year,
labor cost, labor training level, pesticide use) are parsed and carried for
provenance but never exposed as model features.  The month is a categorical
1-12 value on disk and is expanded into model columns at load time
(cyclic sin/cos by default).
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import DataError
from .util import as_float_array

# On-disk column order. Everything not carried and not the target is a
# numeric feature; extra schema columns (e.g. synthetic distractors) are
# treated as features too.
CANONICAL_SCHEMA = (
    "year", "month", "min_temp", "max_temp", "humidity", "rainfall",
    "soil_ph", "labor_cost", "labor_training", "pesticide_used", "yield",
)
CARRIED_COLUMNS = ("year", "month", "labor_cost", "labor_training", "pesticide_used")
TARGET_COLUMN = "yield"
MONTH_ENCODINGS = ("cyclic", "integer", "onehot")


@dataclass(frozen=True)
class SampleRecord:
    """One monthly observation. Ranges are validated on construction."""

    year: int
    month: int
    min_temp: float
    max_temp: float
    humidity: float
    rainfall: float
    soil_ph: float
    labor_cost: float
    labor_training: str
    pesticide_used: bool
    yield_kg: float

    def __post_init__(self):
        if not 1 <= self.month <= 12:
            raise DataError(f"month must be in 1..12, got {self.month}")
        if self.min_temp > self.max_temp:
            raise DataError(
                f"min_temp {self.min_temp} exceeds max_temp {self.max_temp}")
        if not 0.0 <= self.humidity <= 100.0:
            raise DataError(f"humidity must be in [0, 100], got {self.humidity}")
        if self.rainfall < 0.0:
            raise DataError(f"rainfall must be >= 0, got {self.rainfall}")
        if not 0.0 <= self.soil_ph <= 14.0:
            raise DataError(f"soil_ph must be in [0, 14], got {self.soil_ph}")
        if self.yield_kg < 0.0:
            raise DataError(f"yield must be >= 0, got {self.yield_kg}")


@dataclass(frozen=True)
class FeatureMatrix:
    """Column-named numeric table plus target vector.

    Immutable after construction: the arrays are copied in and marked
    read-only, so instances are safe to share across threads.  ``carried``
    holds provenance columns (kept as plain tuples) that are never features.
    """

    column_names: tuple[str, ...]
    values: np.ndarray
    target: np.ndarray
    target_name: str = TARGET_COLUMN
    carried: Mapping[str, tuple] = field(default_factory=dict)

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        target = np.array(self.target, dtype=np.float64)
        names = tuple(self.column_names)
        if values.ndim != 2:
            raise DataError(f"values must be 2-D, got shape {values.shape}")
        if values.shape[1] != len(names):
            raise DataError(
                f"{len(names)} column names for {values.shape[1]} columns")
        if len(set(names)) != len(names):
            raise DataError("column names must be unique")
        if self.target_name in names:
            raise DataError(f"target {self.target_name!r} also listed as a feature")
        if target.ndim != 1 or target.shape[0] != values.shape[0]:
            raise DataError("target length does not match sample count")
        if values.shape[0] < 1:
            raise DataError("matrix must hold at least one sample")
        if not np.all(np.isfinite(values)) or not np.all(np.isfinite(target)):
            raise DataError("non-finite values are not allowed in a FeatureMatrix")
        carried = {k: tuple(v) for k, v in dict(self.carried).items()}
        for key, col in carried.items():
            if len(col) != values.shape[0]:
                raise DataError(f"carried column {key!r} has wrong length")
        values.flags.writeable = False
        target.flags.writeable = False
        object.__setattr__(self, "column_names", names)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "target", target)
        object.__setattr__(self, "carried", carried)

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    @property
    def n_features(self) -> int:
        return self.values.shape[1]

    def col_index(self, name: str) -> int:
        try:
            return self.column_names.index(name)
        except ValueError:
            raise DataError(f"no column named {name!r}") from None

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.col_index(name)]

    def subset(self, names: Sequence[str]) -> "FeatureMatrix":
        idx = [self.col_index(n) for n in names]
        return FeatureMatrix(tuple(names), self.values[:, idx], self.target,
                             self.target_name, self.carried)

    def append_column(self, name: str, values) -> "FeatureMatrix":
        col = as_float_array(values, name)
        return FeatureMatrix(self.column_names + (name,),
                             np.column_stack([self.values, col]),
                             self.target, self.target_name, self.carried)

    def replace_columns(self, updates: Mapping[str, np.ndarray]) -> "FeatureMatrix":
        values = np.array(self.values)
        for name, col in updates.items():
            values[:, self.col_index(name)] = as_float_array(col, name)
        return FeatureMatrix(self.column_names, values, self.target,
                             self.target_name, self.carried)

    def with_target(self, target) -> "FeatureMatrix":
        return FeatureMatrix(self.column_names, self.values,
                             as_float_array(target, "target"),
                             self.target_name, self.carried)

    def take_rows(self, indices) -> "FeatureMatrix":
        idx = np.asarray(indices, dtype=np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= self.n_samples):
            raise DataError("row index out of range")
        carried = {k: tuple(v[i] for i in idx) for k, v in self.carried.items()}
        return FeatureMatrix(self.column_names, self.values[idx],
                             self.target[idx], self.target_name, carried)


@dataclass(frozen=True)
class CorrelationReport:
    feature_names: tuple[str, ...]
    matrix: np.ndarray
    target_correlations: np.ndarray
    target_name: str = TARGET_COLUMN

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["feature", *self.feature_names,
                             f"{self.target_name}_correlation"])
            for i, name in enumerate(self.feature_names):
                writer.writerow([name,
                                 *[repr(float(v)) for v in self.matrix[i]],
                                 repr(float(self.target_correlations[i]))])


def _parse_float(cell: str, col: str) -> float:
    try:
        value = float(cell)
    except ValueError:
        raise DataError(f"column {col!r}: cannot parse {cell!r} as a number") from None
    if not math.isfinite(value):
        raise DataError(f"column {col!r}: non-finite value {cell!r}")
    return value


def _parse_int(cell: str, col: str) -> int:
    try:
        return int(cell)
    except ValueError:
        raise DataError(
            f"column {col!r}: cannot parse {cell!r} as an integer") from None


def _parse_bool(cell: str, col: str) -> bool:
    text = cell.strip().lower()
    if text in ("1", "true", "yes"):
        return True
    if text in ("0", "false", "no"):
        return False
    raise DataError(f"column {col!r}: cannot parse {cell!r} as a boolean")


def month_columns(encoding: str) -> tuple[str, ...]:
    if encoding == "cyclic":
        return ("month_sin", "month_cos")
    if encoding == "integer":
        return ("month",)
    if encoding == "onehot":
        return tuple(f"month_{m:02d}" for m in range(1, 13))
    raise DataError(f"unknown month encoding {encoding!r}; choose from {MONTH_ENCODINGS}")


def encode_months(months: np.ndarray, encoding: str) -> np.ndarray:
    """Expand integer months 1..12 into model columns."""
    months = np.asarray(months, dtype=np.float64)
    if encoding == "cyclic":
        phase = 2.0 * np.pi * months / 12.0
        return np.column_stack([np.sin(phase), np.cos(phase)])
    if encoding == "integer":
        return months.reshape(-1, 1)
    if encoding == "onehot":
        out = np.zeros((months.shape[0], 12))
        out[np.arange(months.shape[0]), months.astype(np.int64) - 1] = 1.0
        return out
    raise DataError(f"unknown month encoding {encoding!r}; choose from {MONTH_ENCODINGS}")


def load_csv(path, schema: Sequence[str] = CANONICAL_SCHEMA,
             month_encoding: str = "cyclic") -> FeatureMatrix:
    """Read a monthly-observation CSV into a FeatureMatrix.

    The header must contain exactly the ``schema`` columns (any order).
    Schema columns beyond the canonical set are read as extra numeric
    features.  Missing values and unparseable or non-finite cells are load
    errors naming the offending data row (1-based) and column.
    """
    schema = tuple(schema)
    missing_canonical = [c for c in CANONICAL_SCHEMA if c not in schema]
    if missing_canonical:
        raise DataError(f"schema is missing canonical columns {missing_canonical}")
    extra_features = [c for c in schema if c not in CANONICAL_SCHEMA]

    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc}") from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if len(set(header)) != len(header):
            raise DataError(f"{path}: duplicate columns in header")
        missing = sorted(set(schema) - set(header))
        extra = sorted(set(header) - set(schema))
        if missing or extra:
            raise DataError(
                f"{path}: header mismatch (missing {missing or 'none'}, "
                f"unexpected {extra or 'none'})")
        pos = {name: header.index(name) for name in schema}

        rows = []
        for r, raw in enumerate(reader, start=1):
            if not raw or all(not cell.strip() for cell in raw):
                continue
            if len(raw) != len(header):
                raise DataError(f"{path}: row {r} has {len(raw)} cells, "
                                f"expected {len(header)}")
            cells = {name: raw[pos[name]] for name in schema}
            try:
                record = SampleRecord(
                    year=_parse_int(cells["year"], "year"),
                    month=_parse_int(cells["month"], "month"),
                    min_temp=_parse_float(cells["min_temp"], "min_temp"),
                    max_temp=_parse_float(cells["max_temp"], "max_temp"),
                    humidity=_parse_float(cells["humidity"], "humidity"),
                    rainfall=_parse_float(cells["rainfall"], "rainfall"),
                    soil_ph=_parse_float(cells["soil_ph"], "soil_ph"),
                    labor_cost=_parse_float(cells["labor_cost"], "labor_cost"),
                    labor_training=cells["labor_training"].strip(),
                    pesticide_used=_parse_bool(cells["pesticide_used"],
                                               "pesticide_used"),
                    yield_kg=_parse_float(cells["yield"], "yield"),
                )
                extras = [_parse_float(cells[c], c) for c in extra_features]
            except DataError as exc:
                raise DataError(f"{path}: row {r}: {exc}") from None
            rows.append((record, extras))

    if not rows:
        raise DataError(f"{path}: no data rows")

    records = [rec for rec, _ in rows]
    months = np.array([rec.month for rec in records], dtype=np.float64)

    # Canonical feature order regardless of file column order: the base
    # numeric features, then any extra schema columns, then the encoded month.
    names: list[str] = ["min_temp", "max_temp", "humidity", "rainfall", "soil_ph"]
    columns: list[np.ndarray] = [
        np.array([rec.min_temp for rec in records]),
        np.array([rec.max_temp for rec in records]),
        np.array([rec.humidity for rec in records]),
        np.array([rec.rainfall for rec in records]),
        np.array([rec.soil_ph for rec in records]),
    ]
    for j, col in enumerate(extra_features):
        names.append(col)
        columns.append(np.array([ex[j] for _, ex in rows]))
    enc = encode_months(months, month_encoding)
    for j, enc_name in enumerate(month_columns(month_encoding)):
        names.append(enc_name)
        columns.append(enc[:, j])

    carried = {
        "year": tuple(rec.year for rec in records),
        "month": tuple(rec.month for rec in records),
        "labor_cost": tuple(rec.labor_cost for rec in records),
        "labor_training": tuple(rec.labor_training for rec in records),
        "pesticide_used": tuple(int(rec.pesticide_used) for rec in records),
    }
    return FeatureMatrix(tuple(names), np.column_stack(columns),
                         np.array([rec.yield_kg for rec in records]),
                         TARGET_COLUMN, carried)


def render_csv(m: FeatureMatrix) -> str:
    """Serialize a matrix back to the on-disk schema (inverse of load_csv).

    Requires the carried provenance columns; the raw month column is written
    from them, not from the encoded feature columns.  Floats are written with
    ``repr`` so a load/write/load round trip is exact.
    """
    for key in CARRIED_COLUMNS:
        if key not in m.carried:
            raise DataError(f"matrix lacks carried column {key!r}; cannot serialize")
    month_cols = set()
    for enc in MONTH_ENCODINGS:
        month_cols.update(month_columns(enc))
    feature_cols = [c for c in m.column_names
                    if c not in month_cols and c != "avg_temp"]
    known = [c for c in feature_cols if c in CANONICAL_SCHEMA]
    extras = [c for c in feature_cols if c not in CANONICAL_SCHEMA]
    header = ["year", "month", *known, *extras,
              "labor_cost", "labor_training", "pesticide_used", TARGET_COLUMN]

    def fmt(v) -> str:
        return repr(float(v))

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for i in range(m.n_samples):
        row = [str(m.carried["year"][i]), str(m.carried["month"][i])]
        row += [fmt(m.column(c)[i]) for c in known]
        row += [fmt(m.column(c)[i]) for c in extras]
        row += [fmt(m.carried["labor_cost"][i]),
                str(m.carried["labor_training"][i]),
                str(int(m.carried["pesticide_used"][i])),
                fmt(m.target[i])]
        writer.writerow(row)
    return buf.getvalue()


def write_csv(m: FeatureMatrix, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(render_csv(m))


def derive_avg_temp(m: FeatureMatrix) -> FeatureMatrix:
    """Append avg_temp = (min_temp + max_temp) / 2."""
    avg = (m.column("min_temp") + m.column("max_temp")) / 2.0
    return m.append_column("avg_temp", avg)


def pearson(x, y) -> float:
    """Sample Pearson correlation coefficient, clamped to [-1, 1]."""
    x = as_float_array(x, "x")
    y = as_float_array(y, "y")
    if x.shape[0] != y.shape[0]:
        raise DataError("pearson requires vectors of equal length")
    if x.shape[0] < 2:
        raise DataError("pearson requires at least 2 samples")
    xc = x - x.mean()
    yc = y - y.mean()
    sx = float(xc @ xc)
    sy = float(yc @ yc)
    if sx == 0.0 or sy == 0.0:
        raise DataError("pearson is undefined for a constant vector")
    r = float(xc @ yc) / math.sqrt(sx * sy)
    return min(1.0, max(-1.0, r))


def correlation_report(m: FeatureMatrix) -> CorrelationReport:
    """Pairwise feature correlations plus each feature's target correlation."""
    if m.n_samples < 2:
        raise DataError("correlation_report requires at least 2 samples")
    for name in m.column_names:
        if np.ptp(m.column(name)) == 0.0:
            raise DataError(f"column {name!r} is constant; correlation undefined")
    if np.ptp(m.target) == 0.0:
        raise DataError(f"target {m.target_name!r} is constant; correlation undefined")
    f = m.n_features
    matrix = np.eye(f)
    for i in range(f):
        for j in range(i + 1, f):
            r = pearson(m.values[:, i], m.values[:, j])
            matrix[i, j] = r
            matrix[j, i] = r
    target_corr = np.array([pearson(m.values[:, i], m.target) for i in range(f)])
    return CorrelationReport(m.column_names, matrix, target_corr, m.target_name)


@dataclass(frozen=True)
class SyntheticSpec:
    """Knobs for the synthetic monthly-yield generator.

    The ground truth is an invented stand-in for field data and is documented
    here rather than fitted to anything: log-yield is a smooth saturating
    curve in rainfall, a bell-shaped response to average temperature, a
    linear trend in soil pH (negative by default), a mild humidity term, and
    a seasonal sine in the month, plus Gaussian noise of scale
    ``noise_scale``.  Yield is the exponential of that sum, so the target is
    right-skewed and strictly positive.  Planted outliers shift log-yield by
    ``outlier_shift * noise_scale`` with alternating sign; they sit on the
    highest-rainfall rows, i.e. natural leverage points, so influence
    diagnostics can separate them from ordinary noise.  Distractor columns
    are independent standard normal noise.
    """

    noise_scale: float = 0.10
    n_distractors: int = 0
    n_outliers: int = 0
    outlier_shift: float = 10.0
    rain_coef: float = 0.55
    temp_coef: float = 0.3
    ph_coef: float = -0.6
    humidity_coef: float = 0.45
    season_amp: float = 0.4
    interaction_coef: float = 0.25
    base_log_yield: float = 3.8
    start_year: int = 2008

    def __post_init__(self):
        if self.noise_scale < 0:
            raise DataError(f"noise_scale must be >= 0, got {self.noise_scale}")
        if self.n_distractors < 0 or self.n_outliers < 0:
            raise DataError("distractor and outlier counts must be >= 0")

    @classmethod
    def canonical(cls) -> "SyntheticSpec":
        """The reference test-bench dataset shape: planted outliers, a skewed
        target, and three distractor features, at a noise level where single
        networks are measurably unstable."""
        return cls(n_distractors=3, n_outliers=3, noise_scale=0.16,
                   outlier_shift=4.5)


def ground_truth_log_yield(avg_temp, rainfall, soil_ph, humidity, month,
                           spec: SyntheticSpec) -> np.ndarray:
    """Clean log-yield surface used by the generator (and by tests).

    The rain/pH product term rewards heavy rain more on acidic soil; it is
    the part of the surface that low-capacity models cannot represent from
    the main effects alone.
    """
    phase = 2.0 * np.pi * np.asarray(month, dtype=np.float64) / 12.0
    rain_sat = np.tanh((np.asarray(rainfall) - 120.0) / 70.0)
    return (spec.base_log_yield
            + spec.rain_coef * rain_sat
            + spec.temp_coef * np.exp(-((np.asarray(avg_temp) - 21.0) / 5.5) ** 2)
            + spec.ph_coef * (np.asarray(soil_ph) - 6.0)
            + spec.humidity_coef * (np.asarray(humidity) - 62.0) / 15.0
            + spec.season_amp * np.sin(phase - 0.6)
            + spec.interaction_coef * rain_sat * (6.0 - np.asarray(soil_ph)))


def generate_synthetic(n: int, seed: int, spec: SyntheticSpec | None = None) -> FeatureMatrix:
    """Deterministic synthetic dataset in the canonical schema.

    Draw order from the seeded generator is fixed (temperatures, humidity,
    rainfall, pH, noise, outlier positions, labor columns, distractors), so
    a given (n, seed, spec) always produces the identical matrix.
    """
    if spec is None:
        spec = SyntheticSpec()
    if n < 10:
        raise DataError(f"need at least 10 samples, got {n}")
    rng = np.random.default_rng(seed)

    idx = np.arange(n)
    month = (idx % 12) + 1
    year = spec.start_year + idx // 12
    phase = 2.0 * np.pi * month / 12.0

    tmid = 16.0 - 9.0 * np.cos(phase) + rng.normal(0.0, 1.2, n)
    spread = rng.uniform(6.0, 12.0, n)
    min_temp = tmid - spread / 2.0
    max_temp = tmid + spread / 2.0
    humidity = np.clip(62.0 + 14.0 * np.sin(phase - 1.0) + rng.normal(0.0, 7.0, n),
                       5.0, 100.0)
    rainfall = (60.0 + 55.0 * (1.0 - np.cos(phase))) * np.exp(rng.normal(0.0, 0.35, n))
    soil_ph = np.clip(6.1 - 0.0015 * (rainfall - 120.0) + rng.normal(0.0, 0.45, n),
                      3.5, 8.5)

    log_clean = ground_truth_log_yield((min_temp + max_temp) / 2.0, rainfall,
                                       soil_ph, humidity, month, spec)
    noise = spec.noise_scale * rng.normal(0.0, 1.0, n)
    if spec.n_outliers > 0:
        # Highest-rainfall rows are leverage points of any fit that uses
        # rainfall, which keeps the planted outliers individually influential.
        outlier_rows = np.argsort(rainfall)[::-1][:min(spec.n_outliers, n)]
        signs = np.where(np.arange(outlier_rows.size) % 2 == 0, 1.0, -1.0)
        noise[outlier_rows] += signs * spec.outlier_shift * spec.noise_scale
    yield_kg = np.exp(log_clean + noise)

    labor_cost = 480.0 + 4.0 * idx + rng.normal(0.0, 20.0, n)
    labor_training = rng.choice(np.array(["basic", "skilled"]), n)
    pesticide = rng.integers(0, 2, n)

    names = ["min_temp", "max_temp", "humidity", "rainfall", "soil_ph"]
    columns = [min_temp, max_temp, humidity, rainfall, soil_ph]
    for d in range(spec.n_distractors):
        names.append(f"distractor_{d + 1}")
        columns.append(rng.normal(0.0, 1.0, n))
    enc = encode_months(month, "cyclic")
    for j, enc_name in enumerate(month_columns("cyclic")):
        names.append(enc_name)
        columns.append(enc[:, j])

    carried = {
        "year": tuple(int(v) for v in year),
        "month": tuple(int(v) for v in month),
        "labor_cost": tuple(float(v) for v in labor_cost),
        "labor_training": tuple(str(v) for v in labor_training),
        "pesticide_used": tuple(int(v) for v in pesticide),
    }
    return FeatureMatrix(tuple(names), np.column_stack(columns), yield_kg,
                         TARGET_COLUMN, carried)
