"""Dataset ingestion, encoding, normalization, splitting and synthetic data."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.special import expit, logit

from .core import Dataset, validate_dataset
from .errors import (
    ConfigError,
    DataError,
    DegenerateLabels,
    DegenerateSplit,
    EmptyAfterFiltering,
    ParseError,
    SchemaMismatch,
)

COLUMN_KINDS = ("continuous", "categorical", "label", "sensitive", "drop")


# -- schema ------------------------------------------------------------------


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    kind: str
    missing: str | None = None  # overrides Schema.missing_token

    def __post_init__(self):
        if self.kind not in COLUMN_KINDS:
            raise SchemaMismatch(f"column {self.name!r}: unknown kind {self.kind!r}")


@dataclass(frozen=True)
class RowFilter:
    """Keep a row only if ``column`` is within ``[min, max]`` and not in ``exclude``."""

    column: str
    min: float | None = None
    max: float | None = None
    exclude: tuple[str, ...] = ()

    def keeps(self, raw: str) -> bool:
        if raw in self.exclude:
            return False
        if self.min is None and self.max is None:
            return True
        try:
            v = float(raw)
        except ValueError:
            return False
        if self.min is not None and v < self.min:
            return False
        if self.max is not None and v > self.max:
            return False
        return True


@dataclass(frozen=True)
class Schema:
    """How to read a CSV into a :class:`Dataset`.

    Exactly one of ``group0_values``/``group1_values`` lists the raw
    sensitive-column values that map to that group; all other values map to
    the other group. ``positive_labels`` lists the raw label values mapped
    to ``y=1``. Without a header row, ``columns`` gives the file's column
    order and must cover every column.
    """

    columns: tuple[ColumnSpec, ...]
    positive_labels: tuple[str, ...]
    group0_values: tuple[str, ...] = ()
    group1_values: tuple[str, ...] = ()
    missing_token: str = "?"
    has_header: bool = True
    delimiter: str = ","
    row_filters: tuple[RowFilter, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "columns", tuple(self.columns))
        object.__setattr__(self, "positive_labels", tuple(self.positive_labels))
        object.__setattr__(self, "group0_values", tuple(self.group0_values))
        object.__setattr__(self, "group1_values", tuple(self.group1_values))
        object.__setattr__(self, "row_filters", tuple(self.row_filters))
        kinds = [c.kind for c in self.columns]
        if kinds.count("label") != 1 or kinds.count("sensitive") != 1:
            raise SchemaMismatch("schema needs exactly one label and one sensitive column")
        if not any(k in ("continuous", "categorical") for k in kinds):
            raise SchemaMismatch("schema needs at least one feature column")
        if bool(self.group0_values) == bool(self.group1_values):
            raise SchemaMismatch("set exactly one of group0_values / group1_values")
        if not self.positive_labels:
            raise SchemaMismatch("positive_labels must not be empty")
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise SchemaMismatch("duplicate column names in schema")

    @property
    def label_column(self) -> str:
        return next(c.name for c in self.columns if c.kind == "label")

    @property
    def sensitive_column(self) -> str:
        return next(c.name for c in self.columns if c.kind == "sensitive")

    @property
    def feature_columns(self) -> list[ColumnSpec]:
        return [c for c in self.columns if c.kind in ("continuous", "categorical")]

    def missing_for(self, col: ColumnSpec) -> str:
        return self.missing_token if col.missing is None else col.missing

    def group_of(self, raw: str) -> int:
        if self.group0_values:
            return 0 if raw in self.group0_values else 1
        return 1 if raw in self.group1_values else 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["row_filters"] = [
            {k: v for k, v in f.items() if v not in (None, ())} for f in d["row_filters"]
        ]
        d["columns"] = [{k: v for k, v in c.items() if v is not None} for c in d["columns"]]
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "Schema":
        try:
            return cls(
                columns=tuple(ColumnSpec(**c) for c in d["columns"]),
                positive_labels=tuple(d["positive_labels"]),
                group0_values=tuple(d.get("group0_values", ())),
                group1_values=tuple(d.get("group1_values", ())),
                missing_token=d.get("missing_token", "?"),
                has_header=d.get("has_header", True),
                delimiter=d.get("delimiter", ","),
                row_filters=tuple(
                    RowFilter(
                        column=f["column"],
                        min=f.get("min"),
                        max=f.get("max"),
                        exclude=tuple(f.get("exclude", ())),
                    )
                    for f in d.get("row_filters", ())
                ),
            )
        except (KeyError, TypeError) as exc:
            raise SchemaMismatch(f"malformed schema: {exc}") from exc

    @classmethod
    def load(cls, path: str | Path) -> "Schema":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")


# -- CSV loading -------------------------------------------------------------


def _read_rows(path: Path, schema: Schema) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter=schema.delimiter, skipinitialspace=True)
        rows = [[v.strip() for v in r] for r in reader if r and any(v.strip() for v in r)]
    if schema.has_header:
        if not rows:
            raise SchemaMismatch(f"{path}: empty file")
        return rows[0], rows[1:]
    return [c.name for c in schema.columns], rows


def load_csv(
    path: str | Path,
    schema: Schema,
    encoding_meta: Sequence[Mapping] | None = None,
) -> Dataset:
    """Read, filter, and one-hot encode a CSV file.

    Rows failing a row filter or holding a missing token in any used column
    are dropped; the counts are recorded in ``Dataset.source``. Categories
    are ordered by first appearance. Passing the ``encoding_meta`` of a
    previously loaded dataset reuses its category order instead; unseen
    categories then encode as all zeros.
    """
    path = Path(path)
    header, rows = _read_rows(path, schema)
    pos = {name: j for j, name in enumerate(header)}
    used = [c for c in schema.columns if c.kind != "drop"]
    for c in list(used) + [c for c in schema.columns if c.kind == "drop" and schema.has_header]:
        if c.name not in pos:
            raise SchemaMismatch(f"{path}: column {c.name!r} not in header")
    for f in schema.row_filters:
        if f.column not in pos:
            raise SchemaMismatch(f"{path}: filter column {f.column!r} not in header")

    kept, n_filtered, n_missing = [], 0, 0
    for lineno, row in enumerate(rows, start=2 if schema.has_header else 1):
        if len(row) != len(header):
            raise ParseError(
                f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}",
                row=lineno,
            )
        if not all(f.keeps(row[pos[f.column]]) for f in schema.row_filters):
            n_filtered += 1
            continue
        if any(row[pos[c.name]] in ("", schema.missing_for(c)) for c in used):
            n_missing += 1
            continue
        kept.append((lineno, row))
    if not kept:
        raise EmptyAfterFiltering(f"{path}: no rows left after filtering")

    prior = {m["name"]: m for m in encoding_meta} if encoding_meta else {}
    blocks, meta, names = [], [], []
    offset = 0
    for col in schema.feature_columns:
        j = pos[col.name]
        raw = [row[j] for _, row in kept]
        if col.kind == "continuous":
            vals = np.empty(len(raw))
            for i, (v, (lineno, _)) in enumerate(zip(raw, kept)):
                try:
                    vals[i] = float(v)
                except ValueError:
                    raise ParseError(
                        f"{path}:{lineno}: column {col.name!r}: cannot parse {v!r} as a number",
                        row=lineno,
                        column=col.name,
                    ) from None
                if not math.isfinite(vals[i]):
                    raise ParseError(
                        f"{path}:{lineno}: column {col.name!r}: non-finite value {v!r}",
                        row=lineno,
                        column=col.name,
                    )
            blocks.append(vals[:, None])
            names.append(col.name)
            meta.append({"name": col.name, "kind": "continuous", "columns": [offset]})
            offset += 1
        else:
            if col.name in prior:
                categories = list(prior[col.name]["categories"])
            else:
                categories = list(dict.fromkeys(raw))
            index = {c: k for k, c in enumerate(categories)}
            onehot = np.zeros((len(raw), len(categories)))
            for i, v in enumerate(raw):
                k = index.get(v)
                if k is not None:
                    onehot[i, k] = 1.0
            blocks.append(onehot)
            names.extend(f"{col.name}={c}" for c in categories)
            meta.append(
                {
                    "name": col.name,
                    "kind": "categorical",
                    "columns": list(range(offset, offset + len(categories))),
                    "categories": categories,
                }
            )
            offset += len(categories)

    label_j = pos[schema.label_column]
    sens_j = pos[schema.sensitive_column]
    y = np.array([row[label_j] in schema.positive_labels for _, row in kept], dtype=np.int8)
    s = np.array([schema.group_of(row[sens_j]) for _, row in kept], dtype=np.int8)
    dataset = Dataset(
        x=np.hstack(blocks),
        y=y,
        s=s,
        feature_names=tuple(names),
        encoding_meta=tuple(meta),
        source={
            "path": str(path),
            "rows_read": len(rows),
            "dropped_filtered": n_filtered,
            "dropped_missing": n_missing,
            "rows_kept": len(kept),
        },
    )
    return validate_dataset(dataset)


def write_csv(path: str | Path, dataset: Dataset, extra: Mapping[str, Sequence] | None = None) -> Schema:
    """Write an all-continuous dataset as a CSV with header; return its schema."""
    cols = list(dataset.feature_names)
    extra = dict(extra or {})
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols + ["s", "y"] + list(extra))
        for i in range(len(dataset)):
            w.writerow(
                [repr(float(v)) for v in dataset.x[i]]
                + [int(dataset.s[i]), int(dataset.y[i])]
                + [extra[k][i] for k in extra]
            )
    return Schema(
        columns=tuple(ColumnSpec(c, "continuous") for c in cols)
        + (ColumnSpec("s", "sensitive"), ColumnSpec("y", "label"))
        + tuple(ColumnSpec(k, "drop") for k in extra),
        positive_labels=("1",),
        group1_values=("1",),
    )


# -- normalization -----------------------------------------------------------


@dataclass(frozen=True)
class Normalizer:
    """Per-feature ``(x - mean) / scale``; identity (0, 1) on one-hot columns."""

    means: np.ndarray
    scales: np.ndarray

    STD_FLOOR = 1e-8

    def __post_init__(self):
        object.__setattr__(self, "means", np.asarray(self.means, dtype=np.float64))
        object.__setattr__(self, "scales", np.asarray(self.scales, dtype=np.float64))

    def transform(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) - self.means) / self.scales

    def extended(self, n_extra: int) -> "Normalizer":
        """Append identity entries for extra binary columns."""
        return Normalizer(
            np.concatenate([self.means, np.zeros(n_extra)]),
            np.concatenate([self.scales, np.ones(n_extra)]),
        )

    def to_dict(self) -> dict:
        return {"means": self.means.tolist(), "scales": self.scales.tolist()}

    @classmethod
    def from_dict(cls, d: Mapping) -> "Normalizer":
        return cls(np.array(d["means"], dtype=np.float64), np.array(d["scales"], dtype=np.float64))


def fit_normalizer_arrays(x: np.ndarray, continuous: np.ndarray) -> Normalizer:
    means = np.zeros(x.shape[1])
    scales = np.ones(x.shape[1])
    if len(x):
        cont = x[:, continuous]
        means[continuous] = cont.mean(axis=0)
        scales[continuous] = np.maximum(cont.std(axis=0), Normalizer.STD_FLOOR)
    return Normalizer(means, scales)


def fit_normalizer(train: Dataset) -> Normalizer:
    """Population mean/std of the continuous columns of ``train``."""
    return fit_normalizer_arrays(train.x, train.continuous_mask)


def apply_normalizer(stats: Normalizer, dataset: Dataset) -> Dataset:
    return dataset.with_features(stats.transform(dataset.x))


# -- splitting ---------------------------------------------------------------


@dataclass(frozen=True)
class SplitSpec:
    test_fraction: float = 0.3
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.test_fraction < 1.0:
            raise ConfigError(f"test_fraction={self.test_fraction} must lie in (0, 1)")


def split(dataset: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset]:
    """Seeded shuffle, then the first ``round(n * test_fraction)`` rows go to test."""
    n = len(dataset)
    perm = np.random.default_rng(spec.seed).permutation(n)
    n_test = int(round(n * spec.test_fraction))
    train, test = dataset.subset(np.sort(perm[n_test:])), dataset.subset(np.sort(perm[:n_test]))
    for name, part in (("train", train), ("test", test)):
        try:
            validate_dataset(part)
        except DataError as exc:
            raise DegenerateSplit(f"{name} partition invalid: {exc}") from exc
    return train, test


# -- synthetic biased data ---------------------------------------------------


SYNTH_FEATURES = ("gaussian", "calibrated")


@dataclass(frozen=True)
class SynthSpec:
    """Generator for data with known label bias.

    Features in group ``i`` are Gaussian with mean ``means[i]`` and shared
    diagonal ``scales``. The unbiased label is drawn as
    ``ybar ~ Bernoulli(sigmoid(<x, weights> + bias))`` and the observed label
    flips it with ``flip[i][j] = P(y != ybar | ybar=j, s=i)``.

    With ``features="calibrated"`` the observed-label posterior is drawn
    first from a fixed distribution on [1/4, 3/4] with mean 1/2, the single
    feature is its logit (through ``weights`` and ``bias``), and ``ybar`` is
    drawn from the posterior implied by undoing the group's flips. For that
    distribution, thresholding a well-fitted positive-rate-targeted model at
    0.5 accepts exactly a ``PR_t`` share of each group, which makes it a
    ground truth for rate targeting. Flip rates must stay below 1/4 so the
    hidden posterior stays strictly inside (0, 1); unequal flips give the
    groups different true rates behind equal observed rates.
    """

    n_per_group: tuple[int, int] = (1000, 1000)
    means: tuple[tuple[float, ...], tuple[float, ...]] = ((0.0,), (0.0,))
    scales: tuple[float, ...] = (1.0,)
    weights: tuple[float, ...] = (1.0,)
    bias: float = 0.0
    flip: tuple[tuple[float, float], tuple[float, float]] = ((0.0, 0.0), (0.0, 0.0))
    seed: int = 0
    features: str = "gaussian"

    def __post_init__(self):
        dim = len(self.weights)
        if self.features not in SYNTH_FEATURES:
            raise ConfigError(f"features must be one of {SYNTH_FEATURES}")
        if dim < 1:
            raise ConfigError("synthetic data needs at least one feature")
        if len(self.scales) != dim or any(len(m) != dim for m in self.means) or len(self.means) != 2:
            raise ConfigError("means, scales and weights must share one dimension")
        if any(n < 1 for n in self.n_per_group) or len(self.n_per_group) != 2:
            raise ConfigError("n_per_group needs two positive counts")
        for row in self.flip:
            for f in row:
                if not 0.0 <= f < 1.0:
                    raise ConfigError(f"flip rate {f} must lie in [0, 1)")
        if self.features == "calibrated":
            if dim != 1 or self.weights[0] == 0.0:
                raise ConfigError("calibrated features need exactly one nonzero weight")
            if any(f >= 0.25 for row in self.flip for f in row):
                raise ConfigError("calibrated features need flip rates below 0.25")

    @property
    def dim(self) -> int:
        return len(self.weights)

    def to_dict(self) -> dict:
        return {
            "n_per_group": list(self.n_per_group),
            "means": [list(m) for m in self.means],
            "scales": list(self.scales),
            "weights": list(self.weights),
            "bias": self.bias,
            "flip": [list(r) for r in self.flip],
            "seed": self.seed,
            "features": self.features,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "SynthSpec":
        try:
            return cls(
                n_per_group=tuple(int(n) for n in d["n_per_group"]),
                means=tuple(tuple(float(v) for v in m) for m in d["means"]),
                scales=tuple(float(v) for v in d["scales"]),
                weights=tuple(float(v) for v in d["weights"]),
                bias=float(d.get("bias", 0.0)),
                flip=tuple(tuple(float(v) for v in r) for r in d["flip"]),
                seed=int(d.get("seed", 0)),
                features=str(d.get("features", "gaussian")),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed synthetic spec: {exc}") from exc


@dataclass(frozen=True)
class SynthResult:
    dataset: Dataset
    y_true: np.ndarray
    rates: dict = field(default_factory=dict)


def realized_rates(y: np.ndarray, y_true: np.ndarray, s: np.ndarray) -> dict:
    """Empirical biased/true rates and flip fractions per group."""
    out = {}
    for g in (0, 1):
        m = s == g
        yt, yb = y_true[m], y[m]
        out[f"biased_rate_s{g}"] = float(yb.mean())
        out[f"true_rate_s{g}"] = float(yt.mean())
        out[f"n_s{g}"] = int(m.sum())
        for j in (0, 1):
            sel = yt == j
            out[f"flip_s{g}_ybar{j}"] = float((yb[sel] != j).mean()) if sel.any() else None
    return out


def calibrated_posterior(q: np.ndarray) -> np.ndarray:
    """Inverse survival function of the calibrated observed posterior.

    Survival is ``1/(4u)`` on [1/4, 1/2] and ``(3/2 - 2u) / (2 - 2u)`` on
    [1/2, 3/4]. A threshold at ``(1 + d0) / 2`` (lowering a rate of 1/2) or
    ``1 / (4 PR_t)`` (raising it) then leaves exactly ``PR_t`` above it.
    """
    q = np.asarray(q, dtype=np.float64)
    return np.where(q >= 0.5, 1.0 / (4.0 * np.maximum(q, 0.5)), (1.5 - 2.0 * q) / (2.0 - 2.0 * q))


def _calibrated_group(spec: SynthSpec, g: int, n: int, rng) -> tuple[np.ndarray, np.ndarray]:
    # feature = logit of the observed posterior, shared by both groups
    up, down = spec.flip[g]  # P(y=1 | ybar=0), P(y=0 | ybar=1)
    eta_obs = calibrated_posterior(rng.uniform(size=n))
    eta_true = (eta_obs - up) / (1.0 - up - down)
    x = ((logit(eta_obs) - spec.bias) / spec.weights[0]).reshape(-1, 1)
    return x, eta_true


def gen_synthetic(spec: SynthSpec) -> SynthResult:
    rng = np.random.default_rng(spec.seed)
    xs, ss, ps = [], [], []
    for g in (0, 1):
        n = spec.n_per_group[g]
        if spec.features == "calibrated":
            xg, pg = _calibrated_group(spec, g, n, rng)
        else:
            xg = np.asarray(spec.means[g]) + np.asarray(spec.scales) * rng.standard_normal((n, spec.dim))
            pg = expit(xg @ np.asarray(spec.weights) + spec.bias)
        xs.append(xg)
        ps.append(pg)
        ss.append(np.full(n, g, dtype=np.int8))
    x = np.vstack(xs)
    s = np.concatenate(ss)
    p_true = np.concatenate(ps)
    y_true = (p_true > rng.uniform(size=len(x))).astype(np.int8)
    flip = np.asarray(spec.flip)[s, y_true]
    flipped = rng.uniform(size=len(x)) < flip
    y = np.where(flipped, 1 - y_true, y_true).astype(np.int8)
    dataset = Dataset(
        x=x,
        y=y,
        s=s,
        feature_names=tuple(f"x{j}" for j in range(spec.dim)),
        source={"synthetic": spec.to_dict()},
    )
    for g in (0, 1):
        if len(np.unique(y[s == g])) < 2:
            raise DegenerateLabels(f"synthetic group s={g} ended single-labeled")
    validate_dataset(dataset)
    return SynthResult(dataset, y_true, realized_rates(y, y_true, s))


# -- dataset recipes ---------------------------------------------------------

ADULT_COLUMNS = (
    ("age", "continuous"),
    ("workclass", "categorical"),
    ("fnlwgt", "continuous"),
    ("education", "categorical"),
    ("education-num", "continuous"),
    ("marital-status", "categorical"),
    ("occupation", "categorical"),
    ("relationship", "categorical"),
    ("race", "categorical"),
    ("sex", "categorical"),
    ("capital-gain", "continuous"),
    ("capital-loss", "continuous"),
    ("hours-per-week", "continuous"),
    ("native-country", "categorical"),
    ("income", "label"),
)

ADULT_L2 = 0.00035
COMPAS_L2 = 0.0024


def adult_recipe(sensitive: str = "race") -> Schema:
    """Schema for the UCI ``adult.data`` file (no header, ``?`` for missing).

    Both ``race`` and ``sex`` are removed from the inputs, leaving twelve
    raw feature columns. Group 0 is non-white (race) or female (gender).
    """
    if sensitive not in ("race", "gender"):
        raise ConfigError(f"unknown sensitive attribute {sensitive!r}")
    sens_col = "race" if sensitive == "race" else "sex"
    cols = []
    for name, kind in ADULT_COLUMNS:
        if name in ("race", "sex"):
            kind = "sensitive" if name == sens_col else "drop"
        cols.append(ColumnSpec(name, kind))
    extra = {"group1_values": ("White",)} if sensitive == "race" else {"group0_values": ("Female",)}
    return Schema(
        columns=tuple(cols),
        positive_labels=(">50K", ">50K."),
        missing_token="?",
        has_header=False,
        **extra,
    )


COMPAS_USED = {
    "sex": "categorical",
    "age": "continuous",
    "age_cat": "categorical",
    "race": "categorical",
    "juv_fel_count": "continuous",
    "juv_misd_count": "continuous",
    "juv_other_count": "continuous",
    "priors_count": "continuous",
    "c_charge_degree": "categorical",
    "c_charge_desc": "categorical",
    "two_year_recid": "label",
}


def propublica_recipe(sensitive: str = "race") -> Schema:
    """Schema for ProPublica's ``compas-scores-two-years.csv``.

    Applies the usual screening filters (arrest within 30 days of screening,
    known recidivism, no ordinary-traffic charges, valid score text) and
    drops rows with missing values in used columns. ``y=1`` means rearrested
    within two years. Group 0 is African-American (race) or female (gender).
    COMPAS scores themselves are not used as inputs.
    """
    if sensitive not in ("race", "gender"):
        raise ConfigError(f"unknown sensitive attribute {sensitive!r}")
    sens_col = "race" if sensitive == "race" else "sex"
    cols = []
    for name, kind in COMPAS_USED.items():
        if name in ("race", "sex"):
            kind = "sensitive" if name == sens_col else "drop"
        cols.append(ColumnSpec(name, kind))
    extra = (
        {"group0_values": ("African-American",)}
        if sensitive == "race"
        else {"group0_values": ("Female",)}
    )
    return Schema(
        columns=tuple(cols),
        positive_labels=("1",),
        missing_token="",
        has_header=True,
        row_filters=(
            RowFilter("days_b_screening_arrest", min=-30, max=30),
            RowFilter("is_recid", exclude=("-1",)),
            RowFilter("c_charge_degree", exclude=("O",)),
            RowFilter("score_text", exclude=("N/A",)),
        ),
        **extra,
    )


RECIPES = {"adult": adult_recipe, "compas": propublica_recipe}
RECIPE_L2 = {"adult": ADULT_L2, "compas": COMPAS_L2}
