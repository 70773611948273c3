"""Repeat/sweep orchestration behind the command line.

Every repeat ``i`` uses seed ``base_seed + i`` for both the data split and
minibatch shuffling, so a single repeat can be rerun in isolation.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

from .core import Dataset, DebiasingParams, TargetKind, TargetSpec
from .data import Schema, SplitSpec, load_csv, split
from .debias import (
    TnrSelection,
    build_params,
    consistency_residual,
    estimate_biased_rates,
    resolve_target,
    select_target_tnr,
    target_positive_rates,
)
from .errors import ConfigError
from .metrics import FairnessReport, aggregate_runs, evaluate
from .model import Model, TrainConfig, predict_labels, train

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class RunConfig:
    """One experiment: data source, target, training settings and repeats.

    ``validation_fraction`` is the share of each training split held out to
    measure baseline TNRs when the TNR target is ``auto``. With
    ``paper_protocol`` the baseline TNRs are measured on the test split
    instead and no validation split is carved out.
    """

    data: str
    schema: Schema
    target: TargetSpec = field(default_factory=TargetSpec.none)
    train: TrainConfig = field(default_factory=TrainConfig)
    test_fraction: float = 0.3
    validation_fraction: float = 0.2
    repeats: int = 1
    base_seed: int = 0
    paper_protocol: bool = False
    source_label: str = ""

    def __post_init__(self):
        if self.repeats < 1:
            raise ConfigError("repeats must be at least 1")
        if not 0.0 < self.validation_fraction < 1.0:
            raise ConfigError("validation_fraction must lie in (0, 1)")
        SplitSpec(self.test_fraction, 0)

    def seed_for(self, repeat: int) -> int:
        return self.base_seed + repeat

    def describe(self) -> dict:
        return {
            "data": self.source_label or str(self.data),
            "target": self.target.to_dict(),
            "train": self.train.to_dict(),
            "test_fraction": self.test_fraction,
            "validation_fraction": None if self.paper_protocol else self.validation_fraction,
            "repeats": self.repeats,
            "base_seed": self.base_seed,
            "tnr_protocol": "test" if self.paper_protocol else "validation",
        }


def load_dataset(config: RunConfig) -> Dataset:
    return load_csv(config.data, config.schema)


def _report(model: Model, ds: Dataset) -> FairnessReport:
    return evaluate(predict_labels(model, ds.x, ds.s), ds.y, ds.s)


def baseline_repeat(dataset: Dataset, config: RunConfig, repeat: int) -> tuple[dict, FairnessReport, Model]:
    seed = config.seed_for(repeat)
    train_ds, test_ds = split(dataset, SplitSpec(config.test_fraction, seed))
    rates = estimate_biased_rates(train_ds)
    model = train(train_ds, DebiasingParams.identity(), replace(config.train, seed=seed))
    report = _report(model, test_ds)
    return {
        "repeat": repeat,
        "seed": seed,
        "rates": rates.to_dict(),
        "report": report.to_dict(),
        "final_train_loss": model.final_train_loss,
    }, report, model


def _select_tnr(train_ds: Dataset, test_ds: Dataset, config: RunConfig, seed: int) -> tuple[TnrSelection, str]:
    if config.paper_protocol:
        fit_ds, eval_ds, where = train_ds, test_ds, "test"
    else:
        fit_ds, eval_ds = split(train_ds, SplitSpec(config.validation_fraction, seed))
        where = "validation"
    base = train(fit_ds, DebiasingParams.identity(), replace(config.train, seed=seed))
    rep = _report(base, eval_ds)
    if rep.tnr_s0 is None or rep.tnr_s1 is None:
        raise ConfigError("cannot pick a TNR target: a group has no negatives in the evaluation split")
    return select_target_tnr(rep.tnr_s0, rep.tnr_s1), where


def train_repeat(dataset: Dataset, config: RunConfig, repeat: int) -> tuple[dict, FairnessReport, Model]:
    seed = config.seed_for(repeat)
    train_ds, test_ds = split(dataset, SplitSpec(config.test_fraction, seed))
    rates = estimate_biased_rates(train_ds)
    selection, where = None, None
    if config.target.kind is TargetKind.TPR_TNR and config.target.tnr_target == "auto":
        selection, where = _select_tnr(train_ds, test_ds, config, seed)
    resolved = resolve_target(config.target, rates, selection)
    params = build_params(resolved, rates)
    model = train(train_ds, params, replace(config.train, seed=seed))
    report = _report(model, test_ds)
    record = {
        "repeat": repeat,
        "seed": seed,
        "rates": rates.to_dict(),
        "resolved_target": resolved.to_dict(),
        "target_positive_rates": list(target_positive_rates(resolved, rates)),
        "debias": params.to_dict(),
        "consistency_residual": consistency_residual(params, resolved, rates),
        "final_train_loss": model.final_train_loss,
        "report": report.to_dict(),
    }
    if selection is not None:
        record["tnr_selection"] = {
            "measured_on": where,
            "tnr_by_group": list(selection.tnr_by_group),
            "selected_tnr": selection.selected_tnr,
        }
    return record, report, model


def run_repeats(
    config: RunConfig,
    dataset: Dataset | None = None,
    on_model: Callable[[int, Model], None] | None = None,
    baseline: bool = False,
) -> dict:
    dataset = load_dataset(config) if dataset is None else dataset
    records, reports = [], []
    for i in range(config.repeats):
        fn = baseline_repeat if baseline else train_repeat
        record, report, model = fn(dataset, config, i)
        records.append(record)
        reports.append(report)
        if on_model is not None:
            on_model(i, model)
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "baseline" if baseline else "train",
        "config": config.describe(),
        "dataset": dict(dataset.source) | {"n": len(dataset), "dim": dataset.dim},
        "repeats": records,
        "aggregate": aggregate_runs(reports).to_dict(),
    }


def grid_targets(base: TargetSpec, values: Sequence[float]) -> list[TargetSpec]:
    """Vary the PR target (parity) or TPR target (equalized odds) over ``values``."""
    if base.kind is TargetKind.POSITIVE_RATE:
        return [TargetSpec.positive_rate(v) for v in values]
    if base.kind is TargetKind.TPR_TNR:
        return [TargetSpec.tpr_tnr(v, base.tnr_target) for v in values]
    raise ConfigError("a sweep needs a fairness target (dp or eqopp)")


def run_sweep(
    config: RunConfig,
    grid: Sequence[TargetSpec],
    out_path: str | Path | None = None,
    dataset: Dataset | None = None,
) -> dict:
    """Run the full repeat pipeline for each grid target, in grid order.

    When ``out_path`` is given the file is rewritten after every grid point,
    so an interrupted sweep keeps its finished points.
    """
    if not grid:
        raise ConfigError("sweep grid is empty")
    dataset = load_dataset(config) if dataset is None else dataset
    result = {
        "schema_version": SCHEMA_VERSION,
        "kind": "sweep",
        "config": config.describe() | {"target": None},
        "dataset": dict(dataset.source) | {"n": len(dataset), "dim": dataset.dim},
        "grid": [t.to_dict() for t in grid],
        "points": [],
    }
    for target in grid:
        point = run_repeats(replace(config, target=target), dataset)
        result["points"].append(
            {
                "target": target.to_dict(),
                "repeats": point["repeats"],
                "aggregate": point["aggregate"],
            }
        )
        if out_path is not None:
            write_json(out_path, result)
    return result


def write_json(path: str | Path, payload: dict) -> None:
    """Atomic write: temp file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, allow_nan=False)
            fh.write("\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def mean_of(aggregate: dict, metric: str) -> float | None:
    return aggregate["metrics"][metric]["mean"]

