"""Per-group confusion counts and the group-fairness measures built on them.

Ratios are always group 0 over group 1. A rate whose denominator is zero is
reported as ``None`` rather than NaN, and ``aggregate_runs`` skips it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import Sequence

import numpy as np

from .errors import EmptyGroup, EmptyReports, LengthMismatch


@dataclass(frozen=True)
class Counts:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class GroupConfusion:
    s0: Counts
    s1: Counts

    def group(self, s: int) -> Counts:
        return self.s1 if s == 1 else self.s0

    def total(self) -> Counts:
        return Counts(*(getattr(self.s0, f) + getattr(self.s1, f) for f in ("tp", "fp", "tn", "fn")))


def confusion_by_group(predictions, labels, groups) -> GroupConfusion:
    pred = np.asarray(predictions).astype(np.int8).reshape(-1)
    lab = np.asarray(labels).astype(np.int8).reshape(-1)
    grp = np.asarray(groups).astype(np.int8).reshape(-1)
    if not (len(pred) == len(lab) == len(grp)):
        raise LengthMismatch(
            f"lengths differ: predictions={len(pred)}, labels={len(lab)}, groups={len(grp)}"
        )
    out = []
    for g in (0, 1):
        m = grp == g
        p, y = pred[m], lab[m]
        out.append(
            Counts(
                tp=int(np.sum((p == 1) & (y == 1))),
                fp=int(np.sum((p == 1) & (y == 0))),
                tn=int(np.sum((p == 0) & (y == 0))),
                fn=int(np.sum((p == 0) & (y == 1))),
            )
        )
    return GroupConfusion(*out)


def _div(a: float, b: float) -> float | None:
    return a / b if b > 0 else None


def _ratio(a: float | None, b: float | None) -> float | None:
    if a is None or b is None or b == 0:
        return None
    return a / b


@dataclass(frozen=True)
class FairnessReport:
    accuracy: float
    pr_s0: float
    pr_s1: float
    di_ratio: float | None
    tpr_s0: float | None
    tpr_s1: float | None
    tnr_s0: float | None
    tnr_s1: float | None
    tpr_ratio: float | None
    tnr_ratio: float | None
    pr: float
    tpr: float | None
    tnr: float | None
    n_s0: int
    n_s1: int

    @property
    def pr_by_group(self) -> tuple[float, float]:
        return self.pr_s0, self.pr_s1

    @property
    def tpr_by_group(self) -> tuple[float | None, float | None]:
        return self.tpr_s0, self.tpr_s1

    @property
    def tnr_by_group(self) -> tuple[float | None, float | None]:
        return self.tnr_s0, self.tnr_s1

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, d) -> "FairnessReport":
        return cls(**{f.name: d[f.name] for f in fields(cls)})


METRIC_NAMES = tuple(f.name for f in fields(FairnessReport))


def fairness_report(confusion: GroupConfusion) -> FairnessReport:
    rates = {}
    for g in (0, 1):
        c = confusion.group(g)
        if c.n == 0:
            raise EmptyGroup(f"group s={g} has no evaluated examples")
        rates[g] = (
            (c.tp + c.fp) / c.n,
            _div(c.tp, c.tp + c.fn),
            _div(c.tn, c.tn + c.fp),
        )
    t = confusion.total()
    return FairnessReport(
        accuracy=(t.tp + t.tn) / t.n,
        pr_s0=rates[0][0],
        pr_s1=rates[1][0],
        di_ratio=_ratio(rates[0][0], rates[1][0]),
        tpr_s0=rates[0][1],
        tpr_s1=rates[1][1],
        tnr_s0=rates[0][2],
        tnr_s1=rates[1][2],
        tpr_ratio=_ratio(rates[0][1], rates[1][1]),
        tnr_ratio=_ratio(rates[0][2], rates[1][2]),
        pr=(t.tp + t.fp) / t.n,
        tpr=_div(t.tp, t.tp + t.fn),
        tnr=_div(t.tn, t.tn + t.fp),
        n_s0=confusion.s0.n,
        n_s1=confusion.s1.n,
    )


def evaluate(predictions, labels, groups) -> FairnessReport:
    return fairness_report(confusion_by_group(predictions, labels, groups))


@dataclass(frozen=True)
class MetricSummary:
    mean: float | None
    std: float | None
    n: int
    excluded: int

    def to_dict(self) -> dict:
        return {"mean": self.mean, "std": self.std, "n": self.n, "excluded": self.excluded}


@dataclass(frozen=True)
class AggregateReport:
    metrics: dict
    repeats: int

    def __getitem__(self, name: str) -> MetricSummary:
        return self.metrics[name]

    def to_dict(self) -> dict:
        return {
            "repeats": self.repeats,
            "metrics": {k: v.to_dict() for k, v in self.metrics.items()},
        }


def _mean_std(values: Sequence[float]) -> tuple[float, float]:
    # math.fsum keeps the result independent of input order
    n = len(values)
    mean = math.fsum(values) / n
    if n == 1:
        return mean, 0.0
    var = math.fsum((v - mean) ** 2 for v in values) / (n - 1)
    return mean, math.sqrt(var)


def aggregate_runs(reports: Sequence[FairnessReport]) -> AggregateReport:
    """Mean and sample (n-1) standard deviation of every metric."""
    if not reports:
        raise EmptyReports("no reports to aggregate")
    out = {}
    for name in METRIC_NAMES:
        vals = [getattr(r, name) for r in reports]
        present = [float(v) for v in vals if v is not None]
        if present:
            mean, std = _mean_std(present)
        else:
            mean, std = None, None
        out[name] = MetricSummary(mean, std, len(present), len(vals) - len(present))
    return AggregateReport(out, len(reports))
