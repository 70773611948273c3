"""Debiasing parameters from target rates.

Each group ``i`` gets a pair ``(d0, d1)`` with ``dj = P(y=1 | ybar=j, s=i)``.
Every pair produced here satisfies the law of total probability

    d1 * P(ybar=1 | s=i) + d0 * (1 - P(ybar=1 | s=i)) = P(y=1 | s=i)

where ``P(ybar=1 | s=i)`` is the target positive rate (demographic parity)
or the positive rate induced by the TPR/TNR targets (equalized odds).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from .core import (
    Dataset,
    DebiasingParams,
    GroupRates,
    TargetKind,
    TargetSpec,
    validate_dataset,
)
from .errors import DegenerateLabels, DegenerateTarget, TargetOutOfRange


@dataclass(frozen=True)
class PrTargetResolution:
    resolved_pr: float
    strategy_used: str
    source_rates: GroupRates


@dataclass(frozen=True)
class TnrSelection:
    tnr_by_group: tuple[float, float]
    selected_tnr: float


def estimate_biased_rates(dataset: Dataset) -> GroupRates:
    """Empirical ``P(y=1 | s=i)`` per group."""
    rates, counts = [], []
    for g in (0, 1):
        labels = dataset.y[dataset.s == g]
        n = int(len(labels))
        if n == 0:
            validate_dataset(dataset)
        pos = int(labels.sum())
        p = Fraction(pos, n)
        if p in (0, 1):
            raise DegenerateLabels(f"group s={g} has biased rate {p}")
        rates.append(float(p))
        counts.append(n)
    return GroupRates(rates[0], rates[1], counts[0], counts[1])


def resolve_pr_target(rates: GroupRates, strategy: str | float) -> PrTargetResolution:
    """Turn ``avg``/``min``/``max`` (or an explicit value) into a number."""
    if isinstance(strategy, str):
        if strategy == "avg":
            value = 0.5 * (rates.p0 + rates.p1)
        elif strategy == "min":
            value = min(rates.p0, rates.p1)
        elif strategy == "max":
            value = max(rates.p0, rates.p1)
        else:
            raise TargetOutOfRange(f"unknown PR strategy {strategy!r}")
        return PrTargetResolution(value, strategy, rates)
    value = float(strategy)
    if not (math.isfinite(value) and 0.0 < value < 1.0):
        raise TargetOutOfRange(f"PR target {value} must lie strictly in (0, 1)")
    return PrTargetResolution(value, "explicit", rates)


def _check_rate(name: str, v: float, closed_right: bool = False) -> None:
    ok = 0.0 < v <= 1.0 if closed_right else 0.0 < v < 1.0
    if not (math.isfinite(v) and ok):
        interval = "(0, 1]" if closed_right else "(0, 1)"
        raise TargetOutOfRange(f"{name}={v} must lie in {interval}")


def debias_for_positive_rate(pr_target: float, biased_rate_p: float) -> tuple[float, float]:
    """``(d0, d1)`` for one group under a target positive rate.

    The biased TPR ``P(ybar=1 | y=1)`` is kept at 1 when the target rate is at
    least the biased rate; otherwise the biased TNR is kept at 1. Either way
    the remaining parameter follows from total probability.
    """
    _check_rate("pr_target", pr_target)
    _check_rate("biased_rate_p", biased_rate_p)
    if pr_target >= biased_rate_p:
        return 0.0, biased_rate_p / pr_target
    return (biased_rate_p - pr_target) / (1.0 - pr_target), 1.0


def induced_positive_rate(tpr_target: float, tnr_target: float, biased_rate_p: float) -> float:
    """``P(ybar=1 | s)`` implied by the TPR/TNR targets and the biased rate."""
    return (1.0 - tnr_target) * (1.0 - biased_rate_p) + tpr_target * biased_rate_p


def debias_for_tpr_tnr(
    tpr_target: float, tnr_target: float, biased_rate_p: float
) -> tuple[float, float]:
    """``(d0, d1)`` for one group under shared TPR/TNR targets.

    Rejects ``tpr + tnr < 1``: such targets would make a positive fair label
    lower the chance of a positive observed label.
    """
    _check_rate("tpr_target", tpr_target, closed_right=True)
    _check_rate("tnr_target", tnr_target, closed_right=True)
    _check_rate("biased_rate_p", biased_rate_p)
    if tpr_target + tnr_target < 1.0:
        raise DegenerateTarget(
            f"tpr_target + tnr_target = {tpr_target + tnr_target} < 1"
        )
    joint_pos = tpr_target * biased_rate_p  # P(ybar=1, y=1 | s)
    q1 = induced_positive_rate(tpr_target, tnr_target, biased_rate_p)
    if not 0.0 < q1 < 1.0:
        raise DegenerateTarget(f"induced positive rate {q1} is not in (0, 1)")
    d1 = min(1.0, joint_pos / q1)
    d0 = min(1.0, (biased_rate_p - joint_pos) / (1.0 - q1))
    return d0, d1


def select_target_tnr(baseline_tnr_s0: float, baseline_tnr_s1: float) -> TnrSelection:
    return TnrSelection(
        (float(baseline_tnr_s0), float(baseline_tnr_s1)),
        float(min(baseline_tnr_s0, baseline_tnr_s1)),
    )


def build_params(target: TargetSpec, rates: GroupRates) -> DebiasingParams:
    """Debiasing parameters for both groups from one resolved target."""
    if not target.is_resolved:
        raise TargetOutOfRange(f"target {target.to_dict()} still holds unresolved tags")
    if target.kind is TargetKind.NONE:
        return DebiasingParams.identity()
    if target.kind is TargetKind.POSITIVE_RATE:
        pairs = [debias_for_positive_rate(target.pr_target, rates.rate(g)) for g in (0, 1)]
    else:
        pairs = [
            debias_for_tpr_tnr(target.tpr_target, target.tnr_target, rates.rate(g))
            for g in (0, 1)
        ]
    (a0, a1), (b0, b1) = pairs
    return DebiasingParams(a0, a1, b0, b1)


def resolve_target(
    target: TargetSpec,
    rates: GroupRates,
    tnr_selection: TnrSelection | None = None,
) -> TargetSpec:
    """Replace strategy tags and ``auto`` with concrete numbers."""
    if target.kind is TargetKind.POSITIVE_RATE and isinstance(target.pr_target, str):
        return TargetSpec.positive_rate(resolve_pr_target(rates, target.pr_target).resolved_pr)
    if target.kind is TargetKind.TPR_TNR and target.tnr_target == "auto":
        if tnr_selection is None:
            raise TargetOutOfRange("TNR 'auto' needs a baseline TNR selection")
        return TargetSpec.tpr_tnr(target.tpr_target, tnr_selection.selected_tnr)
    return target


def target_positive_rates(target: TargetSpec, rates: GroupRates) -> tuple[float, float]:
    """``P(ybar=1 | s=i)`` for both groups under a resolved target."""
    if target.kind is TargetKind.NONE:
        return rates.p0, rates.p1
    if target.kind is TargetKind.POSITIVE_RATE:
        return target.pr_target, target.pr_target
    return tuple(
        induced_positive_rate(target.tpr_target, target.tnr_target, rates.rate(g))
        for g in (0, 1)
    )


def consistency_residual(
    params: DebiasingParams, target: TargetSpec, rates: GroupRates
) -> float:
    """Largest total-probability violation over both groups."""
    q = target_positive_rates(target, rates)
    worst = 0.0
    for g in (0, 1):
        d0, d1 = params.for_group(g)
        worst = max(worst, abs(d1 * q[g] + d0 * (1.0 - q[g]) - rates.rate(g)))
    return worst

