from fractions import Fraction

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from fairtarget.core import DebiasingParams, GroupRates, TargetSpec
from fairtarget.debias import (
    build_params,
    consistency_residual,
    debias_for_positive_rate,
    debias_for_tpr_tnr,
    estimate_biased_rates,
    resolve_pr_target,
    resolve_target,
    select_target_tnr,
    target_positive_rates,
)
from fairtarget.errors import DegenerateLabels, DegenerateTarget, TargetOutOfRange

from .conftest import make_dataset


# Oracle: build the joint table P(ybar, y | s) from the stated assumptions
# and read off P(y=1 | ybar=j) by conditioning. Exact rational arithmetic.

def joint_from_pr(pr_t, p):
    pr_t, p = Fraction(pr_t), Fraction(p)
    if pr_t >= p:
        # every y=1 keeps ybar=1; extra positives come from y=0
        return {(1, 1): p, (1, 0): pr_t - p, (0, 1): Fraction(0), (0, 0): 1 - pr_t}
    # every y=0 keeps ybar=0; the missing positives come from y=1
    return {(1, 1): pr_t, (1, 0): Fraction(0), (0, 1): p - pr_t, (0, 0): 1 - p}


def joint_from_rates(tpr, tnr, p):
    tpr, tnr, p = Fraction(tpr), Fraction(tnr), Fraction(p)
    return {
        (1, 1): tpr * p,
        (0, 1): (1 - tpr) * p,
        (0, 0): tnr * (1 - p),
        (1, 0): (1 - tnr) * (1 - p),
    }


def condition(joint):
    d = []
    for j in (0, 1):
        mass = joint[(j, 0)] + joint[(j, 1)]
        d.append(joint[(j, 1)] / mass)
    return tuple(float(v) for v in d)


def test_oracle_rows_sum_to_biased_rate():
    for joint, p in ((joint_from_pr("0.211", "0.156"), "0.156"), (joint_from_rates("0.6", "0.7", "0.5"), "0.5")):
        assert sum(joint.values()) == 1
        assert joint[(0, 1)] + joint[(1, 1)] == Fraction(p)


class TestEstimateRates:
    @pytest.mark.parametrize(
        "y0, y1, expected",
        [([1, 0], [1, 1, 0, 0], (0.5, 0.5)), ([1, 0, 0, 0], [1, 1, 1, 0], (0.25, 0.75))],
    )
    def test_counts(self, y0, y1, expected):
        y = y0 + y1
        s = [0] * len(y0) + [1] * len(y1)
        rates = estimate_biased_rates(make_dataset(np.zeros((len(y), 1)), y, s))
        assert (rates.p0, rates.p1) == expected
        assert (rates.n0, rates.n1) == (len(y0), len(y1))

    def test_degenerate(self):
        ds = make_dataset(np.zeros((4, 1)), [1, 1, 1, 0], [0, 0, 1, 1])
        with pytest.raises(DegenerateLabels):
            estimate_biased_rates(ds)

    def test_exact_thirds(self):
        rates = estimate_biased_rates(make_dataset(np.zeros((6, 1)), [1, 0, 0, 1, 1, 0], [0, 0, 0, 1, 1, 1]))
        assert rates.p0 == 1 / 3 and rates.p1 == 2 / 3


class TestResolvePr:
    rates = GroupRates(0.156, 0.267, 100, 100)

    def test_examples(self):
        assert resolve_pr_target(self.rates, "avg").resolved_pr == pytest.approx(0.2115, abs=1e-15)
        assert resolve_pr_target(self.rates, "min").resolved_pr == 0.156
        assert resolve_pr_target(self.rates, "max").resolved_pr == 0.267
        assert resolve_pr_target(self.rates, 0.3).strategy_used == "explicit"

    @pytest.mark.parametrize("tag", ["avg", "min", "max"])
    def test_symmetric(self, tag):
        assert resolve_pr_target(GroupRates(0.3, 0.3, 5, 5), tag).resolved_pr == 0.3

    @pytest.mark.parametrize("bad", [0.0, 1.0, 2.0, "mean"])
    def test_rejects(self, bad):
        with pytest.raises(TargetOutOfRange):
            resolve_pr_target(self.rates, bad)

    @given(st.floats(0.01, 0.99), st.floats(0.01, 0.99))
    def test_ordering(self, a, b):
        rates = GroupRates(a, b, 1, 1)
        lo, mid, hi = (resolve_pr_target(rates, t).resolved_pr for t in ("min", "avg", "max"))
        assert lo <= mid <= hi
        assert lo == min(a, b) and hi == max(a, b)


class TestPositiveRate:
    @pytest.mark.parametrize(
        "pr_t, p, golden",
        [("0.211", "0.156", (0.0, 0.73934)), ("0.211", "0.267", (0.07097, 1.0))],
    )
    def test_golden(self, pr_t, p, golden):
        got = debias_for_positive_rate(float(pr_t), float(p))
        oracle = condition(joint_from_pr(pr_t, p))
        assert got == pytest.approx(oracle, abs=1e-15)
        assert got == pytest.approx(golden, abs=1e-5)

    @given(st.floats(0.01, 0.99))
    def test_identity(self, p):
        assert debias_for_positive_rate(p, p) == (0.0, 1.0)

    @given(st.floats(0.01, 0.99), st.floats(0.01, 0.99))
    def test_consistency_and_range(self, pr_t, p):
        d0, d1 = debias_for_positive_rate(pr_t, p)
        assert 0.0 <= d0 <= d1 <= 1.0
        assert abs(d1 * pr_t + d0 * (1 - pr_t) - p) <= 1e-12

    @given(st.floats(0.01, 0.99), st.floats(0.01, 0.99), st.floats(0.01, 0.99))
    def test_monotone(self, p, a, b):
        lo, hi = sorted((a, b))
        assume(hi - lo > 1e-9)
        if lo >= p:
            assert debias_for_positive_rate(hi, p)[1] < debias_for_positive_rate(lo, p)[1]
        if hi < p:
            assert debias_for_positive_rate(hi, p)[0] < debias_for_positive_rate(lo, p)[0]

    @pytest.mark.parametrize("args", [(0.0, 0.3), (1.0, 0.3), (0.3, 0.0), (0.3, 1.0), (float("nan"), 0.3)])
    def test_rejects(self, args):
        with pytest.raises(TargetOutOfRange):
            debias_for_positive_rate(*args)


class TestTprTnr:
    @pytest.mark.parametrize(
        "tpr, tnr, p, golden",
        [("0.6", "0.7", "0.5", (0.36364, 0.66667)), ("0.9", "0.8", "0.4", (0.076923, 0.75))],
    )
    def test_golden(self, tpr, tnr, p, golden):
        got = debias_for_tpr_tnr(float(tpr), float(tnr), float(p))
        assert got == pytest.approx(condition(joint_from_rates(tpr, tnr, p)), abs=1e-15)
        assert got == pytest.approx(golden, abs=1e-5)

    @given(st.floats(0.01, 0.99))
    def test_identity(self, p):
        assert debias_for_tpr_tnr(1.0, 1.0, p) == (0.0, 1.0)

    @given(st.floats(0.01, 1.0), st.floats(0.01, 1.0), st.floats(0.01, 0.99))
    def test_consistency_and_range(self, tpr, tnr, p):
        assume(tpr + tnr >= 1.0)
        q1 = (1 - tnr) * (1 - p) + tpr * p
        assume(0.0 < q1 < 1.0)
        d0, d1 = debias_for_tpr_tnr(tpr, tnr, p)
        assert 0.0 <= d0 <= d1 <= 1.0
        assert abs(d1 * q1 + d0 * (1 - q1) - p) <= 1e-12

    def test_anti_correlated_targets_rejected(self):
        with pytest.raises(DegenerateTarget):
            debias_for_tpr_tnr(0.3, 0.4, 0.5)

    @pytest.mark.parametrize("args", [(0.0, 0.9, 0.5), (1.1, 0.9, 0.5), (0.9, 0.9, 1.0)])
    def test_rejects(self, args):
        with pytest.raises(TargetOutOfRange):
            debias_for_tpr_tnr(*args)


@pytest.mark.parametrize("a, b, want", [(0.70, 0.85, 0.70), (0.9, 0.9, 0.9), (0.85, 0.70, 0.70)])
def test_select_tnr(a, b, want):
    sel = select_target_tnr(a, b)
    assert sel.selected_tnr == want
    assert sel.tnr_by_group == (a, b)


class TestBuildParams:
    def test_none(self):
        params = build_params(TargetSpec.none(), GroupRates(0.2, 0.4, 5, 5))
        assert params == DebiasingParams(0.0, 1.0, 0.0, 1.0)

    def test_positive_rate(self):
        params = build_params(TargetSpec.positive_rate(0.211), GroupRates(0.156, 0.267, 5, 5))
        got = (params.d_y0_s0, params.d_y1_s0, params.d_y0_s1, params.d_y1_s1)
        assert got == pytest.approx((0.0, 0.73934, 0.07097, 1.0), abs=1e-5)

    def test_tpr_tnr(self):
        params = build_params(TargetSpec.tpr_tnr(0.6, 0.7), GroupRates(0.5, 0.5, 5, 5))
        assert params.for_group(0) == params.for_group(1)
        assert params.for_group(0) == pytest.approx((0.36364, 0.66667), abs=1e-5)

    def test_unresolved(self):
        with pytest.raises(TargetOutOfRange):
            build_params(TargetSpec.positive_rate("avg"), GroupRates(0.2, 0.4, 5, 5))

    @given(st.floats(0.01, 0.99), st.floats(0.01, 0.99), st.floats(0.01, 0.99))
    def test_residual_small(self, p0, p1, pr_t):
        rates = GroupRates(p0, p1, 1, 1)
        target = TargetSpec.positive_rate(pr_t)
        assert consistency_residual(build_params(target, rates), target, rates) < 1e-12


class TestResidual:
    def test_identity_zero(self):
        rates = GroupRates(0.3, 0.3, 1, 1)
        assert consistency_residual(DebiasingParams.identity(), TargetSpec.positive_rate(0.3), rates) == 0.0

    def test_corrupted(self):
        rates = GroupRates(0.156, 0.267, 1, 1)
        target = TargetSpec.positive_rate(0.211)
        good = build_params(target, rates)
        bad = DebiasingParams(good.d_y0_s0, good.d_y1_s0 + 0.1, good.d_y0_s1, good.d_y1_s1)
        assert consistency_residual(bad, target, rates) == pytest.approx(0.1 * 0.211, abs=1e-12)


def test_resolve_target_auto():
    rates = GroupRates(0.3, 0.4, 1, 1)
    spec = TargetSpec.tpr_tnr(0.8, "auto")
    with pytest.raises(TargetOutOfRange):
        resolve_target(spec, rates)
    resolved = resolve_target(spec, rates, select_target_tnr(0.9, 0.75))
    assert resolved == TargetSpec.tpr_tnr(0.8, 0.75)
    assert resolve_target(TargetSpec.positive_rate("max"), rates) == TargetSpec.positive_rate(0.4)


def test_target_positive_rates():
    rates = GroupRates(0.5, 0.4, 1, 1)
    assert target_positive_rates(TargetSpec.tpr_tnr(0.6, 0.7), rates)[0] == pytest.approx(0.45)
    assert target_positive_rates(TargetSpec.tpr_tnr(0.9, 0.8), rates)[1] == pytest.approx(0.48)
    assert target_positive_rates(TargetSpec.none(), rates) == (0.5, 0.4)
