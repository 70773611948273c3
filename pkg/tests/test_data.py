import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats
from scipy.special import expit

from fairtarget.data import (
    ColumnSpec,
    RowFilter,
    Schema,
    SplitSpec,
    SynthSpec,
    adult_recipe,
    apply_normalizer,
    calibrated_posterior,
    fit_normalizer,
    gen_synthetic,
    load_csv,
    propublica_recipe,
    split,
    write_csv,
)
from fairtarget.errors import (
    ConfigError,
    DegenerateSplit,
    EmptyAfterFiltering,
    ParseError,
    SchemaMismatch,
)

from .conftest import ADULT_PATH, COMPAS_PATH, make_dataset


def simple_schema(**kw):
    cols = (
        ColumnSpec("age", "continuous"),
        ColumnSpec("color", "categorical"),
        ColumnSpec("grp", "sensitive"),
        ColumnSpec("note", "drop"),
        ColumnSpec("label", "label"),
    )
    return Schema(columns=cols, positive_labels=("yes",), group0_values=("f",), **kw)


def write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


BASIC = """age,color,grp,note,label
30,a,f,x,yes
?,b,m,x,no
40,b,m,x,yes
50,a,f,x,no
35,a,m,?,no
"""


class TestLoadCsv:
    def test_drops_missing_and_encodes(self, tmp_path):
        ds = load_csv(write(tmp_path, BASIC), simple_schema())
        assert len(ds) == 4
        assert ds.source["dropped_missing"] == 1
        assert ds.feature_names == ("age", "color=a", "color=b")
        np.testing.assert_array_equal(ds.x[:, 1:], [[1, 0], [0, 1], [1, 0], [1, 0]])
        np.testing.assert_array_equal(ds.y, [1, 1, 0, 0])
        np.testing.assert_array_equal(ds.s, [0, 1, 0, 1])
        assert list(ds.continuous_mask) == [True, False, False]

    def test_one_hot_invariants(self, tmp_path):
        ds = load_csv(write(tmp_path, BASIC), simple_schema())
        onehot = ds.x[:, 1:]
        assert (onehot.sum(axis=1) == 1).all()
        assert onehot.shape[1] == 2  # distinct categories among kept rows

    def test_reuse_encoding(self, tmp_path):
        train = load_csv(write(tmp_path, BASIC), simple_schema())
        other = BASIC.replace("30,a,f", "30,c,f").replace("40,b", "40,a")
        ds = load_csv(write(tmp_path, other, "e.csv"), simple_schema(), train.encoding_meta)
        assert ds.feature_names == train.feature_names
        np.testing.assert_array_equal(ds.x[:, 1:], [[0, 0], [1, 0], [1, 0], [1, 0]])

    def test_parse_error_names_row_and_column(self, tmp_path):
        with pytest.raises(ParseError) as err:
            load_csv(write(tmp_path, BASIC.replace("40,b", "forty,b")), simple_schema())
        assert err.value.column == "age"
        assert err.value.row == 4

    def test_schema_mismatch(self, tmp_path):
        with pytest.raises(SchemaMismatch):
            load_csv(write(tmp_path, BASIC.replace("color", "colour")), simple_schema())

    def test_empty_after_filtering(self, tmp_path):
        schema = simple_schema(row_filters=(RowFilter("age", min=100),))
        with pytest.raises(EmptyAfterFiltering):
            load_csv(write(tmp_path, BASIC), schema)

    def test_row_filter(self, tmp_path):
        schema = simple_schema(row_filters=(RowFilter("age", max=45), RowFilter("note", exclude=("z",))))
        text = BASIC + "33,b,f,z,yes\n20,b,f,x,no\n"
        ds = load_csv(write(tmp_path, text), schema)
        assert ds.source["dropped_filtered"] + ds.source["dropped_missing"] == 3
        np.testing.assert_array_equal(ds.x[:, 0], [30, 40, 35, 20])

    def test_schema_round_trip(self, tmp_path):
        schema = propublica_recipe("gender")
        schema.save(tmp_path / "s.json")
        assert Schema.load(tmp_path / "s.json") == schema
        assert Schema.from_dict(adult_recipe().to_dict()) == adult_recipe()

    def test_bad_schema(self):
        with pytest.raises(SchemaMismatch):
            Schema(columns=(ColumnSpec("a", "continuous"), ColumnSpec("y", "label")), positive_labels=("1",),
                   group0_values=("x",))
        with pytest.raises(SchemaMismatch):
            ColumnSpec("a", "ordinal")


class TestNormalizer:
    def test_two_values(self):
        ds = make_dataset([[0.0], [2.0]], [0, 1], [0, 1])
        stats_ = fit_normalizer(ds)
        assert (stats_.means[0], stats_.scales[0]) == (1.0, 1.0)
        np.testing.assert_array_equal(apply_normalizer(stats_, ds).x[:, 0], [-1.0, 1.0])

    def test_constant_column(self):
        ds = make_dataset([[5.0], [5.0], [5.0], [5.0]], [0, 1, 0, 1], [0, 0, 1, 1])
        stats_ = fit_normalizer(ds)
        assert stats_.scales[0] == 1e-8
        assert not apply_normalizer(stats_, ds).x.any()

    def test_one_hot_untouched(self, tmp_path):
        ds = load_csv(write(tmp_path, BASIC), simple_schema())
        out = apply_normalizer(fit_normalizer(ds), ds)
        np.testing.assert_array_equal(out.x[:, 1:], ds.x[:, 1:])
        assert abs(out.x[:, 0].mean()) < 1e-10


def numbered(n):
    y = np.arange(n) % 2
    s = (np.arange(n) // 2) % 2
    return make_dataset(np.arange(n, dtype=float).reshape(-1, 1), y, s)


class TestSplit:
    def test_half(self):
        for seed in range(50):
            try:
                train, test = split(numbered(10), SplitSpec(0.5, seed))
            except DegenerateSplit:
                continue
            assert (len(train), len(test)) == (5, 5)
            return
        pytest.fail("no valid split found")

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32), st.floats(0.2, 0.8))
    def test_conservation_and_determinism(self, seed, frac):
        ds = numbered(40)
        try:
            a = split(ds, SplitSpec(frac, seed))
        except DegenerateSplit:
            return
        b = split(ds, SplitSpec(frac, seed))
        assert all(np.array_equal(p.x, q.x) for p, q in zip(a, b))
        ids = np.concatenate([a[0].x[:, 0], a[1].x[:, 0]])
        assert sorted(ids) == list(range(40))

    def test_degenerate(self):
        with pytest.raises(DegenerateSplit):
            split(numbered(4), SplitSpec(0.25, 0))

    def test_fraction_range(self):
        with pytest.raises(ConfigError):
            SplitSpec(1.0)


def mean_sigmoid(mu, sd, w, b):
    """E[sigmoid(w x + b)] for x ~ N(mu, sd^2) by quadrature."""
    f = lambda x: expit(w * x + b) * stats.norm.pdf(x, mu, sd)
    return integrate.quad(f, mu - 12 * sd, mu + 12 * sd)[0]


def within_3sigma(observed, p, n):
    return abs(observed - p) <= 3 * math.sqrt(p * (1 - p) / n)


class TestSynthetic:
    spec = SynthSpec(
        n_per_group=(5000, 5000),
        means=((-0.5,), (0.5,)),
        scales=(1.5,),
        weights=(2.0,),
        bias=-0.3,
        flip=((0.05, 0.3), (0.1, 0.0)),
        seed=12,
    )

    def test_rates_match_analytic(self):
        res = gen_synthetic(self.spec)
        for g in (0, 1):
            n = 5000
            true_p = mean_sigmoid(self.spec.means[g][0], 1.5, 2.0, -0.3)
            up, down = self.spec.flip[g]
            biased_p = up * (1 - true_p) + (1 - down) * true_p
            assert within_3sigma(res.rates[f"true_rate_s{g}"], true_p, n)
            assert within_3sigma(res.rates[f"biased_rate_s{g}"], biased_p, n)

    def test_flip_fraction(self):
        res = gen_synthetic(self.spec)
        s, yt, y = res.dataset.s, res.y_true, res.dataset.y
        sel = (s == 0) & (yt == 1)
        assert within_3sigma(float((y[sel] == 0).mean()), 0.3, int(sel.sum()))
        assert res.rates["flip_s1_ybar1"] == 0.0

    def test_no_flips(self):
        res = gen_synthetic(SynthSpec(n_per_group=(200, 200), seed=3))
        np.testing.assert_array_equal(res.dataset.y, res.y_true)

    def test_deterministic(self):
        a, b = gen_synthetic(self.spec), gen_synthetic(self.spec)
        assert np.array_equal(a.dataset.x, b.dataset.x) and np.array_equal(a.dataset.y, b.dataset.y)
        assert a.rates == b.rates

    def test_spec_round_trip(self):
        assert SynthSpec.from_dict(self.spec.to_dict()) == self.spec

    @pytest.mark.parametrize(
        "kw",
        [
            {"flip": ((1.0, 0.0), (0.0, 0.0))},
            {"weights": (1.0, 2.0)},
            {"features": "uniform"},
            {"features": "calibrated", "flip": ((0.3, 0.0), (0.0, 0.0))},
        ],
    )
    def test_invalid(self, kw):
        with pytest.raises(ConfigError):
            SynthSpec(**kw)

    def test_csv_round_trip(self, tmp_path):
        res = gen_synthetic(SynthSpec(n_per_group=(50, 60), seed=1))
        schema = write_csv(tmp_path / "syn.csv", res.dataset)
        back = load_csv(tmp_path / "syn.csv", schema)
        np.testing.assert_array_equal(back.x, res.dataset.x)
        np.testing.assert_array_equal(back.y, res.dataset.y)
        np.testing.assert_array_equal(back.s, res.dataset.s)


class TestCalibratedPosterior:
    @staticmethod
    def survival(u):
        if u < 0.25:
            return 1.0
        if u <= 0.5:
            return 1 / (4 * u)
        if u <= 0.75:
            return (1.5 - 2 * u) / (2 - 2 * u)
        return 0.0

    def test_inverse_survival(self):
        q = np.linspace(0.001, 0.999, 500)
        u = calibrated_posterior(q)
        assert np.allclose([self.survival(v) for v in u], q, atol=1e-12)

    def test_mean_half(self):
        mean = 0.25 + integrate.quad(self.survival, 0.25, 0.75, points=[0.5])[0]
        assert mean == pytest.approx(0.5, abs=1e-12)

    @pytest.mark.parametrize("t", [0.1, 0.2, 0.3, 0.4, 0.6, 0.8])
    def test_threshold_leaves_target_share(self, t):
        # a fitted targeted model accepts iff the observed posterior clears d0 + m/2
        p = 0.5
        if t >= p:
            d0, d1 = 0.0, p / t
        else:
            d0, d1 = (p - t) / (1 - t), 1.0
        assert self.survival(d0 + (d1 - d0) / 2) == pytest.approx(t, abs=1e-12)

    def test_generated_rates(self):
        spec = SynthSpec(n_per_group=(5000, 5000), flip=((0.1, 0.2), (0.2, 0.1)), features="calibrated", seed=4)
        res = gen_synthetic(spec)
        for g, (up, down) in enumerate(spec.flip):
            assert within_3sigma(res.rates[f"biased_rate_s{g}"], 0.5, 5000)
            true_p = (0.5 - up) / (1 - up - down)
            assert within_3sigma(res.rates[f"true_rate_s{g}"], true_p, 5000)


@pytest.mark.skipif(not ADULT_PATH.exists(), reason="Adult data file not available")
class TestAdultRecipe:
    @pytest.mark.parametrize("sensitive", ["race", "gender"])
    def test_counts(self, sensitive):
        schema = adult_recipe(sensitive)
        assert len(schema.feature_columns) == 12
        ds = load_csv(ADULT_PATH, schema)
        assert len(ds) == 30162
        assert ds.source["dropped_missing"] == 2399
        assert 0.2 < ds.y.mean() < 0.3

    def test_gender_group0_is_female(self):
        ds = load_csv(ADULT_PATH, adult_recipe("gender"))
        # women are about a third of the corpus and have the lower positive rate
        assert 0.3 < (ds.s == 0).mean() < 0.35
        assert ds.y[ds.s == 0].mean() < ds.y[ds.s == 1].mean()


@pytest.mark.skipif(not COMPAS_PATH.exists(), reason="COMPAS data file not available")
def test_compas_recipe():
    ds = load_csv(COMPAS_PATH, propublica_recipe("race"))
    assert len(ds) == 6167
    assert "priors_count" in ds.feature_names
    assert not any(n.startswith(("race", "sex")) for n in ds.feature_names)
    # black defendants carry the higher observed rearrest rate
    assert ds.y[ds.s == 0].mean() > ds.y[ds.s == 1].mean()
