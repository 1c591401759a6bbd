import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tscloud.cloud import TriangularCloud, drops, envelope
from tscloud.errors import NoRuleFires
from tscloud.ts import (
    TsModel,
    TsRule,
    consequent_sigma,
    firing_strength,
    infer,
    normalize,
    sample_consequent,
)

C = TriangularCloud


def wide_rule(y, dim=1, he=0.0):
    return TsRule(tuple(C(0.0, 10.0, he) for _ in range(dim)), (y,) + (0.0,) * dim)


class TestRule:
    def test_sigma0_forced(self):
        r = TsRule((C(0, 1),), (1.0, 2.0), (5.0, 0.3))
        assert r.coeff_sigmas == (0.0, 0.3)

    @pytest.mark.parametrize("kwargs", [
        dict(antecedents=(), coeff_means=(1.0,)),
        dict(antecedents=(C(0, 1),), coeff_means=(1.0,)),
        dict(antecedents=(C(0, 1),), coeff_means=(1.0, 2.0), coeff_sigmas=(0.0, -1.0)),
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            TsRule(**kwargs)

    def test_model_dimension_mismatch(self):
        with pytest.raises(ValueError):
            TsModel((wide_rule(1.0, 1), wide_rule(1.0, 2)))


class TestFiring:
    def test_product(self):
        r = TsRule((C(0, 1), C(0, 1)), (0, 0, 0))
        assert firing_strength(r, [0.5, 0.6]) == pytest.approx(0.2)

    def test_peaks(self):
        r = TsRule((C(0.3, 1), C(-0.2, 1)), (0, 0, 0))
        assert firing_strength(r, [0.3, -0.2]) == 1.0

    def test_outside(self):
        r = TsRule((C(0, 1), C(0, 1)), (0, 0, 0))
        assert firing_strength(r, [0.2, 1.5]) == 0.0

    def test_dimension_error(self):
        with pytest.raises(ValueError):
            firing_strength(TsRule((C(0, 1),), (0, 0)), [0.1, 0.2])


class TestNormalize:
    def test_equal(self):
        np.testing.assert_array_equal(normalize([0.2, 0.2]).h, [0.5, 0.5])

    def test_single(self):
        np.testing.assert_array_equal(normalize([0.3]).h, [1.0])

    def test_none_fire(self):
        with pytest.raises(NoRuleFires):
            normalize([0.0, 0.0])

    def test_negative(self):
        with pytest.raises(ValueError):
            normalize([0.5, -0.1])

    @given(st.lists(st.floats(0, 1), min_size=1, max_size=8).filter(lambda w: sum(w) > 1e-6))
    def test_sum_one_and_ratios(self, w):
        h = normalize(w).h
        assert abs(h.sum() - 1.0) <= 1e-12
        assert (h >= 0).all()
        i = int(np.argmax(w))
        np.testing.assert_allclose(h * w[i], np.asarray(w) * h[i], rtol=1e-12, atol=1e-300)


class TestSigma:
    def test_equal_samples(self):
        assert consequent_sigma([0.4, 0.4, 0.4]) == 0.0

    def test_arithmetic(self):
        assert consequent_sigma([0.4, 0.7, 0.5]) == pytest.approx(0.3)

    def test_empty(self):
        with pytest.raises(ValueError):
            consequent_sigma([])

    def test_drop_spread_within_band(self):
        c = C(0.0, 1.0, 0.1)
        mu = drops(c, 0.4, 1000, np.random.default_rng(0))
        env = envelope(c, 0.4)
        assert 0 < consequent_sigma(mu) <= env.y2 - env.y1 + 1e-15


class TestSampleConsequent:
    def test_zero_sigma_exact(self):
        r = TsRule((C(0, 1), C(0, 1)), (1.0, 2.0, 3.0))
        np.testing.assert_array_equal(sample_consequent(r, np.random.default_rng(0)), [1.0, 2.0, 3.0])

    def test_a0_never_randomized(self):
        r = TsRule((C(0, 1),), (1.5, 2.0), (9.0, 1.0))
        for seed in range(50):
            assert sample_consequent(r, np.random.default_rng(seed))[0] == 1.5

    def test_mean(self):
        r = TsRule((C(0, 1),), (0.0, 2.0), (0.0, 0.5))
        rng = np.random.default_rng(1)
        a = np.array([sample_consequent(r, rng)[1] for _ in range(10_000)])
        assert abs(a.mean() - 2.0) < 3 * 0.5 / 100


class TestInfer:
    def test_single_rule_passthrough(self):
        r = TsRule((C(0, 1),), (2.0, 0.0))
        assert infer(TsModel((r,)), [0.3]) == 2.0

    def test_two_rule_average(self):
        m = TsModel((wide_rule(1.0), wide_rule(3.0)))
        assert infer(m, [0.4]) == 2.0

    def test_weighted(self):
        # memberships 1/4, 1/2, 1/4 at x = 0 from clouds centred at -0.75, 0.5, 0.75
        rules = (TsRule((C(-0.75, 1.0),), (0.0, 0.0)),
                 TsRule((C(0.5, 1.0),), (1.0, 0.0)),
                 TsRule((C(0.75, 1.0),), (2.0, 0.0)))
        assert infer(TsModel(rules), [0.0]) == pytest.approx(1.0, abs=1e-15)

    def test_linear_consequent(self):
        r = TsRule((C(0, 2), C(0, 2)), (1.0, 2.0, -1.0))
        assert infer(TsModel((r,)), [0.5, 0.25]) == pytest.approx(1.75)

    def test_no_rule_fires(self):
        with pytest.raises(NoRuleFires):
            infer(TsModel((TsRule((C(0, 1),), (1.0, 0.0)),)), [5.0])

    def test_stochastic_needs_rng(self):
        with pytest.raises(ValueError):
            infer(TsModel((wide_rule(1.0),)), [0.0], mode="stochastic")

    def test_zero_he_stochastic_matches(self):
        rules = tuple(TsRule((C(e, 1.0), C(-e, 1.0)), (e, 0.5, -0.3), (0.0, 0.2, 0.4))
                      for e in (-0.5, 0.0, 0.5))
        m = TsModel(rules)
        x = [0.1, -0.2]
        for seed in range(10):
            assert infer(m, x, np.random.default_rng(seed), "stochastic") == infer(m, x)

    def test_stochastic_reproducible(self):
        rules = (TsRule((C(0.0, 1.0, 0.1),), (0.0, 1.0)), TsRule((C(0.5, 1.0, 0.2),), (1.0, -1.0)))
        m = TsModel(rules)
        a = infer(m, [0.3], np.random.default_rng(5), "stochastic")
        b = infer(m, [0.3], np.random.default_rng(5), "stochastic")
        assert a == b

    @settings(max_examples=60)
    @given(st.lists(st.tuples(st.floats(-1, 1), st.floats(0.2, 2), st.floats(-5, 5)),
                    min_size=1, max_size=6),
           st.floats(-1, 1))
    def test_convex_and_permutation_invariant(self, spec, x):
        rules = [TsRule((C(ex, en),), (y, 0.0)) for ex, en, y in spec]
        fires = [firing_strength(r, [x]) > 0 for r in rules]
        if not any(fires):
            return
        out = infer(TsModel(tuple(rules)), [x])
        ys = [y for (_, _, y), f in zip(spec, fires) if f]
        assert min(ys) - 1e-12 <= out <= max(ys) + 1e-12
        assert infer(TsModel(tuple(rules[::-1])), [x]) == pytest.approx(out, abs=1e-12)
