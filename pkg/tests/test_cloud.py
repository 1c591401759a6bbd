import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tscloud.cloud import (
    TriangularCloud,
    drop,
    drops,
    envelope,
    expected_curve,
    grid_max_width,
    max_width,
    sample_entropy,
    width,
)


@st.composite
def clouds(draw, with_he=True):
    ex = draw(st.floats(-5, 5))
    en = draw(st.floats(0.05, 5))
    he = draw(st.floats(0, en / 3 * 0.99)) if with_he else 0.0
    return TriangularCloud(ex, en, he)


class TestConstruction:
    def test_valid(self):
        c = TriangularCloud(0.0, 1.0, 0.1)
        assert c.narrow == pytest.approx(0.7)
        assert c.wide == pytest.approx(1.3)
        assert c.support() == (-1.0, 1.0)

    @pytest.mark.parametrize("args", [(0, 0, 0), (0, -1, 0), (0, 1, -0.1), (0, 1, 1 / 3),
                                      (np.nan, 1, 0), (0, np.inf, 0)])
    def test_invalid(self, args):
        with pytest.raises(ValueError):
            TriangularCloud(*args)


class TestExpectedCurve:
    @pytest.mark.parametrize("x, mu", [(0.0, 1.0), (0.5, 0.5), (2.0, 0.0), (-0.25, 0.75)])
    def test_values(self, x, mu):
        assert expected_curve(TriangularCloud(0.0, 1.0), x) == mu

    def test_vectorized(self):
        out = expected_curve(TriangularCloud(1.0, 2.0), np.array([1.0, 2.0, 3.0, 4.0]))
        np.testing.assert_array_equal(out, [1.0, 0.5, 0.0, 0.0])

    @given(clouds(), st.floats(-10, 10))
    def test_range_and_symmetry(self, c, d):
        a = expected_curve(c, c.ex + d)
        assert 0.0 <= a <= 1.0
        assert a == pytest.approx(expected_curve(c, c.ex - d), abs=1e-12)


class TestDrops:
    def test_zero_he_is_expected_curve(self):
        c = TriangularCloud(0.0, 1.0, 0.0)
        for seed in range(20):
            assert drop(c, 0.5, np.random.default_rng(seed)).mu == 0.5

    def test_peak_regardless_of_entropy(self):
        c = TriangularCloud(0.0, 1.0, 0.1)
        assert drop(c, 0.0, np.random.default_rng(3)).mu == 1.0

    def test_containment_many_seeds(self):
        c = TriangularCloud(0.0, 1.0, 0.1)
        env = envelope(c, 0.5)
        mus = [drop(c, 0.5, np.random.default_rng(s)).mu for s in range(10_000)]
        assert min(mus) >= env.y1 and max(mus) <= env.y2

    def test_entropy_clamped(self):
        c = TriangularCloud(0.0, 1.0, 0.3)
        en = sample_entropy(c, np.random.default_rng(0), size=100_000)
        assert en.min() >= c.narrow and en.max() <= c.wide
        assert abs(en.mean() - 1.0) < 0.01

    def test_seeded_reproducible(self):
        c = TriangularCloud(0.2, 0.8, 0.1)
        a = drops(c, np.linspace(-1, 1, 5), 50, np.random.default_rng(7))
        b = drops(c, np.linspace(-1, 1, 5), 50, np.random.default_rng(7))
        np.testing.assert_array_equal(a, b)
        assert a.shape == (50, 5)

    @settings(max_examples=50)
    @given(clouds(), st.floats(-1, 1), st.integers(0, 2**31))
    def test_containment_property(self, c, t, seed):
        x = c.ex + t * c.wide
        env = envelope(c, x)
        mu = drops(c, x, 200, np.random.default_rng(seed))
        assert (mu >= env.y1).all() and (mu <= env.y2).all()


class TestEnvelopeWidth:
    def test_peak(self):
        env = envelope(TriangularCloud(0.0, 1.0, 0.1), 0.0)
        assert (env.y1, env.y2) == (1.0, 1.0)

    def test_at_narrow_edge(self):
        env = envelope(TriangularCloud(0.0, 1.0, 0.1), 0.7)
        assert env.y1 == pytest.approx(0.0, abs=1e-15)
        assert env.y2 == pytest.approx(1 - 0.7 / 1.3, abs=1e-12)

    def test_zero_he_collapses(self):
        c = TriangularCloud(0.0, 1.0, 0.0)
        for x in np.linspace(-2, 2, 9):
            env = envelope(c, x)
            assert env.y1 == env.y2
        assert width(c, 0.3) == 0.0

    def test_width_at_third_level(self):
        c = TriangularCloud(0.0, 1.0, 0.1)
        x = (2 / 3) * 0.7
        assert width(c, x) == pytest.approx((1 - x / 1.3) - 1 / 3, abs=1e-12)
        assert width(c, x) == pytest.approx(max_width(c), abs=1e-12)

    @given(clouds())
    def test_zero_width_at_ex(self, c):
        assert width(c, c.ex) == 0.0

    @given(clouds(), st.floats(0, 3))
    def test_width_is_abs_difference_and_even(self, c, d):
        env = envelope(c, c.ex + d)
        assert width(c, c.ex + d) == abs(env.y1 - env.y2)
        assert width(c, c.ex + d) == pytest.approx(width(c, c.ex - d), abs=1e-12)


class TestMaxWidth:
    def test_reference_value(self):
        assert max_width(TriangularCloud(0.0, 1.0, 0.1)) == pytest.approx(0.307692, abs=1e-6)
        assert max_width(TriangularCloud(0.0, 1.0, 0.1)) == pytest.approx(2 / 3 - (2 / 3) * (0.7 / 1.3))

    def test_zero_he(self):
        assert max_width(TriangularCloud(3.0, 2.0, 0.0)) == 0.0

    def test_limit(self):
        d = max_width(TriangularCloud(0.0, 1.0, 1 / 3 - 1e-12))
        assert d < 2 / 3 and d == pytest.approx(2 / 3, abs=1e-9)

    @given(clouds())
    def test_range(self, c):
        assert 0.0 <= max_width(c) < 2 / 3

    def test_grid_maximum_sits_at_narrow_edge(self):
        # the pointwise band width grows towards the edge of the inner support,
        # so the dense-grid maximum is 1 - narrow/wide, not the third-level value
        c = TriangularCloud(0.0, 1.0, 0.1)
        w, x = grid_max_width(c)
        assert abs(x) == pytest.approx(0.7)
        assert w == pytest.approx(1 - 0.7 / 1.3, abs=1e-9)
