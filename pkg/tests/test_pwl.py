import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lcmartingale import (
    NEG_INF,
    EmpiricalMeasure,
    LogConcaveDensity,
    PiecewiseLinear,
    PWLConcave,
    cdf,
    eval_log,
    integrate_pwl_against,
    integrate_pwl_against_empirical,
    loss,
    normalize,
    quantile,
    segment_exp_integral,
    sup_diff,
)
from lcmartingale.pwl import SLOPE_SWITCH, _SERIES_SWITCH, exp_moments

from conftest import density_quad, quad_pieces, random_concave, random_pwl

# Frozen quadrature oracles (scipy.integrate.quad, epsrel 1e-14).
SEGMENT_0_2 = 2.5458689735775173  # int_0^2 exp(-0.3 + 0.5 x) dx
THREE_KNOT_MASS = 11.059830369402256  # knots (0,1,3), values (1,2,0)
THREE_KNOT_CDF_AT_1 = 0.42231879825151825
EXP_SLOPE_MEDIAN = 0.6864318320708271  # -log(1 - (1 - e^-5)/2)


def uniform(lo=0.0, hi=1.0):
    return normalize(PWLConcave([lo, hi], [0.0, 0.0]))


class TestConstruction:
    def test_rejects_single_knot(self):
        with pytest.raises(ValueError):
            PWLConcave([0.0], [0.0])

    def test_rejects_unsorted(self):
        with pytest.raises(ValueError):
            PWLConcave([0.0, 0.0, 1.0], [0.0, 0.0, 0.0])

    def test_rejects_nonconcave(self):
        with pytest.raises(ValueError):
            PWLConcave([0.0, 1.0, 2.0], [0.0, -1.0, 0.0])

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            PWLConcave([0.0, 1.0], [0.0, math.inf])

    def test_arrays_are_read_only(self):
        f = PWLConcave([0.0, 1.0], [0.0, 0.0])
        with pytest.raises(ValueError):
            f.values[0] = 1.0

    def test_empirical_merges_duplicates(self):
        fn = EmpiricalMeasure.from_sample([2.0, 1.0, 2.0, 3.0])
        assert fn.points.tolist() == [1.0, 2.0, 3.0]
        assert fn.weights.tolist() == [0.25, 0.5, 0.25]

    def test_empirical_weights_must_sum_to_one(self):
        with pytest.raises(ValueError):
            EmpiricalMeasure([0.0, 1.0], [0.5, 0.6])


class TestEvalLog:
    def test_constant(self):
        assert eval_log(PWLConcave([0, 1], [0, 0]), 0.5) == 0.0

    def test_outside_support(self):
        f = PWLConcave([0, 1], [0, 0])
        assert eval_log(f, 2.0) == NEG_INF
        assert eval_log(f, -1e-12) == NEG_INF

    def test_interpolates(self):
        assert eval_log(PWLConcave([0, 1], [0, 1]), 0.25) == 0.25

    def test_vectorised(self):
        out = eval_log(PWLConcave([0, 1], [0, 1]), [0.0, 0.5, 3.0])
        assert out.tolist() == [0.0, 0.5, NEG_INF]


class TestSegmentIntegral:
    def test_uniform(self):
        assert segment_exp_integral(0, 1, 0, 0) == 1.0

    def test_exp(self):
        assert segment_exp_integral(0, 1, 0, 1) == pytest.approx(math.e - 1, rel=1e-15)

    def test_quadrature_oracle(self):
        assert segment_exp_integral(0, 2, -0.3, 0.7) == pytest.approx(SEGMENT_0_2, rel=1e-12)

    @pytest.mark.parametrize("bad", [(0, 1, math.nan, 0), (0, math.inf, 0, 0), (1, 0, 0, 0)])
    def test_invalid(self, bad):
        with pytest.raises(ValueError):
            segment_exp_integral(*bad)

    @pytest.mark.parametrize("sign", [1.0, -1.0])
    @pytest.mark.parametrize("factor", [1 - 1e-3, 1 + 1e-3])
    def test_accurate_either_side_of_switch(self, sign, factor):
        d = sign * SLOPE_SWITCH * factor
        exact = math.exp(0.3) * math.expm1(d) / d
        assert segment_exp_integral(0, 1, 0.3, 0.3 + d) == pytest.approx(exact, rel=1e-12)


class TestMoments:
    @pytest.mark.parametrize("r,s", [(0.0, 0.0), (0.2, -3.0), (-1.0, 4.0), (1.0, 1.0 + 1e-7),
                                     (0.0, 0.0999), (0.0, -0.1001), (5.0, -40.0), (-2.0, 30.0)])
    def test_against_quadrature(self, r, s):
        got = exp_moments(r, s)
        for k in range(3):
            want = quad_pieces(lambda u: u**k * math.exp(r + (s - r) * u), [0.0, 1.0])
            assert got[k] == pytest.approx(want, rel=1e-11)

    @pytest.mark.parametrize("edge", [SLOPE_SWITCH, _SERIES_SWITCH])
    @pytest.mark.parametrize("sign", [1.0, -1.0])
    @pytest.mark.parametrize("factor", [1 - 1e-3, 1 + 1e-3])
    def test_accurate_either_side_of_switches(self, edge, sign, factor):
        r, s = 0.4, 0.4 + sign * edge * factor
        got = exp_moments(r, s)
        for k in range(3):
            want = quad_pieces(lambda u: u**k * math.exp(r + (s - r) * u), [0.0, 1.0])
            assert got[k] == pytest.approx(want, rel=1e-11)


class TestNormalize:
    def test_uniform_on_0_2(self):
        f = normalize(PWLConcave([0, 2], [0, 0]))
        np.testing.assert_allclose(f.values, [-math.log(2)] * 2, rtol=0, atol=1e-15)
        assert f.total_mass == pytest.approx(1.0, abs=1e-15)

    def test_idempotent(self):
        f = normalize(PWLConcave([0, 1, 3], [1, 2, 0]))
        g = normalize(f.shape)
        np.testing.assert_allclose(g.values, f.values, rtol=0, atol=1e-14)

    def test_three_knot_mass(self):
        raw = LogConcaveDensity.from_shape(PWLConcave([0, 1, 3], [1, 2, 0]))
        assert raw.total_mass == pytest.approx(THREE_KNOT_MASS, rel=1e-12)
        f = normalize(raw.shape)
        assert abs(f.total_mass - 1.0) <= 1e-12
        assert f.values[1] == pytest.approx(2 - math.log(THREE_KNOT_MASS), rel=1e-12)

    def test_segment_masses_match_quadrature(self, rng):
        for _ in range(20):
            f = normalize(random_concave(rng))
            for j, m in enumerate(f.segment_masses):
                a, b = f.knots[j], f.knots[j + 1]
                want = quad_pieces(lambda x: math.exp(np.interp(x, f.knots, f.values)), [a, b])
                assert m == pytest.approx(want, rel=1e-9)


class TestCdfQuantile:
    def test_uniform_cdf(self):
        assert cdf(uniform(), 0.25) == pytest.approx(0.25, abs=1e-15)

    def test_cdf_edges(self, rng):
        f = normalize(random_concave(rng))
        assert cdf(f, f.knots[-1]) == 1.0
        assert cdf(f, f.knots[0]) == 0.0
        assert cdf(f, f.knots[0] - 1) == 0.0
        assert cdf(f, f.knots[-1] + 1) == 1.0

    def test_three_knot_cdf(self):
        f = normalize(PWLConcave([0, 1, 3], [1, 2, 0]))
        assert cdf(f, 1.0) == pytest.approx(THREE_KNOT_CDF_AT_1, abs=1e-10)

    def test_cdf_against_quadrature(self, rng):
        for _ in range(20):
            f = normalize(random_concave(rng))
            for x in rng.uniform(*f.support, size=3):
                assert cdf(f, x) == pytest.approx(density_quad(f, upto=x), abs=1e-10)

    def test_uniform_median(self):
        assert quantile(uniform(), 0.5) == pytest.approx(0.5, abs=1e-15)

    def test_exponential_median(self):
        f = normalize(PWLConcave([0, 5], [0, -5]))
        q = quantile(f, 0.5)
        assert q == pytest.approx(EXP_SLOPE_MEDIAN, abs=1e-12)
        assert cdf(f, q) == pytest.approx(0.5, abs=1e-10)

    def test_boundaries(self, rng):
        f = normalize(random_concave(rng))
        assert quantile(f, 0.0) == f.knots[0]
        assert quantile(f, 1.0) == f.knots[-1]

    @pytest.mark.parametrize("u", [-0.1, 1.0 + 1e-12, math.nan])
    def test_invalid_level(self, u):
        with pytest.raises(ValueError):
            quantile(uniform(), u)

    def test_round_trip_grid(self, rng):
        u = np.linspace(0, 1, 1001)
        for _ in range(25):
            f = normalize(random_concave(rng, slope_scale=4.0))
            assert np.max(np.abs(cdf(f, quantile(f, u)) - u)) <= 1e-9

    def test_cdf_monotone(self, rng):
        f = normalize(random_concave(rng, k=6))
        x = np.linspace(f.knots[0] - 0.5, f.knots[-1] + 0.5, 5001)
        assert np.all(np.diff(cdf(f, x)) >= 0)

    @pytest.mark.parametrize("sign", [1.0, -1.0])
    @pytest.mark.parametrize("factor", [1 - 1e-3, 1 + 1e-3])
    def test_quantile_either_side_of_switch(self, sign, factor):
        u = np.linspace(0.01, 0.99, 50)
        d = sign * SLOPE_SWITCH * factor
        f = normalize(PWLConcave([0.0, 1.0], [0.0, d]))
        exact = np.log1p(u * math.expm1(d)) / d
        assert np.max(np.abs(quantile(f, u) - exact)) <= 1e-9


class TestIntegrals:
    def test_constant_g(self, rng):
        f = normalize(random_concave(rng))
        g = PiecewiseLinear(f.support, [1.0, 1.0])
        assert integrate_pwl_against(g, f) == pytest.approx(1.0, abs=1e-13)

    def test_uniform_mean(self):
        g = PiecewiseLinear([0, 1], [0, 1])
        assert integrate_pwl_against(g, uniform()) == pytest.approx(0.5, abs=1e-15)

    def test_three_knots_each(self):
        f = normalize(PWLConcave([0, 1, 3], [1, 2, 0]))
        g = PiecewiseLinear([-1, 0.5, 4], [2.0, -1.0, 3.0])
        want = density_quad(f, weight=lambda x: np.interp(x, g.knots, g.values))
        # split quadrature also at g's kink
        assert integrate_pwl_against(g, f) == pytest.approx(want, rel=1e-9)

    def test_g_must_cover_support(self):
        f = normalize(PWLConcave([0, 1, 3], [1, 2, 0]))
        with pytest.raises(ValueError):
            integrate_pwl_against(PiecewiseLinear([0.5, 3], [0, 0]), f)

    def test_random_against_quadrature(self, rng):
        for _ in range(30):
            f = normalize(random_concave(rng))
            g = random_pwl(rng, f.knots[0] - 0.1, f.knots[-1] + 0.2)
            breaks = np.union1d(f.knots, g.knots[(g.knots > f.knots[0]) & (g.knots < f.knots[-1])])
            want = quad_pieces(
                lambda x: np.interp(x, g.knots, g.values)
                * math.exp(np.interp(x, f.knots, f.values)), breaks)
            scale = density_quad(f, weight=lambda x: abs(np.interp(x, g.knots, g.values)))
            assert abs(integrate_pwl_against(g, f) - want) <= 1e-9 * scale

    def test_empirical_constant(self):
        fn = EmpiricalMeasure.from_sample([0.1, 0.7, 0.9])
        assert integrate_pwl_against_empirical(PiecewiseLinear([0, 1], [3.0, 3.0]), fn) \
            == pytest.approx(3.0, abs=1e-15)

    def test_empirical_mean(self):
        fn = EmpiricalMeasure.from_sample([0.0, 1.0])
        assert integrate_pwl_against_empirical(PiecewiseLinear([0, 1], [0, 1]), fn) == 0.5

    def test_empirical_direct_sum(self, rng):
        pts = np.sort(rng.uniform(0, 1, 10))
        w = rng.uniform(0.1, 1, 10)
        fn = EmpiricalMeasure(pts, w / w.sum())
        g = random_pwl(rng, 0.0, 1.0, k=5)
        direct = 0.0
        for p, wi in zip(fn.points, fn.weights):
            j = np.searchsorted(g.knots, p, side="right") - 1
            j = min(j, g.knots.size - 2)
            lam = (p - g.knots[j]) / (g.knots[j + 1] - g.knots[j])
            direct += wi * (g.values[j] + lam * (g.values[j + 1] - g.values[j]))
        assert integrate_pwl_against_empirical(g, fn) == pytest.approx(direct, rel=1e-14, abs=1e-15)

    def test_empirical_outside_domain(self):
        fn = EmpiricalMeasure.from_sample([0.0, 2.0])
        with pytest.raises(ValueError):
            integrate_pwl_against_empirical(PiecewiseLinear([0, 1], [0, 0]), fn)


class TestLoss:
    def test_uniform(self):
        fn = EmpiricalMeasure.from_sample([0.0, 1.0])
        assert loss(PWLConcave([0, 1], [0, 0]), fn) == -1.0

    def test_normalized_shape(self, rng):
        f = normalize(random_concave(rng))
        pts = np.sort(rng.uniform(*f.support, size=7))
        fn = EmpiricalMeasure.from_sample(pts)
        assert loss(f.shape, fn) == pytest.approx(
            integrate_pwl_against_empirical(f.shape, fn) - 1.0, abs=1e-12)

    def test_against_quadrature_and_sum(self, rng):
        for _ in range(10):
            g = random_concave(rng, k=4)
            pts = np.sort(rng.uniform(*g.support, size=5))
            fn = EmpiricalMeasure.from_sample(pts)
            direct = sum(np.interp(p, g.knots, g.values) for p in pts) / 5
            mass = quad_pieces(lambda x: math.exp(np.interp(x, g.knots, g.values)), g.knots)
            assert loss(g, fn) == pytest.approx(direct - mass, abs=1e-10 * (1 + mass))


class TestSupDiff:
    def test_equal(self, rng):
        g = random_concave(rng)
        assert sup_diff(g, g) == 0.0

    def test_shift(self, rng):
        g = random_concave(rng)
        assert sup_diff(g, g.shift(-0.37)) == pytest.approx(0.37, abs=1e-14)

    def test_grid_oracle(self, rng):
        for _ in range(10):
            g1 = random_concave(rng, lo=-1.0, hi=2.0)
            g2 = random_concave(rng, lo=-1.0, hi=2.0)
            grid = np.union1d(np.linspace(-1, 2, 100_000), np.union1d(g1.knots, g2.knots))
            dense = np.max(np.abs(np.interp(grid, g1.knots, g1.values)
                                  - np.interp(grid, g2.knots, g2.values)))
            assert sup_diff(g1, g2) == pytest.approx(dense, abs=1e-9)

    def test_mismatched_support(self):
        with pytest.raises(ValueError):
            sup_diff(PWLConcave([0, 1], [0, 0]), PWLConcave([0, 2], [0, 0]))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_random_concave_invariants(seed):
    rng = np.random.default_rng(seed)
    f = normalize(random_concave(rng, slope_scale=5.0))
    assert np.all(np.diff(f.shape.slopes) <= 1e-10 * (1 + np.abs(f.shape.slopes[1:])))
    assert abs(cdf(f, f.knots[-1]) - 1.0) <= 1e-10
    assert abs(math.fsum(f.segment_masses) - 1.0) <= 1e-8
    u = rng.uniform(size=20)
    x = quantile(f, u)
    assert np.all((x >= f.knots[0]) & (x <= f.knots[-1]))
    assert np.max(np.abs(cdf(f, x) - u)) <= 1e-9
