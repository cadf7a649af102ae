import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from supermarket.equilibrium import (
    BRKind,
    EquilibriumKind,
    Monotonicity,
    _classify,
    _grid_roots,
    best_response,
    best_response_curve,
    check_local_monotonicity,
    enumerate_nash,
    find_nash,
    golden_section,
    is_best_response,
    is_nash,
    social_cost,
    social_optimum,
    two_choice_best_response,
    two_choice_marginal_value,
    v_against,
    v_curve,
)
from supermarket.mean_field import (
    GameParams,
    SamplingDistribution,
    marginal_value,
    mixed_cost,
    total_cost,
)

from .strategies import distributions


def argmin_set(mu, params, rtol=1e-9):
    """Oracle: integers minimizing total cost, by exhaustive evaluation."""
    costs = np.array([total_cost(l, mu, params) for l in range(1, params.l_max + 1)])
    best = costs.min()
    return [l + 1 for l in np.flatnonzero(costs <= best + rtol * abs(best))]


# -- best response -----------------------------------------------------------


class TestBestResponse:
    def test_expensive_sampling(self):
        br = best_response(SamplingDistribution.point(1, 3), GameParams(0.5, 1, 1, 3))
        assert (br.lo, br.hi, br.kind) == (1.0, 1.0, BRKind.SINGLE_INTEGER)

    def test_exact_tie(self):
        br = best_response(SamplingDistribution.point(1, 3), GameParams(0.5, 1, 2 / 3, 3))
        assert (br.lo, br.hi, br.kind) == (1.0, 2.0, BRKind.INTERVAL)
        assert 1.5 in br and br.integers == [1, 2]

    def test_five_against_twelve(self):
        mu = SamplingDistribution.point(12, 13)
        v4, v5 = marginal_value(4, mu, 0.99), marginal_value(5, mu, 0.99)
        params = GameParams(0.99, 1.0, 0.5 * (v4 + v5), 13)
        br = best_response(mu, params)
        assert (br.lo, br.kind) == (5.0, BRKind.SINGLE_INTEGER)
        assert argmin_set(mu, params) == [5]

    def test_free_sampling(self):
        br = best_response(SamplingDistribution([0.2, 0.3, 0.5]), GameParams(0.7, 1, 0, 3))
        assert br.lo == br.hi == 3.0

    def test_accepts_real_population(self):
        p = GameParams(0.9, 1.0, 0.3, 4)
        assert best_response(2.5, p) == best_response(SamplingDistribution.from_real(2.5, 4), p)

    @settings(max_examples=60)
    @given(distributions(min_l=2, max_l=6), st.floats(0.1, 0.97), st.floats(0.001, 3.0))
    def test_matches_exhaustive_argmin(self, mu, lam, ratio):
        p = GameParams(lam, 1.0, ratio, mu.l_max)
        br = best_response(mu, p)
        assert br.integers == argmin_set(mu, p) or br.kind is BRKind.INTERVAL
        assert br.hi - br.lo <= 1.0

    def test_membership_test(self):
        mu = SamplingDistribution.point(1, 3)
        p = GameParams(0.5, 1, 2 / 3, 3)
        assert is_best_response(1.0, mu, p)
        assert is_best_response(1.7, mu, p)
        assert is_best_response(2.0, mu, p)
        assert not is_best_response(2.5, mu, p)
        assert not is_best_response(3.0, mu, p)


# -- V curves ----------------------------------------------------------------


class TestCurves:
    def test_v_curve_matches_pointwise(self):
        qs = np.linspace(0, 1, 11)
        curve = v_curve(2, 0.95, 5, qs)
        for q, v in zip(qs, curve):
            assert v == pytest.approx(v_against(2, 2 + q, 0.95, 5), rel=1e-12)

    def test_v_curve_at_l_max(self):
        assert v_curve(3, 0.9, 3, [0.0, 0.5]).tolist() == [0.0, 0.0]

    def test_fig_one_shape(self):
        vs = [v_against(5, float(o), 0.99, 20) for o in range(11, 17)]
        assert all(b - a > 1e-11 for a, b in zip(vs, vs[1:]))

    def test_classify(self):
        assert _classify(np.array([3.0, 2.0, 1.0])) is Monotonicity.DECREASING
        assert _classify(np.array([1.0, 2.0, 3.0])) is Monotonicity.INCREASING
        assert _classify(np.array([1.0, 2.0, 1.5])) is Monotonicity.NON_MONOTONE
        # ties within 1e-11 do not break a verdict
        assert _classify(np.array([3.0, 3.0 + 5e-12, 2.0])) is Monotonicity.DECREASING
        assert _classify(np.array([1.0, 1.0, 1.0])) is Monotonicity.DECREASING

    def test_monotone_at_moderate_load(self):
        verdicts = check_local_monotonicity(0.7, 20, q_grid=200)
        assert set(verdicts) == set(range(1, 20))
        assert all(v is Monotonicity.DECREASING for v in verdicts.values())

    def test_increasing_near_saturation(self):
        verdicts = check_local_monotonicity(0.999, 25, q_grid=200)
        assert all(verdicts[l] is Monotonicity.INCREASING for l in range(18, 25))

    def test_q_grid_validated(self):
        with pytest.raises(ValueError):
            check_local_monotonicity(0.5, 3, q_grid=50)


# -- equilibria --------------------------------------------------------------


def fixed_point_scan(params, n=2001):
    """Oracle: grid points x with x in BR(x) by the cost-comparison test."""
    xs = np.linspace(1, params.l_max, n)
    hits = []
    for x in xs:
        mu = SamplingDistribution.from_real(float(x), params.l_max)
        if float(x) in argmin_set(mu, params) or math.floor(x) == x and int(x) in argmin_set(mu, params):
            hits.append(float(x))
    return hits


class TestFindNash:
    @pytest.mark.parametrize("lam", [0.3, 0.9, 0.99])
    def test_free_sampling_goes_to_l_max(self, lam):
        assert find_nash(GameParams(lam, 1, 0, 4)) == 4.0

    def test_expensive_sampling(self):
        p = GameParams(0.5, 1, 1, 4)
        assert find_nash(p) == 1.0
        assert fixed_point_scan(p, 301) == [1.0]

    def test_mixed_root(self):
        p = GameParams(0.9, 1.0, 1.0, 4)
        x = find_nash(p)
        assert 1 < x < 2
        assert v_against(1, x, 0.9, 4) == pytest.approx(1.0, abs=1e-8)
        assert is_nash(x, p)

    def test_saturated_example(self):
        x = find_nash(GameParams(0.999, 1, 0.0148, 25))
        assert 19 <= x <= 24
        assert is_nash(x, GameParams(0.999, 1, 0.0148, 25))

    def test_single_queue_game(self):
        assert find_nash(GameParams(0.5, 1, 0.1, 1)) == 1.0


class TestEnumerateNash:
    def test_expensive_sampling_single_pure(self):
        rep = enumerate_nash(GameParams(0.5, 1, 1.0, 4), q_grid=100)
        assert [(e.value, e.kind) for e in rep.equilibria] == [(1.0, EquilibriumKind.PURE)]
        assert rep.unique_guaranteed

    @pytest.mark.parametrize("ratio", [0.01, 0.05, 0.2, 0.7, 2.0])
    def test_unique_at_moderate_load(self, ratio):
        rep = enumerate_nash(GameParams(0.7, 1, ratio, 10), q_grid=200)
        assert len(rep.equilibria) == 1
        assert rep.unique_guaranteed

    def test_several_equilibria_where_monotonicity_fails(self):
        # V(8, 8+q) dips and recovers at this load, so a cost ratio inside
        # the dip crosses the curve twice
        lam, l_max = 0.99, 10
        qs = np.linspace(0, 1, 1001)
        curve = v_curve(8, lam, l_max, qs)
        ratio = 0.5 * (curve.min() + min(curve[0], curve[-1]))
        rep = enumerate_nash(GameParams(lam, 1, ratio, l_max))
        assert rep.monotonicity[8] is Monotonicity.NON_MONOTONE
        assert not rep.unique_guaranteed
        assert len(rep.equilibria) >= 2
        for e in rep.equilibria:
            assert is_nash(e.value, rep.params)

    def test_report_serializes(self):
        rep = enumerate_nash(GameParams(0.5, 1, 0.1, 3), q_grid=100)
        d = rep.to_dict()
        assert d["params"]["lambda"] == 0.5
        assert d["monotonicity"] == {"1": "decreasing", "2": "decreasing"}
        assert d["equilibria"][0]["kind"] in ("pure", "mixed")

    def test_find_nash_is_enumerated(self):
        p = GameParams(0.9, 1.0, 0.3, 4)
        rep = enumerate_nash(p, q_grid=200)
        x = find_nash(p)
        assert min(abs(e.value - x) for e in rep.equilibria) < 1e-8

    def test_coarse_grid_warning(self):
        qs = np.linspace(0, 1, 11)
        f = lambda q: (q - 0.52) ** 2 - 1e-6
        g = np.array([f(q) for q in qs])
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            roots, suspicious = _grid_roots(g, qs, f)
        assert roots == [] and suspicious == [0.5]


# -- social optimum ----------------------------------------------------------


class TestSocialOptimum:
    def test_golden_section(self):
        x, fx = golden_section(lambda x: (x - 0.3) ** 2, 0.0, 1.0, 1e-10)
        assert x == pytest.approx(0.3, abs=1e-8)

    def test_free_sampling(self):
        assert social_optimum(GameParams(0.8, 1, 0, 4)).s == pytest.approx(4.0)

    def test_expensive_sampling(self):
        assert social_optimum(GameParams(0.8, 1, 50.0, 4)).s == pytest.approx(1.0)

    def test_objective_is_self_consistent(self):
        p = GameParams(0.9, 1.0, 0.3, 3)
        mu = SamplingDistribution.from_real(2.4, 3)
        assert social_cost(2.4, p) == pytest.approx(0.9 * mixed_cost(mu, mu, p))

    def test_beats_grid(self):
        p = GameParams(0.9, 1.0, 0.3, 4)
        opt = social_optimum(p)
        grid = min(social_cost(float(s), p) for s in np.linspace(1, 4, 301))
        assert opt.cost <= grid + 1e-12

    def test_no_equilibrium_above(self):
        p = GameParams(0.95, 1.0, 0.05, 6)
        s = social_optimum(p).s
        for e in enumerate_nash(p, q_grid=200).equilibria:
            assert e.value <= s + 1e-8


# -- two-choice game ---------------------------------------------------------


class TestTwoChoice:
    def test_examples(self):
        assert two_choice_best_response(0.0, GameParams(0.5, 1, 1.0, 2)).lo == 1.0
        assert two_choice_best_response(0.0, GameParams(0.5, 1, 0.5, 2)).lo == 2.0

    def test_marginal_value_matches_general_code(self):
        for q in (0.0, 0.3, 1.0):
            assert two_choice_marginal_value(q, 0.9) == pytest.approx(v_against(1, 1 + q, 0.9, 2), rel=1e-12)

    def test_root_is_interval(self):
        lam, ratio = 0.9, 1.5
        qs = np.linspace(0, 1, 100001)
        g = np.array([two_choice_marginal_value(q, lam) for q in qs[::100]]) - ratio
        i = int(np.flatnonzero(np.sign(g[:-1]) != np.sign(g[1:]))[0])
        fine = np.linspace(qs[100 * i], qs[100 * (i + 1)], 1001)
        h = np.array([two_choice_marginal_value(q, lam) for q in fine]) - ratio
        j = int(np.flatnonzero(np.sign(h[:-1]) != np.sign(h[1:]))[0])
        q_star = 0.5 * (fine[j] + fine[j + 1])
        p = GameParams(lam, 1.0, ratio, 2)
        from scipy.optimize import brentq

        q_root = brentq(lambda q: two_choice_marginal_value(q, lam) - ratio, fine[j], fine[j + 1], xtol=1e-14)
        assert abs(q_root - q_star) < 1e-6
        assert two_choice_best_response(q_root, p).kind is BRKind.INTERVAL

    def test_needs_two(self):
        with pytest.raises(ValueError):
            two_choice_best_response(0.5, GameParams(0.5, 1, 1, 3))

    @settings(max_examples=60)
    @given(st.floats(0, 1), st.floats(0.1, 0.97), st.floats(0.01, 3.0))
    def test_agrees_with_general_best_response(self, q, lam, ratio):
        p = GameParams(lam, 1.0, ratio, 2)
        assert two_choice_best_response(q, p) == best_response(1.0 + q, p)


def test_best_response_curve_rows():
    rows = best_response_curve(GameParams(0.9, 1, 0.3, 3), [1.0, 2.0, 3.0])
    assert [r[0] for r in rows] == [1.0, 2.0, 3.0]
    assert all(1 <= lo <= hi <= 3 for _, lo, hi in rows)
