"""Acceptance criteria, one test each, with their tolerances and time limits.

Every test prints a single ``criterion N PASS|FAIL`` line; the lines are
repeated in the pytest terminal summary.
"""

import time

import numpy as np
import pytest

from supermarket.equilibrium import (
    Monotonicity,
    check_local_monotonicity,
    enumerate_nash,
    v_against,
)
from supermarket.hetero import CostDensity, hetero_best_response, hetero_nash
from supermarket.mean_field import GameParams, Ordering, SamplingDistribution, stochastic_compare, tail_distribution
from supermarket.sim import (
    chaoticity_gaps,
    coupled_config,
    deviation_gain_curve,
    mm2_wait,
    run_coupled_sim,
    two_server_externality,
)

from . import test_properties
from ._acceptance_log import LINES


class Check:
    """Times a criterion and reports one line when it is settled."""

    def __init__(self, number, title, limit, capsys):
        self.number, self.title, self.limit, self.capsys = number, title, limit, capsys
        self.start = time.perf_counter()

    def settle(self, ok, detail):
        elapsed = time.perf_counter() - self.start
        in_time = elapsed < self.limit
        passed = bool(ok) and in_time
        if not in_time:
            detail += f"; over the {self.limit:g}s limit"
        line = (f"criterion {self.number:>2} {'PASS' if passed else 'FAIL'} "
                f"[{elapsed:6.1f}s / {self.limit:g}s] {self.title}: {detail}")
        LINES.append(line)
        with self.capsys.disabled():
            print("\n" + line)
        assert passed, line


@pytest.fixture
def check(capsys):
    return lambda number, title, limit: Check(number, title, limit, capsys)


def test_criterion_01_geometric_tail(check):
    c = check(1, "M/M/1 tail is lambda^k", 1.0)
    worst = 0.0
    for lam in (0.3, 0.5, 0.9, 0.99):
        t = tail_distribution(SamplingDistribution.point(1, 1), lam)
        worst = max(worst, float(np.max(np.abs(t.r - lam ** np.arange(t.truncation_k + 1)))))
    c.settle(worst <= 1e-12, f"max |r(k) - lambda^k| = {worst:.2e} (tol 1e-12)")


def test_criterion_02_ten_choice_value(check):
    c = check(2, "r(2) for ten samples at 0.99", 1.0)
    r2 = tail_distribution(SamplingDistribution.point(10, 10), 0.99)[2]
    err = abs(r2 - 0.99 ** 11)
    c.settle(err <= 1e-12, f"r(2) = {r2:.15f}, |r(2) - 0.99^11| = {err:.2e}")


def test_criterion_03_marginal_value_rises_with_population(check):
    c = check(3, "V(5, L) strictly increasing over L = 11..16 at 0.99", 10.0)
    vs = [v_against(5, float(l), 0.99, 20) for l in range(11, 17)]
    diffs = np.diff(vs)
    c.settle(bool(np.all(diffs > 0)), f"smallest step {diffs.min():.3e}; V = {np.round(vs, 6).tolist()}")


def test_criterion_04_local_monotonicity_at_099(check):
    c = check(4, "V(L, L+q) decreasing in q for L = 1..9 at 0.99", 30.0)
    verdicts = check_local_monotonicity(0.99, 10, q_grid=1000)
    bad = {l: m.value for l, m in verdicts.items() if m is not Monotonicity.DECREASING}
    c.settle(not bad, "all decreasing" if not bad else f"not decreasing: {bad}")


def test_criterion_05_several_equilibria(check):
    c = check(5, "pure NE 19..24 with mixed NE between them at 0.999", 120.0)
    rep = enumerate_nash(GameParams(0.999, 1.0, 0.0148, 25), q_grid=1000)
    pure = rep.pure
    mixed = rep.mixed
    between = all(any(a < x < b for x in mixed) for a, b in zip(pure, pure[1:]))
    ok = pure == [19.0, 20.0, 21.0, 22.0, 23.0, 24.0] and between
    c.settle(ok, f"pure {pure}; mixed {np.round(mixed, 4).tolist()}")


def test_criterion_06_uniqueness_at_moderate_load(check):
    c = check(6, "exactly one NE for lambda^2 <= 1/2", 120.0)
    rng = np.random.Generator(np.random.PCG64(6))
    counts = []
    for lam in (0.3, 0.5, 0.7071):
        for ratio in 10.0 ** rng.uniform(-4, 1, size=50):
            counts.append(len(enumerate_nash(GameParams(lam, 1.0, float(ratio), 10)).equilibria))
    c.settle(set(counts) == {1}, f"{len(counts)} games, equilibrium counts {sorted(set(counts))}")


def test_criterion_07_structure_properties(check):
    c = check(7, "structural property suite, 200 cases each", 300.0)
    props = [
        test_properties.test_best_response_on_consecutive_integers,
        test_properties.test_tail_bound_and_dominance,
        test_properties.test_sampling_more_helps_everyone,
        test_properties.test_avoid_the_crowd_at_moderate_load,
        test_properties.test_no_equilibrium_above_social_optimum,
    ]
    failed = []
    for prop in props:
        try:
            prop()
        except Exception as e:  # report every property, not just the first
            failed.append(f"{prop.__name__}: {type(e).__name__}")
    c.settle(not failed, f"{len(props)} properties, failures: {failed or 'none'}")


def test_criterion_08_coupling_order(check):
    c = check(8, "coupled one- vs two-samplers keep their order", 60.0)
    reports = [run_coupled_sim(coupled_config(100, 0.9, 1000.0, seed=s), SamplingDistribution.point(1, 2),
                               SamplingDistribution.point(2, 2)) for s in range(3)]
    violations = sum(r.violations for r in reports)
    events = sum(r.events for r in reports)
    c.settle(violations == 0, f"{violations} violations over {events} events in 3 seeds")


def test_criterion_09_chaoticity(check):
    c = check(9, "tail gap to mean field shrinks with N", 300.0)
    horizons = {10: 2e5, 100: 2e4, 1000: 5e3}
    gaps = chaoticity_gaps(SamplingDistribution.point(2, 2), 0.9, [10, 100, 1000], horizons.get, seed=9)
    g = {x.n: x for x in gaps}
    ok = g[1000].gap < 0.02 and g[1000].gap < g[10].gap and all(x.stderr > 0 for x in gaps)
    detail = ", ".join(f"N={x.n}: {x.gap:.4f} +- {x.stderr:.4f}" for x in gaps)
    c.settle(ok, detail)


def test_criterion_10_two_server_externality(check):
    c = check(10, "join-the-shorter of two beats 1/(1-lambda^2) at 0.9", 120.0)
    rep = two_server_externality(0.9, horizon=4e6, seed=10)
    exact_half = mm2_wait(0.5) == 4 / 3
    ok = rep.w_hat.mean - 1 / 0.19 >= 3 * rep.w_hat.stderr and exact_half
    c.settle(ok, f"w_hat = {rep.w_hat.mean:.4f} +- {rep.w_hat.stderr:.4f} vs {1 / 0.19:.4f} "
                 f"(z = {rep.z_score:.1f}); M/M/2 at 0.5 = {mm2_wait(0.5)!r}")


def test_criterion_11_epsilon_nash_trend(check):
    c = check(11, "deviation gain at the NE shrinks with N", 600.0)
    params = GameParams(0.9, 1.0, 0.5, 4)
    # pure NE at 2 for this cost ratio
    assert enumerate_nash(params).pure == [2.0]
    mu = SamplingDistribution.point(2, 4)
    horizons = {10: 2e5, 100: 2e4, 1000: 3e3}
    pts = deviation_gain_curve(mu, 0.9, 1.0, 0.5, [10, 100, 1000], horizons.get, seed=11, tagged_fraction=0.02)
    trend = all(
        b.best_gain.mean <= a.best_gain.mean + 2 * np.hypot(a.best_gain.stderr, b.best_gain.stderr)
        for a, b in zip(pts, pts[1:])
    )
    last = pts[-1]
    small = last.best_gain.mean < 0.05 * last.equilibrium_cost.mean
    detail = ", ".join(f"N={p.n}: {p.best_gain.mean:+.4f} +- {p.best_gain.stderr:.4f} (l={p.best_l})" for p in pts)
    c.settle(trend and small, f"{detail}; 5% of cost = {0.05 * last.equilibrium_cost.mean:.4f}")


def test_criterion_12_heterogeneous_fixed_point(check):
    c = check(12, "heterogeneous NE verified, two starts unordered", 60.0)
    f = CostDensity.uniform(1.0)
    runs = [hetero_nash(0.5, 0.05, 3, f, init=SamplingDistribution.point(l, 3)) for l in (1, 3)]
    gaps = []
    for r in runs:
        br = hetero_best_response(r.mu, 0.5, 0.05, f)
        gaps.append(float(np.max(np.abs(br.thresholds - r.strategy.thresholds))))
    order = stochastic_compare(runs[0].mu, runs[1].mu, atol=1e-8)
    ok = all(r.converged for r in runs) and max(gaps) <= 1e-8 and order in (Ordering.EQ, Ordering.INCOMPARABLE)
    c.settle(ok, f"threshold gaps {[f'{g:.1e}' for g in gaps]}, induced mu order {order.value}, "
                 f"mu = {np.round(runs[0].mu.mass, 5).tolist()}")
