"""
Best responses and Nash equilibria of the homogeneous supermarket game.

A strategy is a distribution over sample sizes; best responses and
equilibria are supported on one integer or two consecutive integers, so they
are reported as real numbers ``L + q`` (mass ``1 - q`` on ``L``, ``q`` on
``L + 1``). Everything rests on the threshold test

    integer L is a best response to mu  <=>  V(L, mu) <= c_s/c <= V(L-1, mu)
    L + q (0 < q < 1) is a best response <=> V(L, mu) == c_s/c

where ``V`` is the marginal value of sampling from :mod:`.mean_field`.
"""

import enum
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import bisect

from ._validation import check_int, check_positive, check_unit_interval
from .exceptions import EquilibriumError
from .mean_field import (
    DEFAULT_TOL,
    GameParams,
    SamplingDistribution,
    as_distribution,
    cost_vector,
    marginal_sums,
    marginal_values,
    tail_distribution,
)

TIE_RTOL = 1e-9
VERIFY_ATOL = 1e-9
MONOTONE_TOL = 1e-11
ROOT_XTOL = 1e-10


class BRKind(enum.Enum):
    SINGLE_INTEGER = "single_integer"
    SINGLE_MIXED = "single_mixed"
    INTERVAL = "interval"


@dataclass(frozen=True)
class BestResponseSet:
    """Best responses as the real interval ``[lo, hi]``.

    ``INTERVAL`` means ``hi == lo + 1``: both integers and every mixture of
    them are optimal.
    """

    lo: float
    hi: float
    kind: BRKind

    def __contains__(self, x):
        return self.lo - 1e-12 <= x <= self.hi + 1e-12

    @property
    def integers(self):
        return list(range(math.ceil(self.lo - 1e-12), math.floor(self.hi + 1e-12) + 1))


def _is_tie(v, ratio):
    return abs(v - ratio) <= TIE_RTOL * ratio


def _threshold_br(v, ratio):
    """Apply the threshold rule to ``v = V(0..l_max)``."""
    l_max = v.size - 1
    if ratio > 0:
        for l in range(1, l_max):
            if _is_tie(v[l], ratio):
                return BestResponseSet(float(l), float(l + 1), BRKind.INTERVAL)
    for l in range(1, l_max + 1):
        if v[l] <= ratio <= v[l - 1]:
            return BestResponseSet(float(l), float(l), BRKind.SINGLE_INTEGER)
    # unreachable: v decreases from +inf to 0
    raise EquilibriumError(f"no integer passes the threshold test for c_s/c={ratio}")


def best_response(mu, params, tol=DEFAULT_TOL):
    """Set of cost-minimizing sample sizes against population strategy ``mu``.

    Parameters
    ----------
    mu : SamplingDistribution or float
        Population strategy (a real number is read as a two-point measure).
    params : GameParams

    Returns
    -------
    BestResponseSet
    """
    mu = as_distribution(mu, params.l_max)
    tail = tail_distribution(mu, params.lambda_, tol)
    return _threshold_br(marginal_values(tail, params.l_max), params.cost_ratio)


def is_best_response(x, mu, params, atol=VERIFY_ATOL, tol=DEFAULT_TOL):
    """Threshold test for membership of the real strategy ``x`` in BR(mu)."""
    mu = as_distribution(mu, params.l_max)
    v = marginal_values(tail_distribution(mu, params.lambda_, tol), params.l_max)
    ratio = params.cost_ratio
    lo = math.floor(x)
    if x - lo <= 1e-12 or lo == params.l_max:
        return v[lo] - atol <= ratio <= v[lo - 1] + atol
    if math.ceil(x) - x <= 1e-12:
        lo = math.ceil(x)
        return v[lo] - atol <= ratio <= v[lo - 1] + atol
    return abs(v[lo] - ratio) <= atol


def is_nash(x, params, atol=VERIFY_ATOL, tol=DEFAULT_TOL):
    """True when the real strategy ``x`` is a best response to itself."""
    return is_best_response(x, SamplingDistribution.from_real(x, params.l_max), params, atol, tol)


def v_against(l, opponent, lambda_, l_max, tol=DEFAULT_TOL):
    """``V(l, opponent)`` with ``opponent`` a real number or a distribution."""
    mu = as_distribution(opponent, l_max)
    return marginal_values(tail_distribution(mu, lambda_, tol), l_max)[l]


def v_curve(l, lambda_, l_max, qs, tol=DEFAULT_TOL):
    """``V(l, l + q)`` for every ``q`` in ``qs`` (vectorized over ``qs``)."""
    qs = np.asarray(qs, dtype=float)
    if l == l_max:
        return np.zeros_like(qs)
    masses = np.zeros((qs.size, l_max))
    masses[:, l - 1] = 1.0 - qs
    if l < l_max:
        masses[:, l] = qs
    return marginal_sums(masses, lambda_, l, tol)


def find_nash(params, tol=DEFAULT_TOL):
    """One Nash equilibrium by the marginal-value procedure.

    (a) If ``V(l_max - 1, l_max) >= c_s/c`` return ``l_max``. Otherwise let
    ``L`` be the smallest integer with ``V(L, L + 1) < c_s/c``; (b1) return
    ``L`` if ``V(L, L) <= c_s/c``, else (b2) return ``L + q`` where
    ``V(L, L + q) = c_s/c`` (bisection in ``q``).

    Raises
    ------
    EquilibriumError
        If the result fails the best-response check (numerical pathology).
    """
    l_max, lam, ratio = params.l_max, params.lambda_, params.cost_ratio
    if l_max == 1:
        return 1.0
    v = lambda l, x: v_against(l, x, lam, l_max, tol)
    if v(l_max - 1, l_max) >= ratio:
        star = float(l_max)
    else:
        l_hat = next(l for l in range(1, l_max) if v(l, l + 1) < ratio)
        if v(l_hat, l_hat) <= ratio:
            star = float(l_hat)
        else:
            q = bisect(lambda q: v(l_hat, l_hat + q) - ratio, 0.0, 1.0, xtol=ROOT_XTOL)
            star = l_hat + q
    if not is_nash(star, params, tol=tol):
        raise EquilibriumError(f"L*={star!r} failed the best-response check for {params}")
    return star


class EquilibriumKind(enum.Enum):
    PURE = "pure"
    MIXED = "mixed"


class Monotonicity(enum.Enum):
    DECREASING = "decreasing"
    INCREASING = "increasing"
    NON_MONOTONE = "non-monotone"


@dataclass(frozen=True)
class Equilibrium:
    value: float
    kind: EquilibriumKind


@dataclass
class EquilibriumReport:
    """All equilibria found on a grid, with the local-monotonicity diagnosis.

    The monotonicity verdicts are grid evidence, not a proof.
    """

    params: GameParams
    equilibria: list
    monotonicity: dict
    unique_guaranteed: bool
    q_grid: int
    warnings: list = field(default_factory=list)

    @property
    def pure(self):
        return [e.value for e in self.equilibria if e.kind is EquilibriumKind.PURE]

    @property
    def mixed(self):
        return [e.value for e in self.equilibria if e.kind is EquilibriumKind.MIXED]

    def to_dict(self):
        return {
            "params": self.params.to_dict(),
            "q_grid": self.q_grid,
            "equilibria": [{"L": e.value, "kind": e.kind.value} for e in self.equilibria],
            "monotonicity": {str(l): m.value for l, m in self.monotonicity.items()},
            "unique_guaranteed": self.unique_guaranteed,
            "warnings": list(self.warnings),
        }


def _classify(v, tol=MONOTONE_TOL):
    # differences within +-tol are ties; an all-tie curve is judged by its endpoints
    d = np.diff(v)
    up, down = bool(np.any(d > tol)), bool(np.any(d < -tol))
    if up and down:
        return Monotonicity.NON_MONOTONE
    if down:
        return Monotonicity.DECREASING
    if up:
        return Monotonicity.INCREASING
    return Monotonicity.DECREASING if v[-1] <= v[0] else Monotonicity.INCREASING


def _q_points(q_grid):
    return np.linspace(0.0, 1.0, q_grid + 1)


def check_local_monotonicity(lambda_, l_max, q_grid=1000, tol=DEFAULT_TOL):
    """Classify ``q -> V(L, L + q)`` on ``[0, 1]`` for each ``L = 1..l_max-1``.

    Differences smaller than 1e-11 in absolute value are treated as ties.
    Returns a dict mapping ``L`` to a :class:`Monotonicity` verdict.
    """
    l_max = check_int(l_max, "l_max", minimum=1)
    q_grid = check_int(q_grid, "q_grid", minimum=100)
    qs = _q_points(q_grid)
    return {l: _classify(v_curve(l, lambda_, l_max, qs, tol)) for l in range(1, l_max)}


def _grid_roots(g, qs, f):
    """Interior roots of ``f`` from sign changes of ``g = f(qs)``, then bisection."""
    roots, suspicious = [], []
    n = g.size
    for i in range(n - 1):
        a, b = g[i], g[i + 1]
        if a == 0.0 and 0 < i:
            roots.append(float(qs[i]))
        elif a * b < 0:
            roots.append(bisect(f, qs[i], qs[i + 1], xtol=ROOT_XTOL))
    # a local extremum of g that nearly touches zero may hide two roots in one cell
    for i in range(1, n - 1):
        left, right = g[i] - g[i - 1], g[i + 1] - g[i]
        if left * right < 0 and abs(g[i]) < abs(left) + abs(right):
            if g[i - 1] * g[i] > 0 and g[i] * g[i + 1] > 0:
                suspicious.append(float(qs[i]))
    return roots, suspicious


def enumerate_nash(params, q_grid=1000, tol=DEFAULT_TOL):
    """Every pure equilibrium and every grid-detected mixed equilibrium.

    Pure: each integer ``L`` with ``V(L, L) <= c_s/c <= V(L-1, L)``. Mixed:
    each interior root of ``q -> V(L, L + q) - c_s/c`` located by a sign scan
    over ``q_grid`` cells per unit interval and refined by bisection.

    Returns
    -------
    EquilibriumReport
    """
    q_grid = check_int(q_grid, "q_grid", minimum=100)
    l_max, lam, ratio = params.l_max, params.lambda_, params.cost_ratio
    qs = _q_points(q_grid)
    notes = []

    found = []
    for l in range(1, l_max + 1):
        v = marginal_values(tail_distribution(SamplingDistribution.point(l, l_max), lam, tol), l_max)
        if v[l] <= ratio <= v[l - 1]:
            found.append(Equilibrium(float(l), EquilibriumKind.PURE))

    monotonicity = {}
    for l in range(1, l_max):
        curve = v_curve(l, lam, l_max, qs, tol)
        monotonicity[l] = _classify(curve)
        f = lambda q, l=l: v_against(l, l + q, lam, l_max, tol) - ratio
        roots, suspicious = _grid_roots(curve - ratio, qs, f)
        for q in roots:
            found.append(Equilibrium(l + q, EquilibriumKind.MIXED))
        if suspicious:
            msg = (
                f"V({l}, {l}+q) - c_s/c has a near-zero extremum at q={suspicious}; "
                f"q_grid={q_grid} may be too coarse to separate two roots"
            )
            warnings.warn(msg, RuntimeWarning, stacklevel=2)
            notes.append(msg)

    found.sort(key=lambda e: e.value)
    for e in found:
        if not is_nash(e.value, params, tol=tol):
            raise EquilibriumError(f"{e.kind.value} equilibrium {e.value!r} failed verification")
    unique = lam ** 2 <= 0.5 or all(m is Monotonicity.DECREASING for m in monotonicity.values())
    return EquilibriumReport(params, found, monotonicity, unique, q_grid, notes)


# -- social optimum -----------------------------------------------------------

_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def social_cost(s, params, tol=DEFAULT_TOL):
    """Total cost rate ``lambda * C(mu_s, mu_s)`` when everyone plays real ``s``."""
    mu = SamplingDistribution.from_real(s, params.l_max)
    tail = tail_distribution(mu, params.lambda_, tol)
    return params.lambda_ * float(np.dot(mu.mass, cost_vector(tail, params)))


def golden_section(f, a, b, tol):
    """Minimize ``f`` on ``[a, b]``; returns ``(x, f(x))`` for the best point seen."""
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = f(d)
    return (c, fc) if fc <= fd else (d, fd)


@dataclass(frozen=True)
class SocialOptimum:
    s: float
    cost: float
    ties: tuple = ()

    def to_dict(self):
        return {"s": self.s, "cost": self.cost, "ties": [list(t) for t in self.ties]}


def social_optimum(params, refine_tol=1e-8, coarse=16, tol=DEFAULT_TOL):
    """Symmetric strategy minimizing the population cost rate.

    Each unit interval ``[L, L + 1]`` is scanned on ``coarse + 1`` points and
    the best bracket is refined by golden section to ``refine_tol``. The tail
    is recomputed for every candidate since the population plays it too.
    Candidates within 1e-9 of the best cost are returned as ``ties``.
    """
    refine_tol = check_positive(refine_tol, "refine_tol")
    f = lambda s: social_cost(s, params, tol)
    candidates = {float(l): f(float(l)) for l in range(1, params.l_max + 1)}
    for l in range(1, params.l_max):
        xs = np.linspace(l, l + 1, coarse + 1)
        ys = [candidates.get(float(x)) if float(x) in candidates else f(float(x)) for x in xs]
        i = int(np.argmin(ys))
        a, b = xs[max(i - 1, 0)], xs[min(i + 1, coarse)]
        x, y = golden_section(f, float(a), float(b), refine_tol)
        candidates[x] = y
        candidates.setdefault(float(xs[i]), ys[i])
    best = min(candidates, key=candidates.get)
    best_cost = candidates[best]
    ties = sorted(
        (s, c) for s, c in candidates.items()
        if abs(c - best_cost) <= 1e-9 and abs(s - best) > 10 * refine_tol
    )
    return SocialOptimum(best, best_cost, tuple(ties))


# -- two-choice special case --------------------------------------------------


def two_choice_marginal_value(q, lambda_, tol=DEFAULT_TOL):
    """``V(1, 1 + q)`` computed from the two-choice tail ``u(x) = q x^2 + (1 - q) x``."""
    q = check_unit_interval(q, "q")
    k_max = tail_distribution(SamplingDistribution.point(1, 1), lambda_, tol).truncation_k
    r, total = 1.0, 0.0
    for _ in range(k_max + 1):
        total += r * (1.0 - r)
        r = lambda_ * (q * r * r + (1.0 - q) * r)
        if r < 1e-300:
            break
    return total


def two_choice_best_response(q, params, tol=DEFAULT_TOL):
    """Best response when everyone else samples two queues with probability ``q``.

    Returns sample size 1, sample size 2, or the whole interval ``[1, 2]``
    on a tie ``c_s/c == V(1, 1 + q)``.
    """
    if params.l_max != 2:
        raise ValueError(f"the two-choice game needs l_max=2, got {params.l_max}")
    v = two_choice_marginal_value(q, params.lambda_, tol)
    ratio = params.cost_ratio
    if ratio > 0 and _is_tie(v, ratio):
        return BestResponseSet(1.0, 2.0, BRKind.INTERVAL)
    if ratio > v:
        return BestResponseSet(1.0, 1.0, BRKind.SINGLE_INTEGER)
    return BestResponseSet(2.0, 2.0, BRKind.SINGLE_INTEGER)


def best_response_curve(params, xs, tol=DEFAULT_TOL):
    """``(x, lo, hi)`` rows of BR(x) for population strategies ``xs``."""
    rows = []
    for x in xs:
        br = best_response(float(x), params, tol)
        rows.append((float(x), br.lo, br.hi))
    return rows
