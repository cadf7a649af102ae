"""
Mean-field equilibrium of the supermarket model with random sample sizes.

Every arriving customer draws a sample size ``L`` from a distribution ``mu``
over ``{1, ..., l_max}``, inspects ``L`` queues chosen uniformly at random and
joins the shortest. As the number of queues grows the fraction of queues with
at least ``k`` customers settles at

    r(0) = 1,    r(k) = lambda * u(r(k - 1)),    u(x) = sum_l mu(l) x**l

and a customer who samples ``l`` queues waits ``sum_k r(k)**l`` on average
(service included). The functions here evaluate that tail, the waiting time
and cost it implies, the marginal value of one extra sample, first-order
stochastic dominance between strategies, and the time-dependent mean-field
ODE whose fixed point the tail is.

All infinite sums are truncated at the smallest ``K`` with
``lambda**(K+1) / (1 - lambda) < tol``; since ``r(k) <= lambda**k`` that
quantity bounds the discarded mass.
"""

import enum
import math
from dataclasses import dataclass, field
from numbers import Real

import numpy as np

from ._validation import (
    check_arrival_rate,
    check_int,
    check_nonnegative,
    check_positive,
)
from .exceptions import StepSizeError

DEFAULT_TOL = 1e-12
NORMALIZATION_TOL = 1e-12

# Below this the recursion is indistinguishable from zero in double precision;
# stopping here also keeps the loop out of subnormal arithmetic.
_NEGLIGIBLE = 1e-300


@dataclass(frozen=True)
class GameParams:
    """Scalar parameters of the homogeneous supermarket game.

    Parameters
    ----------
    lambda_ : float
        Arrival rate per server, ``0 < lambda_ < 1``.
    c : float
        Cost per unit of waiting time, ``c > 0``.
    c_s : float
        Cost per sampled queue, ``c_s >= 0``.
    l_max : int
        Largest number of queues a customer may sample.
    """

    lambda_: float
    c: float
    c_s: float
    l_max: int

    def __post_init__(self):
        object.__setattr__(self, "lambda_", check_arrival_rate(self.lambda_))
        object.__setattr__(self, "c", check_positive(self.c, "c"))
        object.__setattr__(self, "c_s", check_nonnegative(self.c_s, "c_s"))
        object.__setattr__(self, "l_max", check_int(self.l_max, "l_max", minimum=1))

    @property
    def cost_ratio(self):
        """Sampling cost in units of waiting time, ``c_s / c``."""
        return self.c_s / self.c

    def to_dict(self):
        return {"lambda": self.lambda_, "c": self.c, "c_s": self.c_s, "l_max": self.l_max}


@dataclass(frozen=True, eq=False)
class SamplingDistribution:
    """Probability vector over sample sizes; ``mass[l - 1]`` is P(L = l)."""

    mass: np.ndarray

    def __post_init__(self):
        m = np.array(self.mass, dtype=float).ravel()
        if m.size == 0:
            raise ValueError("a sampling distribution needs at least one entry")
        if not np.all(np.isfinite(m)) or np.any(m < 0):
            raise ValueError("masses must be finite and nonnegative")
        total = m.sum()
        if abs(total - 1.0) > NORMALIZATION_TOL:
            raise ValueError(f"masses must sum to 1 (within {NORMALIZATION_TOL}), got {total!r}")
        m.setflags(write=False)
        object.__setattr__(self, "mass", m)

    @classmethod
    def point(cls, l, l_max):
        """Point mass at ``l`` (everybody samples exactly ``l`` queues)."""
        l_max = check_int(l_max, "l_max", minimum=1)
        l = check_int(l, "l", minimum=1, maximum=l_max)
        m = np.zeros(l_max)
        m[l - 1] = 1.0
        return cls(m)

    @classmethod
    def from_real(cls, x, l_max):
        """Two-point measure for a real sample size ``x`` in ``[1, l_max]``.

        ``x = floor(x) + p`` puts mass ``1 - p`` on ``floor(x)`` and ``p`` on
        ``floor(x) + 1``.
        """
        l_max = check_int(l_max, "l_max", minimum=1)
        if not isinstance(x, Real) or not math.isfinite(x) or not 1.0 <= x <= l_max:
            raise ValueError(f"real strategy must lie in [1, {l_max}], got {x!r}")
        lo = math.floor(x)
        p = x - lo
        m = np.zeros(l_max)
        m[lo - 1] = 1.0 - p
        if p > 0.0:
            m[lo] = p
        return cls(m)

    @property
    def l_max(self):
        return self.mass.size

    @property
    def support(self):
        """Sample sizes carrying positive mass, in increasing order."""
        return [int(i) + 1 for i in np.flatnonzero(self.mass > 0.0)]

    def to_real(self):
        """Inverse of :meth:`from_real`.

        Raises ValueError unless the support is one integer or two
        consecutive integers.
        """
        sup = self.support
        if len(sup) == 1:
            return float(sup[0])
        if len(sup) == 2 and sup[1] == sup[0] + 1:
            return sup[0] + float(self.mass[sup[1] - 1])
        raise ValueError(f"support {sup} is not one integer or two consecutive integers")

    def mean(self):
        return float(np.dot(np.arange(1, self.l_max + 1), self.mass))

    def upper_tail(self):
        """``out[l - 1] = sum_{j >= l} mu(j)``."""
        return np.cumsum(self.mass[::-1])[::-1]

    def cdf(self):
        return np.cumsum(self.mass)

    def quantile(self, u):
        """Smallest ``l`` with ``P(L <= l) >= u`` (generalized inverse CDF)."""
        idx = int(np.searchsorted(self.cdf(), u, side="left"))
        return min(idx, self.l_max - 1) + 1

    def allclose(self, other, atol=NORMALIZATION_TOL):
        return self.l_max == other.l_max and bool(np.allclose(self.mass, other.mass, rtol=0, atol=atol))

    def __repr__(self):
        return f"SamplingDistribution({np.array2string(self.mass, precision=6)})"


def as_distribution(mu, l_max=None):
    """Coerce a distribution, a real sample size or a mass sequence."""
    if isinstance(mu, SamplingDistribution):
        if l_max is not None and mu.l_max != l_max:
            raise ValueError(f"distribution has l_max={mu.l_max}, expected {l_max}")
        return mu
    if isinstance(mu, Real):
        if l_max is None:
            l_max = math.floor(mu) if float(mu).is_integer() else math.floor(mu) + 1
        return SamplingDistribution.from_real(mu, l_max)
    dist = SamplingDistribution(mu)
    if l_max is not None and dist.l_max != l_max:
        raise ValueError(f"distribution has l_max={dist.l_max}, expected {l_max}")
    return dist


@dataclass(frozen=True, eq=False)
class TailDistribution:
    """Truncated mean-field tail ``r(0..K)``.

    ``truncation_bound`` is a certified upper bound on ``sum_{k > K} r(k)``.
    """

    r: np.ndarray
    truncation_k: int
    truncation_bound: float
    lambda_: float = field(default=float("nan"))

    def __getitem__(self, k):
        return float(self.r[k]) if k <= self.truncation_k else 0.0

    def __len__(self):
        return self.r.size

    def power_sum(self, l):
        """``sum_k r(k)**l``, the mean wait of a customer sampling ``l`` queues."""
        return float(np.sum(self.r ** l))

    def marginal_sum(self, l):
        """``sum_k r(k)**l (1 - r(k))``, i.e. ``W(l) - W(l + 1)`` without cancellation."""
        return float(np.sum(self.r ** l * (1.0 - self.r)))

    def mean_queue_length(self):
        return float(np.sum(self.r[1:]))


class Ordering(enum.Enum):
    LE = "LE"
    GE = "GE"
    EQ = "EQ"
    INCOMPARABLE = "INCOMPARABLE"


def truncation_index(lambda_, tol=DEFAULT_TOL):
    """Smallest ``K`` with ``lambda**(K+1) / (1 - lambda) < tol``."""
    lam = check_arrival_rate(lambda_)
    tol = check_positive(tol, "tol")
    k = max(0, math.ceil(math.log(tol * (1.0 - lam)) / math.log(lam)) - 1)
    # repair the float rounding of the closed form in either direction
    while k > 0 and lam ** k / (1.0 - lam) < tol:
        k -= 1
    while lam ** (k + 1) / (1.0 - lam) >= tol:
        k += 1
    return k


def pgf_eval(mu, x):
    """Probability generating function ``sum_l mu(l) x**l`` for ``x`` in [0, 1]."""
    if not isinstance(x, Real) or not 0.0 <= x <= 1.0:
        raise ValueError(f"x must lie in [0, 1], got {x!r}")
    mu = as_distribution(mu)
    return _pgf(_support_pairs(mu), float(x))


def _support_pairs(mu):
    return [(l, float(mu.mass[l - 1])) for l in mu.support]


def _pgf(pairs, x):
    # u(1) = 1 by normalization; the float sum of masses can be an ulp short
    if x == 1.0:
        return 1.0
    return sum(p * x ** l for l, p in pairs)


def _tail_values(pairs, lam, k_max):
    r = np.zeros(k_max + 1)
    r[0] = x = 1.0
    for k in range(1, k_max + 1):
        x = lam * _pgf(pairs, x)
        if x < _NEGLIGIBLE:
            break
        r[k] = x
    return r


def tail_distribution(mu, lambda_, tol=DEFAULT_TOL):
    """Mean-field equilibrium tail ``r(k)`` for population strategy ``mu``.

    The forward recursion is exact; only the index range is truncated, at the
    smallest ``K`` whose geometric bound ``lambda**(K+1)/(1-lambda)`` is below
    ``tol``.

    Examples
    --------
    >>> t = tail_distribution(SamplingDistribution.point(2, 2), 0.9)
    >>> round(t[2], 12)
    0.729
    """
    lam = check_arrival_rate(lambda_)
    mu = as_distribution(mu)
    k = truncation_index(lam, tol)
    r = _tail_values(_support_pairs(mu), lam, k)
    r.setflags(write=False)
    return TailDistribution(r, k, lam ** (k + 1) / (1.0 - lam), lam)


def _check_l(l, l_max, minimum=1):
    return check_int(l, "l", minimum=minimum, maximum=l_max)


def expected_wait(l, mu, lambda_, tol=DEFAULT_TOL):
    """Mean time in system (service included) when sampling ``l`` queues."""
    mu = as_distribution(mu)
    l = _check_l(l, mu.l_max)
    return tail_distribution(mu, lambda_, tol).power_sum(l)


def expected_waits(tail, l_max):
    """Vector of ``E[W(l)]`` for ``l = 1..l_max`` from a precomputed tail."""
    return np.array([tail.power_sum(l) for l in range(1, l_max + 1)])


def total_cost(l, mu, params, tol=DEFAULT_TOL):
    """``c * E[W(l, mu)] + c_s * l``."""
    mu = as_distribution(mu, params.l_max)
    l = _check_l(l, params.l_max)
    return params.c * expected_wait(l, mu, params.lambda_, tol) + params.c_s * l


def cost_vector(tail, params):
    """``C(l, mu)`` for every ``l = 1..l_max`` given the population tail."""
    ls = np.arange(1, params.l_max + 1)
    return params.c * expected_waits(tail, params.l_max) + params.c_s * ls


def mixed_cost(mu_i, mu_other, params, tol=DEFAULT_TOL):
    """Expected cost of playing ``mu_i`` against a population playing ``mu_other``."""
    mu_i = as_distribution(mu_i, params.l_max)
    mu_other = as_distribution(mu_other, params.l_max)
    tail = tail_distribution(mu_other, params.lambda_, tol)
    return float(np.dot(mu_i.mass, cost_vector(tail, params)))


def marginal_value(l, mu, lambda_, tol=DEFAULT_TOL):
    """Reduction in mean wait from sampling ``l + 1`` queues instead of ``l``.

    By convention the value is ``math.inf`` at ``l = 0`` and exactly 0 at
    ``l = l_max``.
    """
    mu = as_distribution(mu)
    l = _check_l(l, mu.l_max, minimum=0)
    if l == 0:
        return math.inf
    if l == mu.l_max:
        return 0.0
    check_arrival_rate(lambda_)
    return tail_distribution(mu, lambda_, tol).marginal_sum(l)


def marginal_sums(masses, lambda_, l, tol=DEFAULT_TOL):
    """``V(l, mu_i)`` for every row ``mu_i`` of a mass matrix, in one pass.

    Runs the tail recursion for all rows at once and accumulates
    ``r**l (1 - r)`` on the fly; no tail is stored. Boundary conventions of
    :func:`marginal_value` are not applied here.
    """
    lam = check_arrival_rate(lambda_)
    masses = np.atleast_2d(np.asarray(masses, dtype=float))
    cols = [j for j in range(masses.shape[1]) if np.any(masses[:, j] > 0)]
    weights = [(j + 1, masses[:, j]) for j in cols]
    k_max = truncation_index(lam, tol)
    x = np.ones(masses.shape[0])
    total = np.zeros_like(x)
    for _ in range(k_max + 1):
        total += x ** l * (1.0 - x)
        u = np.zeros_like(x)
        for power, w in weights:
            u += w * x ** power
        u[x == 1.0] = 1.0
        x = lam * u
        x[x < _NEGLIGIBLE] = 0.0
        if not x.any():
            break
    return total


def marginal_values(tail, l_max):
    """``V(0..l_max)`` for a precomputed tail, with the boundary conventions."""
    v = np.empty(l_max + 1)
    v[0] = math.inf
    v[l_max] = 0.0
    for l in range(1, l_max):
        v[l] = tail.marginal_sum(l)
    return v


def stochastic_compare(mu1, mu2, atol=NORMALIZATION_TOL):
    """First-order stochastic ordering of two strategies.

    ``LE`` means ``mu1`` is dominated by ``mu2``: every upper-tail sum of
    ``mu1`` is at most the corresponding sum of ``mu2``.
    """
    mu1 = as_distribution(mu1)
    mu2 = as_distribution(mu2, mu1.l_max)
    d = mu1.upper_tail() - mu2.upper_tail()
    le = bool(np.all(d <= atol))
    ge = bool(np.all(d >= -atol))
    if le and ge:
        return Ordering.EQ
    if le:
        return Ordering.LE
    if ge:
        return Ordering.GE
    return Ordering.INCOMPARABLE


def strictly_dominated(mu1, mu2, atol=NORMALIZATION_TOL):
    """True when ``mu1 <=_st mu2`` and the two are not equal."""
    return stochastic_compare(mu1, mu2, atol) is Ordering.LE


# -- transient mean-field dynamics ------------------------------------------


@dataclass(frozen=True, eq=False)
class OdeTrajectory:
    times: np.ndarray
    tails: np.ndarray  # shape (len(times), K + 1)

    @property
    def final(self):
        return self.tails[-1]


def mean_field_rhs(r, mu, lambda_):
    """Drift of the mean-field ODE on the truncated range ``r(0..K)``.

    Level ``K + 1`` is taken to be empty; ``r(0)`` has zero drift.
    """
    mu = as_distribution(mu)
    r = np.asarray(r, dtype=float)
    pairs = _support_pairs(mu)
    arrivals = np.zeros_like(r)
    for l, p in pairs:
        rl = r ** l
        arrivals[1:] += p * (rl[:-1] - rl[1:])
    nxt = np.append(r[1:], 0.0)
    drift = lambda_ * arrivals - (r - nxt)
    drift[0] = 0.0
    return drift


def transient_ode(mu, lambda_, r0, t_end, dt=0.01, record_every=1, mono_tol=1e-9):
    """Integrate the mean-field ODE with classical fixed-step RK4.

    Parameters
    ----------
    mu : SamplingDistribution
        Population strategy.
    lambda_ : float
        Arrival rate per server.
    r0 : array_like
        Initial tail with ``r0[0] == 1``, nonincreasing. Its length fixes the
        truncated level range.
    t_end, dt : float
        Horizon and step size.
    record_every : int
        Keep every ``record_every``-th state (the final state is always kept).
    mono_tol : float
        A step whose result increases in ``k`` by more than this raises
        :class:`StepSizeError`.

    Returns
    -------
    OdeTrajectory
    """
    mu = as_distribution(mu)
    lam = check_arrival_rate(lambda_)
    dt = check_positive(dt, "dt")
    t_end = check_nonnegative(t_end, "t_end")
    record_every = check_int(record_every, "record_every", minimum=1)
    r = np.array(r0, dtype=float)
    if r.ndim != 1 or r.size < 2:
        raise ValueError("r0 must be a 1-d array with at least two levels")
    if r[0] != 1.0 or np.any(np.diff(r) > 0) or np.any(r < 0):
        raise ValueError("r0 must start at 1 and be nonnegative and nonincreasing")

    n_steps = int(math.ceil(t_end / dt - 1e-12))
    times = [0.0]
    states = [r.copy()]
    f = lambda x: mean_field_rhs(x, mu, lam)
    t = 0.0
    for step in range(1, n_steps + 1):
        h = min(dt, t_end - t)
        k1 = f(r)
        k2 = f(r + 0.5 * h * k1)
        k3 = f(r + 0.5 * h * k2)
        k4 = f(r + h * k3)
        r = r + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        r[0] = 1.0
        t += h
        if np.any(np.diff(r) > mono_tol):
            k = int(np.argmax(np.diff(r))) + 1
            raise StepSizeError(
                f"tail lost monotonicity at t={t:.6g}, level {k}; reduce dt (currently {dt})"
            )
        if step % record_every == 0 or step == n_steps:
            times.append(t)
            states.append(r.copy())
    return OdeTrajectory(np.array(times), np.array(states))
