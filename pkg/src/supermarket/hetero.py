"""
Supermarket game with heterogeneous waiting costs.

Each customer's waiting cost ``c`` is drawn from a density ``f`` on
``[0, c_max]``; the sampling cost ``c_s`` is common. A pure strategy maps a
cost to a sample size, and best responses are nondecreasing step functions,
so a strategy is stored as its jump points

    0 = c_0 <= c_1 <= ... <= c_{l_max} = c_max,   sample l on [c_{l-1}, c_l)

Jump points and distributions over sample sizes determine each other through
``mu(l) = F(c_l) - F(c_{l-1})``. Against a population distribution ``mu`` the
best-response jump points are ``c_j = c_s / V(j, mu)``, clamped to the
support.
"""

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_arrival_rate, check_int, check_nonnegative, check_positive
from .mean_field import (
    DEFAULT_TOL,
    SamplingDistribution,
    as_distribution,
    marginal_values,
    tail_distribution,
)

DENSITY_TOL = 1e-10
FIXED_POINT_TOL = 1e-9
VERIFY_TOL = 1e-8


class DensityKind(enum.Enum):
    UNIFORM = "uniform"
    PIECEWISE_LINEAR = "piecewise_linear"


@dataclass(frozen=True, eq=False)
class CostDensity:
    """Waiting-cost density on ``[0, c_max]``, uniform or piecewise linear.

    For ``PIECEWISE_LINEAR``, ``knots`` holds ``(position, density)`` pairs
    with positions increasing from 0 to ``c_max``; the density is linear
    between knots and must integrate to 1.
    """

    kind: DensityKind
    c_max: float
    knots: tuple = ()

    def __post_init__(self):
        kind = DensityKind(self.kind)
        object.__setattr__(self, "kind", kind)
        c_max = check_positive(self.c_max, "c_max")
        object.__setattr__(self, "c_max", c_max)
        if kind is DensityKind.UNIFORM:
            knots = ((0.0, 1.0 / c_max), (c_max, 1.0 / c_max))
        else:
            knots = tuple((float(x), float(y)) for x, y in self.knots)
            if len(knots) < 2:
                raise ValueError("a piecewise-linear density needs at least two knots")
        xs = np.array([k[0] for k in knots])
        ys = np.array([k[1] for k in knots])
        if xs[0] != 0.0 or abs(xs[-1] - c_max) > 1e-12:
            raise ValueError(f"knots must span [0, c_max=[{c_max}]], got [{xs[0]}, {xs[-1]}]")
        if np.any(np.diff(xs) <= 0):
            raise ValueError("knot positions must be strictly increasing")
        if np.any(ys < 0) or not np.all(np.isfinite(ys)):
            raise ValueError("density values must be finite and nonnegative")
        areas = 0.5 * (ys[:-1] + ys[1:]) * np.diff(xs)
        if abs(areas.sum() - 1.0) > DENSITY_TOL:
            raise ValueError(f"density integrates to {areas.sum()!r}, not 1")
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "_xs", xs)
        object.__setattr__(self, "_ys", ys)
        object.__setattr__(self, "_cum", np.concatenate([[0.0], np.cumsum(areas)]))

    @classmethod
    def uniform(cls, c_max=1.0):
        return cls(DensityKind.UNIFORM, c_max)

    @classmethod
    def piecewise_linear(cls, knots, normalize=False):
        knots = [(float(x), float(y)) for x, y in knots]
        if normalize:
            xs = np.array([k[0] for k in knots])
            ys = np.array([k[1] for k in knots])
            area = float(np.sum(0.5 * (ys[:-1] + ys[1:]) * np.diff(xs)))
            knots = [(x, y / area) for x, y in knots]
        return cls(DensityKind.PIECEWISE_LINEAR, knots[-1][0], tuple(knots))

    @classmethod
    def from_config(cls, config):
        """Build from ``{"kind": "uniform", "c_max": 1}`` or
        ``{"kind": "piecewise_linear", "knots": [[x, f], ...]}``."""
        unknown = set(config) - {"kind", "c_max", "knots", "normalize"}
        if unknown:
            raise ValueError(f"unknown density keys: {sorted(unknown)}")
        kind = DensityKind(config.get("kind", "uniform"))
        if kind is DensityKind.UNIFORM:
            return cls.uniform(config.get("c_max", 1.0))
        return cls.piecewise_linear(config["knots"], normalize=config.get("normalize", False))

    def to_config(self):
        if self.kind is DensityKind.UNIFORM:
            return {"kind": "uniform", "c_max": self.c_max}
        return {"kind": "piecewise_linear", "knots": [list(k) for k in self.knots]}

    def pdf(self, c):
        return np.interp(c, self._xs, self._ys, left=0.0, right=0.0)

    def cdf(self, c):
        """Exact integral of the density from 0 to ``c``."""
        c = min(max(float(c), 0.0), self.c_max)
        i = min(int(np.searchsorted(self._xs, c, side="right")) - 1, self._xs.size - 2)
        t = c - self._xs[i]
        slope = (self._ys[i + 1] - self._ys[i]) / (self._xs[i + 1] - self._xs[i])
        return float(self._cum[i] + self._ys[i] * t + 0.5 * slope * t * t)

    def has_gaps(self):
        """True when the density vanishes on an interval inside the support."""
        ys = self._ys
        return bool(np.any((ys[:-1] == 0.0) & (ys[1:] == 0.0)))

    def quantile(self, p):
        """Inverse of :meth:`cdf`, solving the segment quadratic in closed form."""
        if p <= 0.0:
            return 0.0
        if p >= 1.0:
            return self.c_max
        i = min(int(np.searchsorted(self._cum, p, side="right")) - 1, self._xs.size - 2)
        d = p - self._cum[i]
        f0 = self._ys[i]
        slope = (self._ys[i + 1] - f0) / (self._xs[i + 1] - self._xs[i])
        disc = max(f0 * f0 + 2.0 * slope * d, 0.0)
        denom = f0 + math.sqrt(disc)
        t = 2.0 * d / denom if denom > 0 else 0.0
        return float(min(self._xs[i] + t, self._xs[i + 1]))


@dataclass(frozen=True, eq=False)
class ThresholdStrategy:
    """Nondecreasing step strategy given by its jump points ``c_0..c_{l_max}``."""

    thresholds: np.ndarray

    def __post_init__(self):
        c = np.array(self.thresholds, dtype=float)
        if c.ndim != 1 or c.size < 2:
            raise ValueError("need at least the two endpoints c_0 and c_{l_max}")
        if c[0] != 0.0:
            raise ValueError(f"c_0 must be 0, got {c[0]}")
        if np.any(np.diff(c) < 0):
            raise ValueError(f"thresholds must be nondecreasing, got {c}")
        c.setflags(write=False)
        object.__setattr__(self, "thresholds", c)

    @property
    def l_max(self):
        return self.thresholds.size - 1

    @property
    def c_max(self):
        return float(self.thresholds[-1])

    def sample_size(self, c):
        """Number of queues sampled by a customer with waiting cost ``c``."""
        l = int(np.searchsorted(self.thresholds, c, side="right"))
        return min(max(l, 1), self.l_max)


def mu_from_thresholds(strategy, f):
    """Distribution of sample sizes induced by a threshold strategy."""
    if abs(strategy.c_max - f.c_max) > 1e-12:
        raise ValueError(f"strategy ends at {strategy.c_max}, density at {f.c_max}")
    cdf = np.array([f.cdf(c) for c in strategy.thresholds])
    cdf[0], cdf[-1] = 0.0, 1.0
    mass = np.clip(np.diff(cdf), 0.0, None)
    return SamplingDistribution(mass / mass.sum())


def thresholds_from_mu(mu, f):
    """Jump points inducing ``mu`` (inverse CDF at the cumulative masses).

    Raises ValueError if the density vanishes on an interval inside its
    support, where the jump points would not be unique.
    """
    if f.has_gaps():
        raise ValueError("density vanishes on an interior interval; jump points are not unique")
    mu = as_distribution(mu)
    cum = np.cumsum(mu.mass)
    c = [0.0] + [f.quantile(p) for p in cum[:-1]] + [f.c_max]
    return ThresholdStrategy(np.maximum.accumulate(np.array(c)))


def hetero_best_response(mu_other, lambda_, c_s, f, tol=DEFAULT_TOL):
    """Best-response jump points ``c_j = c_s / V(j, mu_other)`` clamped to ``[0, c_max]``."""
    mu_other = as_distribution(mu_other)
    check_arrival_rate(lambda_)
    c_s = check_nonnegative(c_s, "c_s")
    v = marginal_values(tail_distribution(mu_other, lambda_, tol), mu_other.l_max)
    c = np.empty(mu_other.l_max + 1)
    c[0], c[-1] = 0.0, f.c_max
    for j in range(1, mu_other.l_max):
        c[j] = f.c_max if v[j] <= 0 else min(c_s / v[j], f.c_max)
    return ThresholdStrategy(c)


def total_variation(mu1, mu2):
    """``sum_l |mu1(l) - mu2(l)|``."""
    return float(np.abs(as_distribution(mu1).mass - as_distribution(mu2).mass).sum())


@dataclass
class HeteroResult:
    strategy: ThresholdStrategy
    mu: SamplingDistribution
    status: str  # "CONVERGED" or "NON_CONVERGED"
    iterations: int
    residual: float
    verified: bool
    max_threshold_gap: float
    history: list = field(default_factory=list)

    @property
    def converged(self):
        return self.status == "CONVERGED"

    def to_dict(self):
        return {
            "status": self.status,
            "iterations": self.iterations,
            "residual": self.residual,
            "verified": self.verified,
            "max_threshold_gap": self.max_threshold_gap,
            "thresholds": self.strategy.thresholds.tolist(),
            "mu": self.mu.mass.tolist(),
        }


def _br_map(mu, lambda_, c_s, f, tol):
    return mu_from_thresholds(hetero_best_response(mu, lambda_, c_s, f, tol), f)


def hetero_nash(lambda_, c_s, l_max, f, damping=0.5, max_iter=10000, init=None,
                tol=DEFAULT_TOL, keep_history=False):
    """Search for a pure-strategy equilibrium by damped best-response iteration.

    Iterates ``mu <- (1 - damping) mu + damping BR(mu)`` on induced
    distributions until successive iterates differ by less than 1e-9 in
    total variation, then checks that the resulting jump points reproduce
    themselves under one exact best-response step (to 1e-8 each). A run that
    stops at ``max_iter`` is reported as ``NON_CONVERGED``; that says nothing
    about whether an equilibrium exists.

    Parameters
    ----------
    init : SamplingDistribution, optional
        Starting distribution; defaults to everyone sampling one queue.
    """
    check_arrival_rate(lambda_)
    l_max = check_int(l_max, "l_max", minimum=1)
    if not 0.0 < damping <= 1.0:
        raise ValueError(f"damping must lie in (0, 1], got {damping!r}")
    max_iter = check_int(max_iter, "max_iter", minimum=1)
    mu = SamplingDistribution.point(1, l_max) if init is None else as_distribution(init, l_max)

    history = []
    residual = math.inf
    it = 0
    if l_max == 1:
        residual = 0.0
    else:
        for it in range(1, max_iter + 1):
            target = _br_map(mu, lambda_, c_s, f, tol)
            new = SamplingDistribution((1.0 - damping) * mu.mass + damping * target.mass)
            residual = total_variation(new, mu)
            mu = new
            if keep_history:
                history.append(mu.mass.copy())
            if residual < FIXED_POINT_TOL:
                break

    strategy = thresholds_from_mu(mu, f)
    br = hetero_best_response(mu, lambda_, c_s, f, tol)
    gap = float(np.max(np.abs(br.thresholds - strategy.thresholds)))
    converged = residual < FIXED_POINT_TOL
    return HeteroResult(
        strategy=strategy,
        mu=mu,
        status="CONVERGED" if converged else "NON_CONVERGED",
        iterations=it,
        residual=residual,
        verified=converged and gap <= VERIFY_TOL,
        max_threshold_gap=gap,
        history=history,
    )
