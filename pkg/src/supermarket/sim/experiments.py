"""Finite-N experiments built on the simulator."""

import math
from dataclasses import dataclass, field

import numpy as np

from .._validation import check_arrival_rate, check_nonnegative, check_positive
from ..mean_field import SamplingDistribution, tail_distribution
from .engine import Estimate, SimConfig, run_equilibrium_sim


@dataclass(frozen=True)
class DeviationResult:
    cost_equilibrium: Estimate
    cost_deviation: Estimate
    gain: Estimate
    tagged_l: int

    def to_dict(self):
        return {
            "tagged_l": self.tagged_l,
            "cost_equilibrium": self.cost_equilibrium.to_dict(),
            "cost_deviation": self.cost_deviation.to_dict(),
            "gain": self.gain.to_dict(),
        }


def estimate_deviation_cost(cfg, c, c_s):
    """Cost of the population versus a thin stream of deviators.

    The population pays ``c * W_pop + c_s * E_mu[L]``, a tagged customer
    ``c * W_tag + c_s * tagged_l``; ``gain`` is the first minus the second,
    so a positive gain means deviating pays. Standard errors come from the
    per-batch differences.
    """
    if not cfg.tagged:
        raise ValueError("estimate_deviation_cost needs tagged_l and tagged_fraction > 0")
    c = check_positive(c, "c")
    c_s = check_nonnegative(c_s, "c_s")
    res = run_equilibrium_sim(cfg)
    pop, tag = res.batch_waits, res.batch_tagged_waits
    ok = (pop[:, 1] > 0) & (tag[:, 1] > 0)
    if ok.sum() < 2:
        raise ValueError("too few tagged arrivals per batch; lengthen the horizon")
    mean_l = cfg.mu.mean()
    w_pop, w_tag = res.mean_wait_all, res.mean_wait_tagged
    eq = Estimate(c * w_pop.mean + c_s * mean_l, c * w_pop.stderr, w_pop.n)
    dev = Estimate(c * w_tag.mean + c_s * cfg.tagged_l, c * w_tag.stderr, w_tag.n)
    per_batch = c * (pop[ok, 0] / pop[ok, 1] - tag[ok, 0] / tag[ok, 1])
    gain_se = float(np.std(per_batch, ddof=1) / math.sqrt(per_batch.size))
    gain = Estimate(eq.mean - dev.mean, gain_se, w_tag.n)
    return DeviationResult(eq, dev, gain, cfg.tagged_l)


@dataclass
class GainCurvePoint:
    n: int
    best_gain: Estimate
    best_l: int
    equilibrium_cost: Estimate
    by_l: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "n": self.n,
            "best_l": self.best_l,
            "best_gain": self.best_gain.to_dict(),
            "equilibrium_cost": self.equilibrium_cost.to_dict(),
            "by_l": {str(l): r.to_dict() for l, r in self.by_l.items()},
        }


def deviation_gain_curve(mu, lambda_, c, c_s, ns, horizon_for, seed=0, tagged_fraction=0.01):
    """Best deviation gain ``max_l gain(l)`` for each system size in ``ns``.

    ``horizon_for(n)`` gives the simulated time for size ``n``. No rate of
    decay is asserted; the curve is reported as measured.
    """
    points = []
    for i, n in enumerate(ns):
        by_l = {}
        for l in range(1, mu.l_max + 1):
            cfg = SimConfig(
                n=n, lambda_=lambda_, mu=mu, horizon=horizon_for(n),
                seed=seed + 1000 * i + l, tagged_fraction=tagged_fraction, tagged_l=l,
            )
            by_l[l] = estimate_deviation_cost(cfg, c, c_s)
        best_l = max(by_l, key=lambda l: by_l[l].gain.mean)
        eq_costs = [r.cost_equilibrium for r in by_l.values()]
        eq = Estimate(
            float(np.mean([e.mean for e in eq_costs])),
            float(math.sqrt(sum(e.stderr ** 2 for e in eq_costs)) / len(eq_costs)),
            sum(e.n for e in eq_costs),
        )
        points.append(GainCurvePoint(n, by_l[best_l].gain, best_l, eq, by_l))
    return points


@dataclass(frozen=True)
class ChaosGap:
    n: int
    gap: float
    stderr: float
    level: int
    mean_wait: Estimate

    def to_dict(self):
        return {"n": self.n, "gap": self.gap, "stderr": self.stderr, "level": self.level,
                "mean_wait": self.mean_wait.to_dict()}


def chaoticity_gaps(mu, lambda_, ns, horizon_for, seed=0):
    """``max_k |r_hat_N(k) - r(k)|`` against the mean-field tail, per ``N``.

    The standard error reported is the batch-means error of ``r_hat_N`` at
    the level attaining the maximum.
    """
    mf = tail_distribution(mu, lambda_).r
    out = []
    for i, n in enumerate(ns):
        res = run_equilibrium_sim(
            SimConfig(n=n, lambda_=lambda_, mu=mu, horizon=horizon_for(n), seed=seed + i, tagged_l=None)
        )
        m = max(res.empirical_tail.size, mf.size)
        emp = np.zeros(m)
        emp[: res.empirical_tail.size] = res.empirical_tail
        ref = np.zeros(m)
        ref[: mf.size] = mf
        diff = np.abs(emp - ref)
        k = int(np.argmax(diff))
        out.append(ChaosGap(n, float(diff[k]), res.tail_se(k), k, res.mean_wait_all))
    return out


@dataclass(frozen=True)
class ExternalityReport:
    lambda_: float
    w_hat: Estimate
    mm2_wait: float
    mm1pair_min2_wait: float
    z_score: float
    exceeds_mm2: bool

    def to_dict(self):
        return {
            "lambda": self.lambda_,
            "w_hat": self.w_hat.to_dict(),
            "mm2_wait": self.mm2_wait,
            "mm1pair_min2_wait": self.mm1pair_min2_wait,
            "z_score": self.z_score,
            "exceeds_mm2": self.exceeds_mm2,
        }


def mm2_wait(lambda_):
    """Mean time in an M/M/2 system with arrival rate ``2 lambda`` and unit-rate servers."""
    lam = check_arrival_rate(lambda_)
    return 1.0 / (1.0 - lam * lam)


def min_of_two_mm1_wait(lambda_):
    """Mean wait joining the shorter of two independent M/M/1 queues at load ``lambda``."""
    lam = check_arrival_rate(lambda_)
    return sum(lam ** (2 * k) for k in range(0, 100000) if lam ** (2 * k) > 1e-18)


def two_server_externality(lambda_, horizon, warmup=None, seed=0, n_batches=20):
    """Two queues where every customer joins the shorter one.

    Returns the simulated mean wait with the two analytic references it is
    compared against: the M/M/2 value and the value for a two-sampler facing
    two independent M/M/1 queues, both ``1 / (1 - lambda**2)``.
    ``exceeds_mm2`` is set when the estimate is above the M/M/2 value by at
    least three standard errors.
    """
    lam = check_arrival_rate(lambda_)
    cfg = SimConfig(n=2, lambda_=lam, mu=SamplingDistribution.point(2, 2), horizon=horizon,
                    warmup=warmup, seed=seed, tagged_l=None, n_batches=n_batches)
    w = run_equilibrium_sim(cfg).mean_wait_all
    ref = mm2_wait(lam)
    z = (w.mean - ref) / w.stderr if w.stderr > 0 else math.inf
    return ExternalityReport(lam, w, ref, min_of_two_mm1_wait(lam), z, bool(z >= 3.0))
