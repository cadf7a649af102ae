"""Two supermarket systems driven by one event stream.

System 1 plays ``mu1``, system 2 plays ``mu2`` with ``mu1 <=_st mu2``. Both
see the same arrival and departure epochs. Queues are addressed by rank
(longest first): an arrival draws one uniform ``U`` and samples
``F1^-1(U) <= F2^-1(U)`` ranks, system 2 using the ranks system 1 used plus
extra ones; a departure picks one rank and serves that queue in both systems,
being lost where it is empty. Under this construction the excess
``sum_i [Q_i - x]_+`` of system 2 never exceeds that of system 1, for every
``x`` and at every instant. The run checks this after each event.

Queues are exchangeable, so each system is stored as its length profile
``cnt[k]`` = number of queues with at least ``k`` customers. The rank-``p``
queue has the largest ``k`` with ``cnt[k] > p``; which of several equal queues
carries a given rank never changes the profile.
"""

import math
from dataclasses import dataclass

import numpy as np

from ..exceptions import CouplingViolation
from ..mean_field import Ordering, as_distribution, stochastic_compare
from .engine import _BLOCK, SimConfig


@dataclass
class CouplingReport:
    violations: int
    events: int
    checks: int
    mean_queue_length_1: float
    mean_queue_length_2: float
    always_identical: bool
    max_length: int

    def to_dict(self):
        return dict(self.__dict__)


def _length_at_rank(cnt, p):
    k = 0
    top = len(cnt) - 1
    while k < top and cnt[k + 1] > p:
        k += 1
    return k


def run_coupled_sim(cfg, mu1, mu2, strict=True, require_order=True):
    """Run the coupled pair and check the pathwise ordering at every event.

    Parameters
    ----------
    cfg : SimConfig
        Supplies ``n``, ``lambda_``, ``horizon``, ``warmup`` and ``seed``;
        ``cfg.mu`` and the tagged stream are ignored.
    mu1, mu2 : SamplingDistribution
        Strategies of the two systems; ``mu1`` must be dominated by ``mu2``.
    strict : bool
        Raise :class:`CouplingViolation` on the first violation (default).
        With ``strict=False`` violations are only counted.
    require_order : bool
        Reject pairs that are not ordered (default). Turning this off is
        only useful to confirm that the check does fire.

    Returns
    -------
    CouplingReport
        Time averages are taken over ``[warmup, horizon]``.
    """
    mu1 = as_distribution(mu1)
    mu2 = as_distribution(mu2, mu1.l_max)
    order = stochastic_compare(mu1, mu2)
    if require_order and order not in (Ordering.LE, Ordering.EQ):
        raise ValueError(f"mu1 must be stochastically dominated by mu2, got {order.value}")
    n = cfg.n
    if max(mu2.support) > n:
        raise ValueError(f"mu2 samples up to {max(mu2.support)} queues but n={n}")
    arrival_rate = n * cfg.lambda_
    rate = arrival_rate + n
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    margin = mu2.l_max + 8
    buf = rng.random(_BLOCK).tolist()
    pos = 0

    cum1 = np.cumsum(mu1.mass).tolist()
    cum2 = np.cumsum(mu2.mass).tolist()
    cum1[-1] = cum2[-1] = 1.0
    l_max = mu1.l_max

    def quantile(cum, u):
        for i, c in enumerate(cum):
            if u <= c:
                return i + 1
        return l_max

    cnt1, cnt2 = [n], [n]
    perm = list(range(n))
    t = 0.0
    warmup, horizon = cfg.warmup, cfg.horizon
    area1 = area2 = 0.0
    total1 = total2 = 0
    violations = events = checks = 0
    identical = True
    max_len = 0
    log = math.log

    while True:
        if pos >= _BLOCK - margin:
            buf = rng.random(_BLOCK).tolist()
            pos = 0
        t_next = t - log(1.0 - buf[pos]) / rate
        pos += 1
        lo = max(t, warmup)
        hi = min(t_next, horizon)
        if hi > lo:
            area1 += total1 * (hi - lo)
            area2 += total2 * (hi - lo)
        if t_next >= horizon:
            break
        t = t_next
        events += 1
        if buf[pos] * rate < arrival_rate:
            pos += 1
            u = buf[pos]
            pos += 1
            l1 = quantile(cum1, u)
            l2 = quantile(cum2, u)
            # system i uses the first l_i ranks drawn, so the sets are nested
            p1 = p2 = -1
            for j in range(l1 if l1 > l2 else l2):
                r = j + int(buf[pos] * (n - j))
                pos += 1
                pj = perm[r]
                perm[r] = perm[j]
                perm[j] = pj
                if j < l1 and pj > p1:
                    p1 = pj
                if j < l2 and pj > p2:
                    p2 = pj
            # the highest sampled rank is a shortest sampled queue
            k1 = _length_at_rank(cnt1, p1) + 1
            k2 = _length_at_rank(cnt2, p2) + 1
            if k1 == len(cnt1):
                cnt1.append(0)
            if k2 == len(cnt2):
                cnt2.append(0)
            cnt1[k1] += 1
            cnt2[k2] += 1
            total1 += 1
            total2 += 1
        else:
            pos += 1
            p = int(buf[pos] * n)
            pos += 1
            k1 = _length_at_rank(cnt1, p)
            k2 = _length_at_rank(cnt2, p)
            if k1 > 0:
                cnt1[k1] -= 1
                total1 -= 1
            if k2 > 0:
                cnt2[k2] -= 1
                total2 -= 1

        # excess over x is sum_{k > x} cnt[k]; compare for every x
        m = max(len(cnt1), len(cnt2))
        s1 = s2 = 0
        for x in range(m - 1, -1, -1):
            s1 += cnt1[x + 1] if x + 1 < len(cnt1) else 0
            s2 += cnt2[x + 1] if x + 1 < len(cnt2) else 0
            checks += 1
            if s2 > s1:
                violations += 1
                if strict:
                    raise CouplingViolation(t, x, s2, s1)
        if identical:
            a, b = cnt1, cnt2
            la, lb = len(a), len(b)
            identical = all(
                (a[k] if k < la else 0) == (b[k] if k < lb else 0) for k in range(max(la, lb))
            )
        if m - 1 > max_len:
            max_len = m - 1

    span = horizon - warmup
    return CouplingReport(
        violations=violations,
        events=events,
        checks=checks,
        mean_queue_length_1=area1 / (n * span),
        mean_queue_length_2=area2 / (n * span),
        always_identical=identical,
        max_length=max_len,
    )


def coupled_config(n, lambda_, horizon, seed=0, warmup=None):
    """SimConfig carrying only what :func:`run_coupled_sim` reads."""
    return SimConfig(n=n, lambda_=lambda_, mu=[1.0], horizon=horizon, warmup=warmup, seed=seed)
