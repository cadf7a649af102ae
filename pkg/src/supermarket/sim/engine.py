"""Event-driven simulation of N parallel queues with random sample sizes."""

import bisect
import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .._validation import check_arrival_rate, check_int, check_nonnegative, check_positive
from ..mean_field import SamplingDistribution, as_distribution

SCHEMA_VERSION = 1
MAX_TAGGED_FRACTION = 0.05
MIN_BATCHES = 20

_BLOCK = 1 << 16


def default_warmup(lambda_):
    """``max(100, 20 / (1 - lambda))``: relaxation slows down as the load nears 1."""
    return max(100.0, 20.0 / (1.0 - lambda_))


@dataclass(frozen=True, eq=False)
class SimConfig:
    """One finite-N replication.

    ``tagged_l`` switches on a thin stream of deviators: each arrival is, with
    probability ``tagged_fraction``, a tagged customer who samples
    ``tagged_l`` queues instead of drawing from ``mu``. Tagged customers do
    join queues, so the stream perturbs the population slightly; that is why
    the fraction is capped at 5%.
    """

    n: int
    lambda_: float
    mu: SamplingDistribution
    horizon: float
    warmup: float = None
    seed: int = 0
    tagged_fraction: float = 0.01
    tagged_l: int = None
    n_batches: int = MIN_BATCHES

    def __post_init__(self):
        set_ = lambda k, v: object.__setattr__(self, k, v)
        set_("n", check_int(self.n, "n", minimum=1))
        set_("lambda_", check_arrival_rate(self.lambda_))
        set_("mu", as_distribution(self.mu))
        set_("horizon", check_positive(self.horizon, "horizon"))
        if self.warmup is None:
            set_("warmup", min(default_warmup(self.lambda_), 0.5 * self.horizon))
        set_("warmup", check_nonnegative(self.warmup, "warmup"))
        if self.warmup >= self.horizon:
            raise ValueError(f"warmup ({self.warmup}) must be shorter than horizon ({self.horizon})")
        set_("seed", check_int(self.seed, "seed", minimum=0, maximum=2 ** 64 - 1))
        tf = check_nonnegative(self.tagged_fraction, "tagged_fraction")
        if tf > MAX_TAGGED_FRACTION:
            raise ValueError(f"tagged_fraction must be <= {MAX_TAGGED_FRACTION}, got {tf}")
        set_("tagged_fraction", tf)
        if self.tagged_l is not None:
            set_("tagged_l", check_int(self.tagged_l, "tagged_l", minimum=1, maximum=self.n))
        set_("n_batches", check_int(self.n_batches, "n_batches", minimum=MIN_BATCHES))
        if self.mu.support[-1] > self.n:
            raise ValueError(f"mu samples up to {self.mu.support[-1]} queues but n={self.n}")

    @property
    def tagged(self):
        return self.tagged_l is not None and self.tagged_fraction > 0

    def replace(self, **changes):
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d.update(changes)
        return SimConfig(**d)

    def to_dict(self):
        return {
            "n": self.n,
            "lambda": self.lambda_,
            "mu": self.mu.mass.tolist(),
            "horizon": self.horizon,
            "warmup": self.warmup,
            "seed": self.seed,
            "tagged_fraction": self.tagged_fraction,
            "tagged_l": self.tagged_l,
            "n_batches": self.n_batches,
        }

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["lambda_"] = d.pop("lambda")
        d["mu"] = SamplingDistribution(d["mu"])
        return cls(**d)


@dataclass(frozen=True)
class Estimate:
    """Point estimate with its batch-means standard error."""

    mean: float
    stderr: float
    n: int = 0

    def __float__(self):
        return self.mean

    def to_dict(self):
        return {"mean": self.mean, "stderr": self.stderr, "n": self.n}

    @classmethod
    def from_dict(cls, d):
        return cls(d["mean"], d["stderr"], d.get("n", 0))


def _pad(rows):
    width = max(len(r) for r in rows)
    out = np.zeros((len(rows), width))
    for i, r in enumerate(rows):
        out[i, : len(r)] = r
    return out


def _batch_se(values):
    values = np.asarray(values, dtype=float)
    if values.shape[0] < 2:
        return np.full(values.shape[1:], math.nan) if values.ndim > 1 else math.nan
    return np.std(values, axis=0, ddof=1) / math.sqrt(values.shape[0])


def _ratio_estimate(sums, counts):
    sums, counts = np.asarray(sums, float), np.asarray(counts, float)
    total = counts.sum()
    if total == 0:
        return Estimate(math.nan, math.nan, 0)
    ok = counts > 0
    return Estimate(float(sums.sum() / total), float(_batch_se(sums[ok] / counts[ok])), int(total))


@dataclass(eq=False)
class SimResult:
    """Statistics of one replication, collected after warmup.

    ``empirical_tail[k]`` is the time-averaged fraction of queues holding at
    least ``k`` customers; ``arrival_tail`` is the same quantity averaged over
    arrival epochs. Standard errors come from batch means.
    """

    config: SimConfig
    empirical_tail: np.ndarray
    tail_stderr: np.ndarray
    arrival_tail: np.ndarray
    arrival_tail_stderr: np.ndarray
    mean_wait_all: Estimate
    mean_wait_tagged: Estimate
    event_count: int
    batch_waits: np.ndarray = field(repr=False, default=None)
    batch_tagged_waits: np.ndarray = field(repr=False, default=None)

    @property
    def histogram(self):
        """Time-averaged fraction of queues of each exact length."""
        return self.empirical_tail - np.append(self.empirical_tail[1:], 0.0)

    @property
    def mean_queue_length(self):
        return float(self.empirical_tail[1:].sum())

    def tail(self, k):
        return float(self.empirical_tail[k]) if k < self.empirical_tail.size else 0.0

    def tail_se(self, k):
        return float(self.tail_stderr[k]) if k < self.tail_stderr.size else 0.0

    def to_dict(self):
        return {
            "schema_version": SCHEMA_VERSION,
            "config": self.config.to_dict(),
            "empirical_tail": self.empirical_tail.tolist(),
            "tail_stderr": self.tail_stderr.tolist(),
            "arrival_tail": self.arrival_tail.tolist(),
            "arrival_tail_stderr": self.arrival_tail_stderr.tolist(),
            "histogram": self.histogram.tolist(),
            "mean_wait_all": self.mean_wait_all.to_dict(),
            "mean_wait_tagged": self.mean_wait_tagged.to_dict(),
            "event_count": self.event_count,
        }

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, d):
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema_version {d.get('schema_version')!r}")
        return cls(
            config=SimConfig.from_dict(d["config"]),
            empirical_tail=np.array(d["empirical_tail"]),
            tail_stderr=np.array(d["tail_stderr"]),
            arrival_tail=np.array(d["arrival_tail"]),
            arrival_tail_stderr=np.array(d["arrival_tail_stderr"]),
            mean_wait_all=Estimate.from_dict(d["mean_wait_all"]),
            mean_wait_tagged=Estimate.from_dict(d["mean_wait_tagged"]),
            event_count=d["event_count"],
        )

    def tail_rows(self):
        """``(k, r_hat, stderr)`` rows for CSV output."""
        return [(k, float(r), float(s)) for k, (r, s) in enumerate(zip(self.empirical_tail, self.tail_stderr))]


def run_equilibrium_sim(cfg):
    """Simulate ``cfg.n`` queues in continuous time and collect statistics.

    Arrivals are Poisson with rate ``n * lambda``. An arrival draws a sample
    size from ``mu`` (or uses ``tagged_l`` if tagged), picks that many
    distinct queues uniformly and joins a shortest one, ties broken
    uniformly. Each busy queue completes service at rate 1. A customer's
    wait is recorded as the queue length it finds plus one mean service
    time. The run is a deterministic function of ``cfg``.

    Returns
    -------
    SimResult
    """
    n, lam = cfg.n, cfg.lambda_
    arrival_rate = n * lam
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    margin = cfg.mu.l_max + (cfg.tagged_l or 0) + 8
    buf = rng.random(_BLOCK).tolist()
    pos = 0

    support = cfg.mu.support
    point_l = support[0] if len(support) == 1 else None
    cum = np.cumsum(cfg.mu.mass).tolist()
    cum[-1] = 1.0
    l_max = cfg.mu.l_max
    tagged = cfg.tagged
    tf = cfg.tagged_fraction
    tagged_l = cfg.tagged_l

    q = [0] * n
    perm = list(range(n))
    busy = []
    busy_pos = [-1] * n
    cnt = [n]  # cnt[k]: queues with at least k customers
    area = [0.0]  # time integral of cnt[k] since the last flush
    last_t = [0.0]
    arr_area = [0.0]  # sum of cnt[k] over arrival epochs since the last flush
    last_a = [0]

    batch_len = (cfg.horizon - cfg.warmup) / cfg.n_batches
    boundaries = [cfg.warmup + i * batch_len for i in range(cfg.n_batches)] + [cfg.horizon]
    b_idx = 0  # next boundary; boundary 0 (end of warmup) discards
    next_b = boundaries[0]

    tail_rows, arr_rows = [], []
    pop_sum = pop_cnt = tag_sum = tag_cnt = 0
    batch_pop, batch_tag = [], []
    arrivals = 0
    t = 0.0
    events = 0
    log = math.log

    while True:
        if pos >= _BLOCK - margin:
            buf = rng.random(_BLOCK).tolist()
            pos = 0
        rate = arrival_rate + len(busy)
        t_next = t - log(1.0 - buf[pos]) / rate
        pos += 1
        finished = False
        while t_next >= next_b:
            # close the batch ending at next_b before applying the event
            tb = next_b
            for k in range(len(cnt)):
                area[k] += cnt[k] * (tb - last_t[k])
                last_t[k] = tb
                arr_area[k] += cnt[k] * (arrivals - last_a[k])
                last_a[k] = 0
            if b_idx > 0:
                tail_rows.append([a / (n * batch_len) for a in area])
                arr_rows.append([a / (n * arrivals) if arrivals else math.nan for a in arr_area])
                batch_pop.append((pop_sum, pop_cnt))
                batch_tag.append((tag_sum, tag_cnt))
            area = [0.0] * len(cnt)
            arr_area = [0.0] * len(cnt)
            arrivals = 0
            pop_sum = pop_cnt = tag_sum = tag_cnt = 0
            b_idx += 1
            if b_idx == len(boundaries):
                finished = True
                break
            next_b = boundaries[b_idx]
        if finished:
            break
        t = t_next
        events += 1
        if buf[pos] * rate < arrival_rate:
            pos += 1
            arrivals += 1
            is_tag = False
            if tagged:
                is_tag = buf[pos] < tf
                pos += 1
            if is_tag:
                l = tagged_l
            elif point_l is not None:
                l = point_l
            else:
                l = min(bisect.bisect_left(cum, buf[pos]), l_max - 1) + 1
                pos += 1
            # partial Fisher-Yates; sample order is exchangeable, so keeping
            # the first shortest queue breaks ties uniformly
            best_len = -1
            best = -1
            for j in range(l):
                r = j + int(buf[pos] * (n - j))
                pos += 1
                pj = perm[r]
                perm[r] = perm[j]
                perm[j] = pj
                ql = q[pj]
                if best < 0 or ql < best_len:
                    best_len = ql
                    best = pj
            if b_idx > 0:
                if is_tag:
                    tag_sum += best_len + 1
                    tag_cnt += 1
                else:
                    pop_sum += best_len + 1
                    pop_cnt += 1
            k = best_len + 1
            if k == len(cnt):
                cnt.append(0)
                area.append(0.0)
                last_t.append(t)
                arr_area.append(0.0)
                last_a.append(arrivals)
            area[k] += cnt[k] * (t - last_t[k])
            last_t[k] = t
            arr_area[k] += cnt[k] * (arrivals - last_a[k])
            last_a[k] = arrivals
            cnt[k] += 1
            q[best] = k
            if k == 1:
                busy_pos[best] = len(busy)
                busy.append(best)
        else:
            pos += 1
            i = busy[int(buf[pos] * len(busy))]
            pos += 1
            k = q[i]
            area[k] += cnt[k] * (t - last_t[k])
            last_t[k] = t
            arr_area[k] += cnt[k] * (arrivals - last_a[k])
            last_a[k] = arrivals
            cnt[k] -= 1
            q[i] = k - 1
            if k == 1:
                p = busy_pos[i]
                last = busy.pop()
                if last != i:
                    busy[p] = last
                    busy_pos[last] = p
                busy_pos[i] = -1

    tails = _pad(tail_rows)
    arr_tails = _pad(arr_rows)
    pop = np.array(batch_pop, dtype=float)
    tag = np.array(batch_tag, dtype=float)
    # trim trailing levels that were never reached after warmup
    keep = max(1, int(np.max(np.nonzero(tails.max(axis=0))[0])) + 1) if tails.size else 1
    tails, arr_tails = tails[:, :keep], arr_tails[:, :keep]
    return SimResult(
        config=cfg,
        empirical_tail=tails.mean(axis=0),
        tail_stderr=_batch_se(tails),
        arrival_tail=np.nanmean(arr_tails, axis=0),
        arrival_tail_stderr=_batch_se(arr_tails[~np.isnan(arr_tails).any(axis=1)]),
        mean_wait_all=_ratio_estimate(pop[:, 0], pop[:, 1]),
        mean_wait_tagged=_ratio_estimate(tag[:, 0], tag[:, 1]),
        event_count=events,
        batch_waits=pop,
        batch_tagged_waits=tag,
    )


def write_tail_csv(result, fh):
    """Write ``k,r_hat,stderr`` rows with a header."""
    w = csv.writer(fh)
    w.writerow(["k", "r_hat", "stderr"])
    for k, r, s in result.tail_rows():
        w.writerow([k, repr(r), repr(s)])
