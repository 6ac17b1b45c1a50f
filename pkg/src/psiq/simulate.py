"""Event-driven simulation of the two-class PS queue.

Exact jump simulation: exponential holding times at the total outflow
rate, next transition chosen proportionally to the individual rates from
the model's generator.  Occupancy is accumulated time-weighted (the chain
is non-uniform, so event-weighted averages would be biased) and streamed
into a dictionary so the unbounded state space never needs an array bound
up front.

Replications draw from counter-based Philox streams spawned from the
master seed, so replication r is bit-reproducible regardless of execution
order, and pooling is deterministic (done in replication order).
"""

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .model import ModelParams, State, derive_constants
from .exact import StationaryDistribution, write_pmf_csv

_BATCH = 1 << 14


@dataclass(frozen=True)
class SimConfig:
    """Simulation horizon and replication layout.

    ``burn_in`` time is simulated but excluded from occupancy statistics.
    """

    seed: int
    t_end: float
    burn_in: float = 0.0
    replications: int = 1

    def __post_init__(self):
        if not 0.0 <= self.burn_in < self.t_end:
            raise ValueError(f"need 0 <= burn_in < t_end, got {self.burn_in}, {self.t_end}")
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must fit in 64 bits")


def _stream(seed: int, rep: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(rep,))))


@dataclass
class PathAccumulator:
    """Time-weighted occupancy of one trajectory (post burn-in)."""

    occupancy: dict
    weighted_time: float
    events: int
    final_state: State
    final_time: float
    rep: int
    trace: list | None = None

    @property
    def mean_n(self) -> float:
        return sum(n * w for (n, _), w in self.occupancy.items()) / self.weighted_time

    @property
    def mean_m(self) -> float:
        return sum(m * w for (_, m), w in self.occupancy.items()) / self.weighted_time


def simulate_path(
    params: ModelParams,
    config: SimConfig,
    initial: State | tuple = State(0, 0),
    rep: int = 0,
    record_trace: bool = False,
) -> PathAccumulator:
    """Simulate one trajectory on [0, t_end], accumulating occupancy on
    [burn_in, t_end].

    ``record_trace`` additionally stores every (time, n, m) epoch; only
    meant for short diagnostic runs since it defeats the streaming memory
    guard.
    """
    rng = _stream(config.seed, rep)
    alpha, beta, mu, nu, theta = params.alpha, params.beta, params.mu, params.nu, params.theta
    t_end, burn_in = config.t_end, config.burn_in
    n, m = int(initial[0]), int(initial[1])
    if n < 0 or m < 0:
        raise ValueError("initial state must be non-negative")
    occ: dict = {}
    trace = [(0.0, n, m)] if record_trace else None
    t = 0.0
    events = 0
    exps = rng.exponential(size=_BATCH)
    sels = rng.random(size=_BATCH)
    k = 0
    while t < t_end:
        tot = n + m
        rate_n = mu * n / tot if n else 0.0
        rate_m = (nu * m / tot if m else 0.0) + theta * m
        total = alpha + beta + rate_n + rate_m
        if total <= 0.0:  # absorbed (alpha = beta = 0 drained to empty)
            w = t_end - max(t, burn_in)
            if w > 0:
                occ[(n, m)] = occ.get((n, m), 0.0) + w
            t = t_end
            break
        if k == _BATCH:
            exps = rng.exponential(size=_BATCH)
            sels = rng.random(size=_BATCH)
            k = 0
        dt = exps[k] / total
        u = sels[k] * total
        k += 1
        t_next = t + dt
        w = min(t_next, t_end) - max(t, burn_in)
        if w > 0:
            key = (n, m)
            occ[key] = occ.get(key, 0.0) + w
        if t_next >= t_end:
            t = t_end
            break
        if u < alpha:
            n += 1
        elif u < alpha + beta:
            m += 1
        elif u < alpha + beta + rate_n:
            n -= 1
        else:
            m -= 1
        t = t_next
        events += 1
        if record_trace:
            trace.append((t, n, m))
    return PathAccumulator(
        occupancy=occ,
        weighted_time=t_end - burn_in,
        events=events,
        final_state=State(n, m),
        final_time=t,
        rep=rep,
        trace=trace,
    )


@dataclass
class EmpiricalDistribution:
    """Pooled time-averaged occupancy estimate with replication metadata."""

    pmf: np.ndarray
    total_time: float
    rep_means: list[tuple[float, float]]
    events: int
    config: SimConfig

    @property
    def mean_n(self) -> float:
        return float(self.pmf.sum(axis=1) @ np.arange(self.pmf.shape[0]))

    @property
    def mean_m(self) -> float:
        return float(self.pmf.sum(axis=0) @ np.arange(self.pmf.shape[1]))

    def stderr_means(self) -> tuple[float, float]:
        """Standard errors of the two means across replications."""
        reps = len(self.rep_means)
        if reps < 2:
            return math.nan, math.nan
        a = np.asarray(self.rep_means)
        return tuple(float(s) for s in a.std(axis=0, ddof=1) / math.sqrt(reps))

    def to_csv(self, path, threshold: float = 0.0):
        write_pmf_csv(self.pmf, path, threshold=threshold)


def estimate_stationary(
    params: ModelParams,
    config: SimConfig,
    initial: State | tuple = State(0, 0),
) -> EmpiricalDistribution:
    """Pooled time-weighted stationary estimate across replications.

    Each replication uses its own Philox sub-stream of ``config.seed``;
    accumulators are merged in replication order so the result is
    deterministic for a given configuration.
    """
    d = derive_constants(params)
    if not d.stable:
        raise ValueError(f"rho = {d.rho} >= 1: no stationary regime to estimate")
    pooled: dict = {}
    rep_means = []
    events = 0
    for rep in range(config.replications):
        acc = simulate_path(params, config, initial=initial, rep=rep)
        rep_means.append((acc.mean_n, acc.mean_m))
        events += acc.events
        for key, w in acc.occupancy.items():
            pooled[key] = pooled.get(key, 0.0) + w
    n_hi = max(n for n, _ in pooled)
    m_hi = max(m for _, m in pooled)
    pmf = np.zeros((n_hi + 1, m_hi + 1))
    for (n, m), w in pooled.items():
        pmf[n, m] = w
    pmf /= pmf.sum()
    total_time = config.replications * (config.t_end - config.burn_in)
    return EmpiricalDistribution(
        pmf=pmf, total_time=total_time, rep_means=rep_means, events=events, config=config
    )


def total_variation(p: np.ndarray, q: np.ndarray) -> float:
    """TV distance between two lattice pmfs, padding shapes as needed."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.ndim != q.ndim:
        raise ValueError("arrays must have the same rank")
    shape = tuple(max(a, b) for a, b in zip(p.shape, q.shape))
    pp = np.zeros(shape)
    qq = np.zeros(shape)
    pp[tuple(slice(0, s) for s in p.shape)] = p
    qq[tuple(slice(0, s) for s in q.shape)] = q
    return 0.5 * float(np.abs(pp - qq).sum())


# -- coupled dominance run ------------------------------------------------------


@dataclass
class DominanceReport:
    """Outcome of the coupled (M, M') run.

    M' is the M/M/inf count (arrivals beta, per-customer rate theta) built
    on the same probability space: both systems share the arrival stream
    and each customer's abandonment clock; M' ignores service completions,
    so a served impatient customer lives on in M' as a "ghost" until its
    shared clock fires.  Pathwise M(t) = M'(t) - ghosts(t) <= M'(t); the
    run re-checks the inequality at every epoch and records any violation.
    """

    events: int
    violations: int
    first_violation: tuple | None
    total_time: float
    max_m: int
    max_m_prime: int
    m_always_equal: bool
    occupancy_m: dict
    occupancy_m_prime: dict
    A: float

    def tail_m(self, k: int) -> float:
        """Empirical P(M >= k), time-weighted."""
        tot = sum(self.occupancy_m.values())
        return sum(w for m, w in self.occupancy_m.items() if m >= k) / tot

    def tail_m_prime(self, k: int) -> float:
        tot = sum(self.occupancy_m_prime.values())
        return sum(w for m, w in self.occupancy_m_prime.items() if m >= k) / tot

    def summary(self) -> dict:
        return {
            "events": self.events,
            "violations": self.violations,
            "first_violation": self.first_violation,
            "total_time": self.total_time,
            "max_m": self.max_m,
            "max_m_prime": self.max_m_prime,
            "m_always_equal": self.m_always_equal,
            "A": self.A,
        }

    def to_json(self, path):
        Path(path).write_text(json.dumps(self.summary(), indent=2, sort_keys=True) + "\n")


def coupled_dominance_run(
    params: ModelParams,
    config: SimConfig,
    initial: State | tuple = State(0, 0),
    max_events: int | None = None,
) -> DominanceReport:
    """Simulate (N, M) jointly with its dominating M/M/inf twin M'.

    The coupling state is (n, m, ghosts) with m' = m + ghosts.  Shared
    events: arrivals (both counts up), abandonment of a live customer
    (both down); M-only events: service completion (m down, ghost up);
    M'-only: ghost abandonment.  Every epoch asserts m <= m'; violations
    would disprove the coupling and are reported with their epoch.

    Stops at ``t_end`` or after ``max_events`` transitions, whichever
    comes first.
    """
    rng = _stream(config.seed, 0)
    alpha, beta, mu, nu, theta = params.alpha, params.beta, params.mu, params.nu, params.theta
    t_end, burn_in = config.t_end, config.burn_in
    n, m = int(initial[0]), int(initial[1])
    ghosts = 0  # customers alive in M' only
    occ_m: dict = {}
    occ_mp: dict = {}
    t = 0.0
    events = 0
    violations = 0
    first_violation = None
    max_m = m
    max_mp = m
    always_equal = True
    exps = rng.exponential(size=_BATCH)
    sels = rng.random(size=_BATCH)
    k = 0
    budget = math.inf if max_events is None else max_events
    while t < t_end and events < budget:
        tot = n + m
        rate_srv_n = mu * n / tot if n else 0.0
        rate_srv_m = nu * m / tot if m else 0.0
        rate_ab_m = theta * m
        rate_ab_g = theta * ghosts
        total = alpha + beta + rate_srv_n + rate_srv_m + rate_ab_m + rate_ab_g
        if total <= 0.0:
            w = t_end - max(t, burn_in)
            if w > 0:
                occ_m[m] = occ_m.get(m, 0.0) + w
                occ_mp[m + ghosts] = occ_mp.get(m + ghosts, 0.0) + w
            t = t_end
            break
        if k == _BATCH:
            exps = rng.exponential(size=_BATCH)
            sels = rng.random(size=_BATCH)
            k = 0
        dt = exps[k] / total
        u = sels[k] * total
        k += 1
        t_next = t + dt
        w = min(t_next, t_end) - max(t, burn_in)
        if w > 0:
            occ_m[m] = occ_m.get(m, 0.0) + w
            mp = m + ghosts
            occ_mp[mp] = occ_mp.get(mp, 0.0) + w
        if t_next >= t_end:
            t = t_end
            break
        if u < alpha:
            n += 1
        elif u < alpha + beta:
            m += 1  # shared arrival joins both systems
        elif u < alpha + beta + rate_srv_n:
            n -= 1
        elif u < alpha + beta + rate_srv_n + rate_srv_m:
            m -= 1  # served in M; clock survives in M'
            ghosts += 1
        elif u < alpha + beta + rate_srv_n + rate_srv_m + rate_ab_m:
            m -= 1  # shared abandonment clock fires for a live customer
        else:
            ghosts -= 1  # ghost abandonment: M' only
        t = t_next
        events += 1
        if ghosts > 0:
            always_equal = False
        if ghosts < 0:  # would mean m > m': dominance broken
            violations += 1
            if first_violation is None:
                first_violation = (t, m, m + ghosts)
        max_m = max(max_m, m)
        max_mp = max(max_mp, m + ghosts)
    return DominanceReport(
        events=events,
        violations=violations,
        first_violation=first_violation,
        total_time=t - burn_in if t > burn_in else 0.0,
        max_m=max_m,
        max_m_prime=max_mp,
        m_always_equal=always_equal,
        occupancy_m=occ_m,
        occupancy_m_prime=occ_mp,
        A=derive_constants(params).A,
    )
