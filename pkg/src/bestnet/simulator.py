"""Event-driven fluid simulation of best-effort networks.

Every document carries its residual work; between events each document on
route r is served at the per-flow share of its route under the chosen policy.
Arrivals and document sizes come from per-route random streams, which makes
it possible to drive two policies with the exact same arrivals (coupling).
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field

import numba
import numpy as np

from .allocation import Policy, RouteIndex
from .network import NetworkSpec, Stability, ValidationError, compute_link_loads

log = logging.getLogger(__name__)

# residuals below this are treated as finished (absorbs rounding in coupled runs)
COMPLETE_TOL = 1e-9
_BLOCK = 256


@dataclass(frozen=True)
class SimConfig:
    seed: int = 0
    warmup_time: float | None = None
    measure_time: float = 1000.0
    policy: Policy = Policy.MIN
    max_events: int = 10_000_000
    trace_dt: float | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "policy", Policy.parse(self.policy))
        if self.measure_time <= 0:
            raise ValidationError("measure_time must be positive")
        if self.warmup_time is not None and self.warmup_time < 0:
            raise ValidationError("warmup_time must be nonnegative")
        if self.max_events < 1:
            raise ValidationError("max_events must be positive")

    @property
    def warmup(self) -> float:
        # default: warmup is 20% of the total simulated time
        if self.warmup_time is None:
            return 0.25 * self.measure_time
        return self.warmup_time


@dataclass
class SimStats:
    policy: str
    link_occupancy_dist: np.ndarray
    mean_per_route_count: np.ndarray
    mean_transfer_time: np.ndarray
    completed_per_route: np.ndarray
    events_processed: int
    events_measured: int
    end_time: float
    window: tuple[float, float]
    truncated: bool = False
    trace: list[tuple[float, int]] = field(default_factory=list)

    @property
    def mean_link_occupancy(self) -> float:
        k = np.arange(self.link_occupancy_dist.size)
        return float(k @ self.link_occupancy_dist)

    def little_transfer_time(self, arrival_rates: np.ndarray) -> np.ndarray:
        """T_r = E[x_r] / lambda_r, NaN where lambda_r = 0."""
        lam = np.asarray(arrival_rates, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(lam > 0, self.mean_per_route_count / lam, np.nan)

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("link_occupancy_dist", "mean_per_route_count", "mean_transfer_time", "completed_per_route"):
            d[key] = [None if isinstance(v, float) and math.isnan(v) else v for v in np.asarray(d[key]).tolist()]
        d["window"] = list(self.window)
        d["trace"] = [list(p) for p in self.trace]
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    def to_csv(self) -> str:
        return occupancy_csv(self.link_occupancy_dist)


def occupancy_cdf(stats: SimStats | np.ndarray) -> np.ndarray:
    dist = stats.link_occupancy_dist if isinstance(stats, SimStats) else np.asarray(stats, dtype=float)
    if dist.size == 0 or not np.isfinite(dist).all() or dist.sum() <= 0:
        raise ValueError("empty measurement window: no occupancy distribution")
    cdf = np.cumsum(dist)
    return np.minimum(cdf, 1.0)


def sup_cdf_distance(p, q) -> float:
    """Sup-norm distance between the CDFs of two distributions on k = 0, 1, ...

    The shorter vector is zero-padded, so its CDF stays flat past its end.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    n = max(p.size, q.size)
    cp = np.cumsum(np.pad(p, (0, n - p.size)))
    cq = np.cumsum(np.pad(q, (0, n - q.size)))
    return float(np.max(np.abs(cp - cq)))


def occupancy_csv(dist: np.ndarray) -> str:
    cdf = occupancy_cdf(np.asarray(dist))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["k", "prob", "cdf"])
    for k, (p, c) in enumerate(zip(dist, cdf)):
        w.writerow([k, repr(float(p)), repr(float(c))])
    return buf.getvalue()


class _Streams:
    """Per-route exponential streams for inter-arrival times and sizes."""

    def __init__(self, spec: NetworkSpec, seed: int) -> None:
        n = spec.n_routes
        children = np.random.SeedSequence(seed).spawn(2 * n)
        self._gens = [np.random.default_rng(s) for s in children]
        self._buf = np.empty((2 * n, _BLOCK))
        self._pos = np.full(2 * n, _BLOCK)
        self.n = n

    def _draw(self, i: int) -> float:
        if self._pos[i] == _BLOCK:
            self._buf[i] = self._gens[i].standard_exponential(_BLOCK)
            self._pos[i] = 0
        v = self._buf[i, self._pos[i]]
        self._pos[i] += 1
        return float(v)

    def interarrival(self, r: int) -> float:
        return self._draw(r)

    def size(self, r: int) -> float:
        return self._draw(self.n + r)


@numba.njit(cache=True)
def _min_doc_rates(cap, X, route_links, doc_route):  # pragma: no cover - jitted
    # min over the route's links of cap/X; the pad link has cap inf
    out = np.empty(doc_route.size)
    for i in range(doc_route.size):
        r = doc_route[i]
        best = np.inf
        for j in range(route_links.shape[1]):
            ell = route_links[r, j]
            v = cap[ell] / max(X[ell], 1)
            if v < best:
                best = v
        out[i] = best
    return out


@numba.njit(cache=True)
def _min_ratio(residual, rate):  # pragma: no cover - jitted
    best = np.inf
    for i in range(rate.size):
        v = residual[i] / rate[i]
        if v < best:
            best = v
    return best


@numba.njit(cache=True)
def _done_indices(residual, n, tol):  # pragma: no cover - jitted
    return np.nonzero(residual[:n] <= tol)[0]


@numba.njit(cache=True)
def _compact(doc_route, doc_id, residual, born, n, done):  # pragma: no cover - jitted
    # drop the rows listed in ``done`` (ascending), keeping the others in order
    m = 0
    j = 0
    for i in range(n):
        if j < done.size and done[j] == i:
            j += 1
            continue
        doc_route[m] = doc_route[i]
        doc_id[m] = doc_id[i]
        residual[m] = residual[i]
        born[m] = born[i]
        m += 1
    return m


class _FluidSystem:
    """Documents in flight under one bandwidth-sharing policy."""

    def __init__(self, spec: NetworkSpec, policy: Policy) -> None:
        self.policy = policy
        self.n_links = spec.n_links
        self.n_routes = spec.n_routes
        lmax = max(r.length for r in spec.routes)
        # padded route->links table; padding points at a virtual link n_links
        self.route_links = np.full((spec.n_routes, lmax), spec.n_links, dtype=np.intp)
        for r in spec.routes:
            self.route_links[r.id, : r.length] = r.links
        self.route_link_lists = [list(r.links) for r in spec.routes]
        self.cap = np.append(spec.capacities, np.inf)
        self.index = RouteIndex(spec)
        self.x = np.zeros(spec.n_routes, dtype=np.int64)
        self.X = np.zeros(spec.n_links + 1, dtype=np.int64)
        size = 64
        self.n = 0
        self.doc_route = np.zeros(size, dtype=np.intp)
        self.doc_id = np.zeros(size, dtype=np.int64)
        self.residual = np.zeros(size)
        self.born = np.zeros(size)
        self.rate = np.zeros(0)
        self._stale = True

    def _grow(self) -> None:
        size = 2 * self.doc_route.size
        for name in ("doc_route", "doc_id", "residual", "born"):
            old = getattr(self, name)
            new = np.zeros(size, dtype=old.dtype)
            new[: self.n] = old[: self.n]
            setattr(self, name, new)

    def add(self, route: int, doc: int, size: float, t: float) -> list[int]:
        if self.n == self.doc_route.size:
            self._grow()
        i = self.n
        self.doc_route[i] = route
        self.doc_id[i] = doc
        self.residual[i] = size
        self.born[i] = t
        self.n += 1
        self.x[route] += 1
        links = self.route_link_lists[route]
        self.X[links] += 1
        self._stale = True
        return links

    def rates(self) -> np.ndarray:
        if self._stale:
            routes = self.doc_route[: self.n]
            if self.policy is Policy.MIN:
                self.rate = _min_doc_rates(self.cap, self.X, self.route_links, routes)
            else:
                self.rate = self.index.maxmin(self.x)[routes]
            self._stale = False
        return self.rate

    def time_to_completion(self) -> float:
        if self.n == 0:
            return math.inf
        return _min_ratio(self.residual, self.rates())

    def advance(self, dt: float) -> None:
        if self.n and dt > 0:
            self.residual[: self.n] -= self.rates() * dt

    def pop_completed(self, t: float, rec: _Recorder) -> int:
        """Remove finished documents, reporting each to ``rec``."""
        if self.n == 0:
            return 0
        done = _done_indices(self.residual, self.n, COMPLETE_TOL)
        if done.size == 0:
            return 0
        for i in done:
            route = int(self.doc_route[i])
            links = self.route_link_lists[route]
            rec.before_change(t, route, links)
            rec.completion(route, float(self.born[i]), t)
            self.x[route] -= 1
            self.X[links] -= 1
        self.n = _compact(self.doc_route, self.doc_id, self.residual, self.born, self.n, done)
        self._stale = True
        return int(done.size)


class _Recorder:
    """Time-weighted occupancy statistics over the measurement window."""

    def __init__(self, system: _FluidSystem, start: float) -> None:
        self.sys = system
        self.start = start
        self.on = False
        self.hist = np.zeros(64)
        self.link_last = np.zeros(system.n_links)
        self.route_area = np.zeros(system.n_routes)
        self.route_last = np.zeros(system.n_routes)
        self.sojourn_sum = np.zeros(system.n_routes)
        self.completed = np.zeros(system.n_routes, dtype=np.int64)
        self.events = 0

    def _ensure(self, k: int) -> None:
        if k >= self.hist.size:
            self.hist = np.concatenate([self.hist, np.zeros(max(k + 1, 2 * self.hist.size) - self.hist.size)])

    def begin(self, t: float) -> None:
        self.on = True
        self.link_last[:] = t
        self.route_last[:] = t

    def before_change(self, t: float, route: int, links: list[int]) -> None:
        """Close the occupancy interval of ``route`` and ``links`` at time t."""
        if not self.on:
            return
        X = self.sys.X
        for ell in links:
            k = X[ell]
            self._ensure(k)
            self.hist[k] += t - self.link_last[ell]
            self.link_last[ell] = t
        self.route_area[route] += self.sys.x[route] * (t - self.route_last[route])
        self.route_last[route] = t

    def completion(self, route: int, born: float, t: float) -> None:
        if self.on:
            self.sojourn_sum[route] += t - born
            self.completed[route] += 1

    def finish(self, t: float, policy: Policy, events: int, truncated: bool, trace) -> SimStats:
        sys = self.sys
        if self.on:
            for ell in range(sys.n_links):
                k = sys.X[ell]
                self._ensure(k)
                self.hist[k] += t - self.link_last[ell]
            self.route_area += sys.x * (t - self.route_last)
        duration = t - self.start if self.on else 0.0
        if duration > 0:
            dist = self.hist / (sys.n_links * duration)
            nz = np.flatnonzero(dist)
            dist = dist[: nz[-1] + 1] if nz.size else dist[:1]
            mean_counts = self.route_area / duration
        else:
            dist = np.zeros(0)
            mean_counts = np.full(sys.n_routes, np.nan)
        with np.errstate(divide="ignore", invalid="ignore"):
            ttime = np.where(self.completed > 0, self.sojourn_sum / np.maximum(self.completed, 1), np.nan)
        return SimStats(
            policy=policy.value,
            link_occupancy_dist=dist,
            mean_per_route_count=mean_counts,
            mean_transfer_time=ttime,
            completed_per_route=self.completed.copy(),
            events_processed=events,
            events_measured=self.events,
            end_time=t,
            window=(self.start, t),
            truncated=truncated,
            trace=list(trace),
        )


def _precheck(spec: NetworkSpec) -> None:
    spec.validate()
    report = compute_link_loads(spec)
    if report.classification is Stability.TRANSIENT:
        log.warning("max link load %.4f > 1: the process is transient", report.max_load)


def _simulate(spec: NetworkSpec, config: SimConfig, policies: list[Policy]):
    _precheck(spec)
    streams = _Streams(spec, config.seed)
    systems = [_FluidSystem(spec, p) for p in policies]
    warm = config.warmup
    horizon = warm + config.measure_time
    recorders = [_Recorder(s, warm) for s in systems]
    lam = spec.arrival_rates
    sigma = spec.mean_sizes
    next_arr = np.full(spec.n_routes, math.inf)
    for r in range(spec.n_routes):
        if lam[r] > 0:
            next_arr[r] = streams.interarrival(r) / lam[r]
    t = 0.0
    events = 0
    doc_counter = 0
    violations = 0
    truncated = False
    trace: list[tuple[float, int]] = []
    next_trace = 0.0 if config.trace_dt else math.inf
    measuring = warm == 0.0
    coupled = len(systems) == 2
    if measuring:
        for rec in recorders:
            rec.begin(0.0)

    while True:
        r_arr = int(next_arr.argmin())
        t_arr = float(next_arr[r_arr])
        t_done = min(t + s.time_to_completion() for s in systems)
        t_next = min(t_arr, t_done)
        if not measuring and t_next >= warm:
            # start the window exactly at the warmup boundary
            for s in systems:
                s.advance(warm - t)
            t = warm
            measuring = True
            for rec in recorders:
                rec.begin(t)
            continue
        while next_trace <= min(t_next, horizon):
            trace.append((next_trace, int(systems[0].x.sum())))
            next_trace += config.trace_dt
        if t_next >= horizon:
            for s in systems:
                s.advance(horizon - t)
            t = horizon
            break
        if events >= config.max_events:
            truncated = True
            log.warning("event cap %d reached at t=%.3f", config.max_events, t)
            break
        dt = t_next - t
        for s in systems:
            s.advance(dt)
        t = t_next
        events += 1
        # completions take precedence over a simultaneous arrival
        if t_done <= t_arr:
            for s, rec in zip(systems, recorders):
                if s.pop_completed(t, rec) and measuring:
                    rec.events += 1
        else:
            size = streams.size(r_arr) * sigma[r_arr]
            for s, rec in zip(systems, recorders):
                rec.before_change(t, r_arr, s.route_link_lists[r_arr])
                s.add(r_arr, doc_counter, size, t)
                if measuring:
                    rec.events += 1
            doc_counter += 1
            next_arr[r_arr] = t + streams.interarrival(r_arr) / lam[r_arr]
        if coupled and (systems[0].X > systems[1].X).any():
            violations += 1

    stats = [rec.finish(t, s.policy, events, truncated, trace) for s, rec in zip(systems, recorders)]
    return stats, violations


def run(spec: NetworkSpec, config: SimConfig) -> SimStats:
    """Simulate one policy; identical (spec, config) gives identical stats."""
    stats, _ = _simulate(spec, config, [config.policy])
    return stats[0]


def run_coupled(spec: NetworkSpec, config: SimConfig) -> tuple[SimStats, SimStats, int]:
    """Simulate max-min and min on the same arrivals and document sizes.

    Returns ``(stats_maxmin, stats_min, violations)`` where ``violations``
    counts events after which some link had more transfers under max-min
    than under min.
    """
    (mm, mn), violations = _simulate(spec, config, [Policy.MAXMIN, Policy.MIN])
    return mm, mn, violations
