"""Event-driven simulation of the contact process with renewal dormancy.

The engine never enumerates raw clock rings.  Activity trajectories are
autonomous, so each site's track is built lazily from its wake and sleep
clocks, and the queue only holds *effective* events: for an infected site
the next recovery point that falls in an active stretch, and for every
infected-healthy pair the next infection symbol whose type matches the
endpoints' activities at that instant.  Every queued entry is a genuine
symbol of the graphical construction, so stale entries are simply checked
against the current state when popped.

Same-time ties follow the order recovery < sleep < wake < infection, then
vertex/edge index.  Sleep and wake act through the tracks (a symbol at a
flip time sees the post-flip activity), which realizes the same order.
"""
from __future__ import annotations

import bisect
import heapq
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .. import streams
from ..errors import EmptyReplicas, InvalidRates, UnknownVertex
from ..renewal import InterarrivalLaw, PointTrace
from ..topology import Topology
from .clocks import INF, NEVER, ActivityTrack, FixedClock, GapActivity, PoissonClock, TraceClock

ACTIVE = "a"
DORMANT = "d"
TYPES = ("aa", "ad", "da", "dd")


@dataclass(frozen=True)
class Rates:
    lambda_aa: float = 0.0
    lambda_ad: float = 0.0
    lambda_da: float = 0.0
    lambda_dd: float = 0.0
    delta: float = 1.0
    sigma: float = 1.0
    recovery_law: InterarrivalLaw | None = None

    def __post_init__(self):
        for name in ("lambda_aa", "lambda_ad", "lambda_da", "lambda_dd", "delta", "sigma"):
            v = getattr(self, name)
            if not (v >= 0 and math.isfinite(v)):
                raise InvalidRates(f"{name} must be a finite nonnegative number, got {v}")

    @property
    def infection(self) -> tuple[float, float, float, float]:
        """Rates in the order aa, ad, da, dd."""
        return (self.lambda_aa, self.lambda_ad, self.lambda_da, self.lambda_dd)

    @classmethod
    def uniform(cls, lam: float, delta: float = 1.0, sigma: float = 1.0, **kw) -> "Rates":
        return cls(lam, lam, lam, lam, delta, sigma, **kw)

    def replace(self, **kw) -> "Rates":
        d = {k: getattr(self, k) for k in
             ("lambda_aa", "lambda_ad", "lambda_da", "lambda_dd", "delta", "sigma", "recovery_law")}
        d.update(kw)
        return Rates(**d)

    def to_config(self) -> dict:
        d = {k: getattr(self, k) for k in ("lambda_aa", "lambda_ad", "lambda_da", "lambda_dd", "delta", "sigma")}
        if self.recovery_law is not None:
            d["recovery_law"] = self.recovery_law.to_config()
        return d


def activity_at(last_wake: float | None, last_sleep: float | None, initial: str, t: float) -> str:
    """Activity of a site from its most recent wake and sleep times.

    Active iff the last wake is later than the last sleep; with neither,
    the initial activity.  Equal times count as dormant.
    """
    if last_wake is None and last_sleep is None:
        return initial
    if last_sleep is None:
        return ACTIVE
    if last_wake is None:
        return DORMANT
    return ACTIVE if last_wake > last_sleep else DORMANT


@dataclass(frozen=True)
class SiteState:
    infected: bool
    initial_activity: str
    last_wake: float | None = None
    last_sleep: float | None = None

    def activity(self, t: float) -> str:
        return activity_at(self.last_wake, self.last_sleep, self.initial_activity, t)


@dataclass(frozen=True)
class Configuration:
    """Initial data of a run: infected set and active set at ``time``."""

    topology: Topology
    infected: frozenset
    active: frozenset
    time: float = 0.0

    def site(self, x: int) -> SiteState:
        return SiteState(x in self.infected, ACTIVE if x in self.active else DORMANT)

    @property
    def all_active(self) -> bool:
        return len(self.active) == self.topology.n


def init(topology: Topology, infected: Iterable[int], active: Iterable[int] | None = None) -> Configuration:
    """Configuration at time 0; ``active=None`` means every site is active."""
    n = topology.n
    inf = frozenset(int(x) for x in infected)
    act = frozenset(range(n)) if active is None else frozenset(int(x) for x in active)
    for x in inf | act:
        if not 0 <= x < n:
            raise UnknownVertex(x)
    return Configuration(topology, inf, act)


@dataclass(frozen=True)
class Checkpoint:
    time: float
    infected_count: int
    range: int | None


@dataclass(frozen=True)
class RunResult:
    extinction_time: float | None
    horizon: float
    checkpoints: tuple[Checkpoint, ...]
    boundary_hit: bool
    seed: int
    final_infected: frozenset
    infected_sets: tuple[frozenset, ...] | None = None
    history: tuple[tuple[float, int, bool], ...] | None = None

    @property
    def censored(self) -> bool:
        return self.extinction_time is None

    def survived(self, t: float) -> bool:
        return self.extinction_time is None or self.extinction_time > t


@dataclass
class Script:
    """Explicit clock traces.  Clocks not listed have no points."""

    clocks: dict[tuple[str, int], tuple[float, ...]] = field(default_factory=dict)

    def get(self, kind: str, ident: int):
        pts = self.clocks.get((kind, ident))
        return FixedClock(pts) if pts else NEVER


class ClockBank:
    """All clocks of one realization of the graphical construction.

    Clocks are created on first use from substreams keyed by the root seed,
    the clock kind and the site or edge label, so two banks built from the
    same seed agree clock by clock, whatever the rates of the other clocks.
    """

    def __init__(self, topology: Topology, rates: Rates, wake_law: InterarrivalLaw, seed: int,
                 initial_active: frozenset | None = None, script: Script | None = None):
        self.topology = topology
        self.rates = rates
        self.wake_law = wake_law
        self.seed = int(seed)
        self.script = script
        self._initial_all = initial_active is None or len(initial_active) == topology.n
        self._initial = initial_active
        self._tracks: dict[int, ActivityTrack] = {}
        self._rec: dict[int, object] = {}
        self._inf: dict[tuple[int, int], object] = {}

    def _initially_active(self, x: int) -> bool:
        return self._initial_all or x in self._initial

    def wake_clock(self, x: int):
        if self.script is not None:
            return self.script.get("wake", x)
        key = streams.derive(self.seed, streams.WAKE, self.topology.site_label(x))
        return TraceClock(PointTrace(self.wake_law, streams.generator(key)))

    def dormant_sleep_clock(self, x: int):
        """Sleep points after the first one of a wake gap (they never change activity)."""
        if self.rates.sigma <= 0:
            return NEVER
        key = streams.derive(self.seed, streams.SLEEP_DORMANT, self.topology.site_label(x))
        return PoissonClock(key, self.rates.sigma)

    def track(self, x: int):
        """Activity trajectory of ``x``: ``state_at(t) -> (active, next flip)``."""
        tr = self._tracks.get(x)
        if tr is None:
            initial = self._initially_active(x)
            if self.script is not None:
                tr = ActivityTrack(initial, self.script.get("wake", x), self.script.get("sleep", x))
            else:
                key = streams.derive(self.seed, streams.SLEEP, self.topology.site_label(x))
                tr = GapActivity(initial, self.wake_clock(x), key, self.rates.sigma)
            self._tracks[x] = tr
        return tr

    def has_wake_in(self, x: int, a: float, b: float) -> bool:
        """Whether the wake clock of ``x`` rings in ``[a, b]``."""
        return self.track(x).wake.next_point(a, inclusive=True) <= b

    def next_wake(self, x: int, t: float, inclusive: bool = False) -> float:
        return self.track(x).wake.next_point(t, inclusive)

    def next_sleep(self, x: int, t: float, inclusive: bool = False) -> float:
        """First ring of the sleep clock of ``x`` after ``t``."""
        if self.script is not None:
            return self.script.get("sleep", x).next_point(t, inclusive)
        if self.rates.sigma <= 0:
            return INF
        act = self.track(x)
        pts = act._points(t)
        j = bisect.bisect_right(pts, t)
        dormant = None
        while True:
            if j == len(pts):
                pts = act._points(pts[-1])
            w = pts[j - 1] if j else 0.0
            gap_end = pts[j]
            first = w + act.offset(j)
            if first < gap_end:
                if first > t or (inclusive and first == t):
                    return first
                # later rings of this gap come from the dormant-phase clock
                if dormant is None:
                    dormant = self.dormant_sleep_clock(x)
                lo = max(t, first)
                p = dormant.next_point(lo, inclusive=inclusive and lo == t and lo > first)
                if p < gap_end:
                    return p
            j += 1

    def has_sleep_in(self, x: int, a: float, b: float) -> bool:
        """Whether the sleep clock of ``x`` rings in ``[a, b)``."""
        return self.next_sleep(x, a, inclusive=True) < b

    def next_infection(self, e: int, tau: int, t: float, inclusive: bool = False) -> float:
        return self.infection(e, tau).next_point(t, inclusive)

    def recovery(self, x: int):
        c = self._rec.get(x)
        if c is None:
            if self.script is not None:
                c = self.script.get("rec", x)
            elif self.rates.recovery_law is not None:
                key = streams.derive(self.seed, streams.REC, self.topology.site_label(x))
                c = TraceClock(PointTrace(self.rates.recovery_law, streams.generator(key)))
            elif self.rates.delta > 0:
                c = PoissonClock(streams.derive(self.seed, streams.REC, self.topology.site_label(x)), self.rates.delta)
            else:
                c = NEVER
            self._rec[x] = c
        return c

    def infection(self, e: int, tau: int):
        c = self._inf.get((e, tau))
        if c is None:
            if self.script is not None:
                c = self.script.get("inf_" + TYPES[tau], e)
            else:
                rate = self.rates.infection[tau]
                if rate > 0:
                    key = streams.derive(self.seed, streams.INF, self.topology.edge_label(e), tau)
                    c = PoissonClock(key, rate)
                else:
                    c = NEVER
            self._inf[(e, tau)] = c
        return c

    def next_recovery(self, x: int, t0: float, until: float) -> float:
        """First recovery point in ``(t0, until]`` at which ``x`` is active."""
        track = self.track(x)
        clock = self.recovery(x)
        if clock is NEVER:
            return INF
        cur = t0
        while cur <= until:
            active, flip = track.state_at(cur)
            if active:
                # the recovery ring at the sleep instant still counts
                p = clock.next_point(cur, inclusive=False)
                if p <= flip and p <= until:
                    return p
                if p > until:
                    return INF
            if flip == INF:
                return INF
            # a ring exactly at a wake instant finds the site still dormant
            cur = flip
        return INF

    def next_transmission(self, u: int, v: int, e: int, t0: float, until: float) -> float:
        """First infection symbol on ``e`` in ``(t0, until]`` that carries ``u -> v``."""
        tu, tv = self.track(u), self.track(v)
        cur = t0
        inclusive = False
        clocks = self._inf
        while cur <= until:
            au, fu = tu.state_at(cur)
            av, fv = tv.state_at(cur)
            tau = (0 if au else 2) + (0 if av else 1)
            end = fu if fu < fv else fv
            c = clocks.get((e, tau))
            if c is None:
                c = self.infection(e, tau)
            if c is not NEVER:
                p = c.next_point(cur, inclusive)
                if p < end and p <= until:
                    return p
            if end == INF:
                return INF
            cur = end
            inclusive = True
        return INF


def run(topology: Topology, rates: Rates, wake_law: InterarrivalLaw, config: Configuration,
        horizon: float, checkpoints: Sequence[float] = (), seed: int = 0,
        script: Script | None = None, record_history: bool = False,
        record_sets: bool = False, stop_at_boundary: bool = False,
        bank: ClockBank | None = None) -> RunResult:
    """Simulate up to ``horizon`` and report extinction time and checkpoint snapshots.

    ``stop_at_boundary`` ends a lattice run as soon as an infected site lies
    on the box boundary (the harness then reruns at a larger radius).
    """
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    cps = sorted(float(c) for c in checkpoints)
    if any(b <= a for a, b in zip(cps, cps[1:])):
        raise ValueError("checkpoint times must be strictly increasing")
    if bank is None:
        bank = ClockBank(topology, rates, wake_law, seed, config.active, script)

    infected = bytearray(topology.n)
    live = set(config.infected)
    n_inf = len(live)
    for x in live:
        infected[x] = 1
    boundary = topology.boundary
    has_range = topology.coords is not None and topology.origin is not None
    boundary_hit = bool(boundary is not None and any(boundary[x] for x in config.infected))

    adjacency = topology.adjacency
    next_tx = bank.next_transmission
    next_rec = bank.next_recovery
    heap: list = []
    push = heapq.heappush
    pop = heapq.heappop

    def schedule_site(x, t):
        p = next_rec(x, t, horizon)
        if p != INF:
            push(heap, (p, 0, x, -1))
        for w, e in adjacency(x):
            if not infected[w]:
                p = next_tx(x, w, e, t, horizon)
                if p != INF:
                    push(heap, (p, 1, e, x, w))

    for x in sorted(config.infected):
        schedule_site(x, 0.0)

    history: list | None = [] if record_history else None
    snaps: list[Checkpoint] = []
    sets: list[frozenset] | None = [] if record_sets else None
    cp_i = 0
    norms = None
    if has_range:
        norms = np.abs(topology.coords).max(axis=1)
        if topology.params.get("boundary") == "periodic":
            side = 2 * topology.params["radius"] + 1
            norms = np.minimum(norms, side - norms)

    def snapshot(t):
        rng_ = None
        if has_range and live:
            rng_ = int(norms[np.fromiter(live, dtype=np.int64, count=len(live))].max())
        snaps.append(Checkpoint(t, n_inf, rng_))
        if sets is not None:
            sets.append(frozenset(live))

    extinction = 0.0 if n_inf == 0 else None
    stopped = stop_at_boundary and boundary_hit
    while heap and n_inf > 0 and not stopped:
        item = pop(heap)
        t = item[0]
        while cp_i < len(cps) and cps[cp_i] < t:
            snapshot(cps[cp_i])
            cp_i += 1
        if item[1] == 0:
            x = item[2]
            if not infected[x]:
                continue
            infected[x] = 0
            live.discard(x)
            n_inf -= 1
            if history is not None:
                history.append((t, x, False))
            if n_inf == 0:
                extinction = t
                break
            for w, e in adjacency(x):
                if infected[w]:
                    p = next_tx(w, x, e, t, horizon)
                    if p != INF:
                        push(heap, (p, 1, e, w, x))
        else:
            u, v = item[3], item[4]
            if not infected[u] or infected[v]:
                continue
            infected[v] = 1
            live.add(v)
            n_inf += 1
            if history is not None:
                history.append((t, v, True))
            if boundary is not None and boundary[v]:
                boundary_hit = True
                if stop_at_boundary:
                    stopped = True
            schedule_site(v, t)

    while cp_i < len(cps):
        c = cps[cp_i]
        if c > horizon:
            break
        if extinction is not None and c >= extinction:
            snaps.append(Checkpoint(c, 0, None))
            if sets is not None:
                sets.append(frozenset())
        elif stopped:
            break
        else:
            snapshot(c)
        cp_i += 1
    final = frozenset(live)
    return RunResult(
        extinction_time=extinction,
        horizon=float(horizon),
        checkpoints=tuple(snaps),
        boundary_hit=boundary_hit,
        seed=int(seed),
        final_infected=final,
        infected_sets=tuple(sets) if sets is not None else None,
        history=tuple(history) if history is not None else None,
    )


def wilson_interval(k: int, n: int, z: float = 1.959963984540054) -> tuple[float, float]:
    if n <= 0:
        raise EmptyReplicas("no replicas")
    p = k / n
    denom = 1 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    # at k = 0 and k = n one end is exactly 0 or 1; rounding must not move it
    lo = 0.0 if k == 0 else max(0.0, centre - half)
    hi = 1.0 if k == n else min(1.0, centre + half)
    return lo, hi


def survival_estimate(topology: Topology, rates: Rates, wake_law: InterarrivalLaw, config: Configuration,
                      T: float, replicas: int, seed: int = 0) -> tuple[float, tuple[float, float]]:
    """Fraction of replicas with extinction time beyond ``T`` and its Wilson 95% interval."""
    if replicas < 1:
        raise EmptyReplicas("replicas must be at least 1")
    alive = 0
    for i in range(replicas):
        res = run(topology, rates, wake_law, config, T, seed=streams.replica_seed(seed, i))
        alive += res.survived(T)
    return alive / replicas, wilson_interval(alive, replicas)
