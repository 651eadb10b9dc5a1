"""Iterated site percolation under sup-norm adjacency and the cube coupling for lattice growth.

Sets of lattice sites are handled as integer coordinate arrays of shape
``(k, d)``.  Two sites are adjacent when their sup-norm distance is 1, so
every site has ``3**d - 1`` neighbours.
"""
from __future__ import annotations

import bisect
import csv
import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import ndimage
from scipy.optimize import brentq

from .engine.core import ClockBank, Configuration, Rates, RunResult, run
from .errors import (
    InvalidParams,
    PreconditionLambdaDD,
    TraceTooShort,
    WindowCapExceeded,
    WindowExhausted,
)
from .renewal import InterarrivalLaw, PointTrace, dl_cdf
from .topology import Topology

__all__ = [
    "PercolationField",
    "sample_field",
    "cluster_closure",
    "IterationResult",
    "iterate",
    "CubeGrid",
    "classify_cube",
    "TimeSequence",
    "time_sequence",
    "choose_s_sequence",
    "CouplingReport",
    "coupling_check",
    "write_radii_csv",
]


def _offsets(d: int) -> np.ndarray:
    """The ``3**d - 1`` nonzero vectors of sup norm 1."""
    return np.array([o for o in itertools.product((-1, 0, 1), repeat=d) if any(o)], dtype=np.int64)


def _as_sites(sites, d: int | None = None) -> np.ndarray:
    arr = np.asarray(list(sites) if not isinstance(sites, np.ndarray) else sites, dtype=np.int64)
    if arr.size == 0:
        return np.zeros((0, d or 0), dtype=np.int64)
    if arr.ndim == 1:
        arr = arr[:, None]
    return arr


@dataclass
class PercolationField:
    """Open/closed indicators on the box ``[lo, lo + open.shape)``."""

    lo: tuple[int, ...]
    open: np.ndarray
    p: float

    @property
    def d(self) -> int:
        return self.open.ndim

    @property
    def hi(self) -> tuple[int, ...]:
        return tuple(l + s for l, s in zip(self.lo, self.open.shape))

    def contains(self, sites: np.ndarray) -> np.ndarray:
        lo = np.asarray(self.lo)
        hi = np.asarray(self.hi)
        return np.all((sites >= lo) & (sites < hi), axis=1)

    def is_open(self, site: Sequence[int]) -> bool:
        return bool(self.open[tuple(c - l for c, l in zip(site, self.lo))])


def sample_field(lo: Sequence[int], shape: Sequence[int], p: float, rng: np.random.Generator) -> PercolationField:
    if not 0 <= p <= 1:
        raise InvalidParams(f"p must lie in [0, 1], got {p}")
    return PercolationField(tuple(int(x) for x in lo), rng.random(tuple(shape)) < p, p)


def cluster_closure(fld: PercolationField, A) -> np.ndarray:
    """``A`` together with every open cluster that contains or touches a site of ``A``.

    Returns the sites as a sorted ``(k, d)`` array.  Raises
    :class:`WindowExhausted` when an added cluster reaches the window edge,
    since it might continue outside.
    """
    d = fld.d
    A = _as_sites(A, d)
    if len(A) == 0:
        return A.reshape(0, d)
    if not fld.contains(A).all():
        raise WindowExhausted("A is not inside the field window")
    lo = np.asarray(fld.lo)
    idx = A - lo
    struct = np.ones((3,) * d, dtype=bool)
    labels, _ = ndimage.label(fld.open, structure=struct)
    seed = np.zeros(fld.open.shape, dtype=bool)
    seed[tuple(idx.T)] = True
    touch = ndimage.binary_dilation(seed, structure=struct)
    hit = np.unique(labels[touch & fld.open])
    hit = hit[hit > 0]
    out = seed | np.isin(labels, hit)
    if hit.size:
        clusters = np.isin(labels, hit)
        edge = np.zeros_like(clusters)
        for ax in range(d):
            sl = [slice(None)] * d
            sl[ax] = 0
            edge[tuple(sl)] = True
            sl[ax] = -1
            edge[tuple(sl)] = True
        if (clusters & edge).any():
            raise WindowExhausted("an open cluster touches the window boundary")
    return np.argwhere(out) + lo


@dataclass
class IterationResult:
    radii: list[int]
    cells: list[int]
    final: np.ndarray
    sets: list[np.ndarray] | None = None


class _Window:
    """Growable box centred at the origin holding the current set and a lazily sampled field.

    Sites are addressed by flat index.  ``band`` marks the sites within
    distance 3 of the window edge; a search never expands a banded site,
    so neighbour offsets applied to unbanded sites stay inside.
    """

    def __init__(self, d: int, half: int):
        self.d = d
        self.half = half
        self.side = 2 * half + 1
        shape = (self.side,) * d
        self.member = np.zeros(shape, dtype=bool)
        self.stamp = np.full(shape, -1, dtype=np.int32)
        self.value = np.zeros(shape, dtype=bool)
        self.band = np.ones(shape, dtype=bool)
        self.band[(slice(3, self.side - 3),) * d] = False
        strides = np.array([self.side ** (d - 1 - i) for i in range(d)], dtype=np.int64)
        self.offsets = _offsets(d) @ strides

    def grow(self, half: int):
        old = (self.member, self.stamp, self.value)
        off = half - self.half
        self.__init__(self.d, half)
        sl = (slice(off, off + old[0].shape[0]),) * self.d
        self.member[sl] = old[0]
        self.stamp[sl] = old[1]
        self.value[sl] = old[2]

    def flat(self, sites: np.ndarray) -> np.ndarray:
        return np.ravel_multi_index(tuple((sites + self.half).T), self.member.shape)

    def sites(self, flat: np.ndarray) -> np.ndarray:
        return np.stack(np.unravel_index(flat, self.member.shape), axis=1) - self.half

    def neighbours(self, flat: np.ndarray) -> np.ndarray:
        return np.unique((flat[:, None] + self.offsets[None, :]).ravel())


def _neighbours(sites: np.ndarray, offs: np.ndarray) -> np.ndarray:
    if len(sites) == 0:
        return sites
    nb = (sites[:, None, :] + offs[None, :, :]).reshape(-1, sites.shape[1])
    return np.unique(nb, axis=0)


def iterate(C0, p: float, n: int, rng: np.random.Generator, d: int | None = None,
            cap: int = 4096, keep_sets: bool = False) -> IterationResult:
    """Iterated percolation growth ``C_k = N[closure_k(C_{k-1})]`` for ``k = 1..n``.

    Each step uses a fresh field, sampled only where the cluster search
    looks.  ``radii[k-1]`` is the largest sup norm seen in ``C_1..C_k``
    (equal to the sup norm of ``C_k`` since the sets increase) and
    ``cells[k-1] = |C_k|``.  The window doubles as needed up to half-width
    ``cap``.
    """
    if not 0 <= p < 1:
        raise InvalidParams(f"p must lie in [0, 1), got {p}")
    C0 = _as_sites(C0, d)
    if len(C0) == 0:
        raise InvalidParams("C_0 must be nonempty")
    d = C0.shape[1]
    r0 = int(np.abs(C0).max())
    half = 8
    while half < r0 + 4:
        half *= 2
    if half > cap:
        raise WindowCapExceeded(f"initial set needs half-width {half} > cap {cap}")
    win = _Window(d, half)
    c0 = np.unique(win.flat(C0))
    win.member.flat[c0] = True
    size = len(c0)
    radius = r0
    frontier = win.neighbours(c0)
    frontier = frontier[~win.member.flat[frontier]]
    radii, cells = [], []
    sets = [] if keep_sets else None

    def grow(*arrays):
        sites = [win.sites(a) for a in arrays]
        new = 2 * win.half
        if new > cap:
            raise WindowCapExceeded(f"window half-width {new} exceeds cap {cap}")
        win.grow(new)
        return [win.flat(s) for s in sites]

    for step in range(n):
        def sample(flat):
            # each site is examined at most once per step, so the stamp marks both
            fresh = flat[win.stamp.flat[flat] != step]
            win.stamp.flat[fresh] = step
            win.value.flat[fresh] = rng.random(fresh.size) < p

        sample(frontier)
        level = frontier[win.value.flat[frontier]]
        reached = [level]
        while len(level):
            while win.band.flat[level].any():
                out = grow(frontier, level, *reached)
                frontier, level, reached = out[0], out[1], out[2:]
            nb = win.neighbours(level)
            nb = nb[~win.member.flat[nb] & (win.stamp.flat[nb] != step)]
            sample(nb)
            level = nb[win.value.flat[nb]]
            reached.append(level)
        cluster = np.concatenate(reached)
        parts = [frontier, cluster]
        if len(cluster):
            parts.append(win.neighbours(cluster))
        added = np.unique(np.concatenate(parts))
        added = added[~win.member.flat[added]]
        win.member.flat[added] = True
        size += len(added)
        if len(added):
            radius = max(radius, int(np.abs(win.sites(added)).max()))
        while win.band.flat[added].any():
            added, frontier = grow(added, frontier)
        frontier = win.neighbours(added)
        frontier = frontier[~win.member.flat[frontier]]
        radii.append(radius)
        cells.append(size)
        if sets is not None:
            sets.append(win.sites(np.flatnonzero(win.member)))
    return IterationResult(radii, cells, win.sites(np.flatnonzero(win.member)), sets)


def write_radii_csv(path, results: Sequence[IterationResult]):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["replica", "n", "R_n", "cells"])
        for rep, res in enumerate(results):
            for k, (r, c) in enumerate(zip(res.radii, res.cells), 1):
                w.writerow([rep, k, r, c])


@dataclass(frozen=True)
class CubeGrid:
    """Cubes ``A_i = 2 i + {0, 1}^d`` tiling ``Z^d``."""

    d: int

    def cube_of(self, sites: np.ndarray) -> np.ndarray:
        return np.floor_divide(np.asarray(sites, dtype=np.int64), 2)

    def sites(self, i: Sequence[int]) -> np.ndarray:
        base = 2 * np.asarray(i, dtype=np.int64)
        return base + np.array(list(itertools.product((0, 1), repeat=self.d)), dtype=np.int64)

    def neighbours(self, i: Sequence[int]) -> list[tuple[int, ...]]:
        return [tuple(int(a + o) for a, o in zip(i, off)) for off in _offsets(self.d)]


def _next_in(trace, t: float, inclusive: bool) -> float:
    if isinstance(trace, PointTrace):
        if not trace.extendable:
            pts = trace.generated
            k = bisect.bisect_left(pts, t) if inclusive else bisect.bisect_right(pts, t)
            return pts[k] if k < len(pts) else math.inf
        return trace.next_point(t, inclusive)
    pts = sorted(trace)
    for x in pts:
        if x > t or (inclusive and x == t):
            return x
    return math.inf


def classify_cube(wake_traces: Sequence, sleep_traces: Sequence,
                  t_prev: float, t_cur: float, t_next: float) -> str:
    """``"bad"`` iff every site has no wake in ``[t_prev, t_next]`` and a sleep in ``[t_prev, t_cur)``."""
    if not t_prev < t_cur < t_next:
        raise InvalidParams("need t_prev < t_cur < t_next")
    for tr in list(wake_traces) + list(sleep_traces):
        if isinstance(tr, PointTrace) and not tr.extendable and tr.horizon < t_next:
            raise TraceTooShort(f"trace covers [0, {tr.horizon}] but t_next = {t_next}")
    for wake, sleep in zip(wake_traces, sleep_traces):
        if _next_in(wake, t_prev, True) <= t_next:
            return "good"
        if not _next_in(sleep, t_prev, True) < t_cur:
            return "good"
    return "bad"


@dataclass(frozen=True)
class TimeSequence:
    variant: str
    params: dict
    times: tuple[float, ...]

    def __len__(self):
        return len(self.times)

    def __getitem__(self, k):
        return self.times[k]


def time_sequence(variant: str, k_max: int, t0: float, c: float | None = None,
                  eps_star: float | None = None) -> TimeSequence:
    """``t_0 .. t_{k_max}``: ``S`` is geometric in ``sqrt(1 + c)``, ``G`` adds ``t_k**eps_star``."""
    if not t0 > 0:
        raise InvalidParams(f"t0 must be positive, got {t0}")
    if k_max < 0:
        raise InvalidParams("k_max must be nonnegative")
    v = variant.upper()
    if v == "S":
        if c is None or not c > 0:
            raise InvalidParams("S-type sequences need c > 0")
        times = tuple((1 + c) ** (k / 2) * t0 for k in range(k_max + 1))
        params = {"t0": t0, "c": c}
    elif v == "G":
        if eps_star is None or not 0 < eps_star < 1:
            raise InvalidParams("G-type sequences need eps_star in (0, 1)")
        times = [float(t0)]
        for _ in range(k_max):
            times.append(times[-1] + times[-1] ** eps_star)
        times = tuple(times)
        params = {"t0": t0, "eps_star": eps_star}
    else:
        raise InvalidParams(f"unknown time sequence variant {variant!r}")
    if any(b <= a for a, b in zip(times, times[1:])):
        raise InvalidParams("time sequence is not strictly increasing (step below float resolution)")
    return TimeSequence(v, params, times)


def s_sequence_until(t0: float, c: float, horizon: float) -> TimeSequence:
    """S-type sequence with every ``t_k <= horizon``."""
    k_max = int(math.floor(2 * math.log(horizon / t0) / math.log1p(c))) if horizon >= t0 else 0
    seq = time_sequence("S", k_max, t0, c=c)
    times = tuple(t for t in seq.times if t <= horizon)
    return TimeSequence("S", seq.params, times)


def choose_s_sequence(alpha: float, sigma: float, d: int, p_c: float, t_min: float = 1.0) -> dict:
    """Constants making a cube good with probability at most ``p_c / 2`` at every step.

    Per site, the wake and sleep requirements may each fail with
    probability ``p1``, where ``(1 - p1)**(2**(d+1)) = 1 - p_c/2``.  ``c`` puts
    mass ``p1/2`` of the limiting excess law below ``c``, and ``t0`` is the
    smallest time (at least ``t_min``) making a sleep in ``[t_k, t_{k+1})``
    fail with probability at most ``p1``.
    """
    if not 0 < p_c < 1:
        raise InvalidParams("p_c must lie in (0, 1)")
    if not sigma > 0:
        raise InvalidParams("sigma must be positive")
    p1 = 1 - (1 - p_c / 2) ** (1 / 2 ** (d + 1))
    target = p1 / 2
    hi = 1.0
    while dl_cdf(alpha, hi) < target:
        hi *= 2
    c = brentq(lambda y: dl_cdf(alpha, y) - target, 0.0, hi, xtol=1e-15, rtol=1e-12)
    t0 = max(float(t_min), math.log(1 / p1) / (sigma * (math.sqrt(1 + c) - 1)))
    return {"p1": p1, "c": c, "t0": t0}


@dataclass
class CouplingReport:
    ok: bool
    steps_checked: int
    first_violation: int | None
    saturated_at: int | None
    times: tuple[float, ...] = field(repr=False, default=())


def _cube_set(grid: CubeGrid, top: Topology, sites: Iterable[int]) -> set[tuple[int, ...]]:
    sites = list(sites)
    if not sites:
        return set()
    return {tuple(int(v) for v in row) for row in grid.cube_of(top.coords[sites])}


def _containment(top: Topology, bank: ClockBank, grid: CubeGrid, times: Sequence[float],
                 history: Sequence[tuple[float, int, bool]], initial: frozenset,
                 first: frozenset) -> CouplingReport:
    """Grow the cube sets step by step and compare with the infected sets replayed from ``history``."""
    r = top.params["radius"]
    lo_c, hi_c = -((r + 1) // 2), r // 2
    cube_of = {}

    def cube(x):
        c = cube_of.get(x)
        if c is None:
            c = tuple(int(v) for v in grid.cube_of(top.coords[x]))
            cube_of[x] = c
        return c

    def inside(j):
        return all(lo_c <= a <= hi_c for a in j)

    def box_sites(i):
        out = []
        for s in grid.sites(i):
            v = top.vertex_at(s)
            if v is not None:
                out.append(v)
        return out

    # per-cube infected counts, advanced through the history
    count: dict = {}
    for x in initial:
        count[cube(x)] = count.get(cube(x), 0) + 1
    ever = {cube(x) for x in initial} | {cube(x) for _, x, up in history if up}
    h = 0
    I = {cube(x) for x in first}
    K = len(times) - 1
    for k in range(1, K + 1):
        while h < len(history) and history[h][0] <= times[k]:
            _, x, up = history[h]
            c = cube(x)
            count[c] = count.get(c, 0) + (1 if up else -1)
            h += 1
        if any(n > 0 and c not in I for c, n in count.items()):
            return CouplingReport(False, k, k, None, tuple(times))
        if k == K:
            break
        if ever <= I:
            # I_k only grows, so every later infected set stays inside
            return CouplingReport(True, K, None, k, tuple(times))
        t_prev, t_cur, t_next = times[k - 1], times[k], times[k + 1]
        verdict: dict = {}

        def good(i):
            v = verdict.get(i)
            if v is None:
                v = any(bank.has_wake_in(x, t_prev, t_next) or not bank.has_sleep_in(x, t_prev, t_cur)
                        for x in box_sites(i))
                verdict[i] = v
            return v

        added = set()
        stack = [j for i in I for j in grid.neighbours(i) if j not in I and inside(j)]
        while stack:
            j = stack.pop()
            if j in added:
                continue
            if good(j):
                added.add(j)
                stack.extend(m for m in grid.neighbours(j) if m not in I and m not in added and inside(m))
        grown = I | added
        I = grown | {m for i in grown for m in grid.neighbours(i) if inside(m)}
    return CouplingReport(True, K, None, None, tuple(times))


def coupling_check(topology: Topology, rates: Rates, wake_law: InterarrivalLaw, config: Configuration,
                   times: TimeSequence | Sequence[float], seed: int = 0, grid: CubeGrid | None = None,
                   result: RunResult | None = None) -> CouplingReport:
    """Verify that the infected set at each ``t_k`` lies inside the cube set ``I_k``.

    ``I_1`` holds the cubes infected at ``t_1`` in the same realization with
    recoveries switched off; ``I_{k+1}`` adds to ``I_k`` the good cube
    clusters touching it and then all neighbouring cubes, each cube being
    classified at most once per step.  ``result``, if given, must come from
    ``run(..., record_history=True)`` with the same seed and a horizon of at
    least the last time; otherwise it is simulated.
    """
    if rates.lambda_dd > 0:
        raise PreconditionLambdaDD("the cube coupling needs lambda_dd = 0")
    if topology.coords is None or topology.params.get("boundary") == "periodic":
        raise InvalidParams("the cube coupling needs an absorbing lattice box")
    times = tuple(times.times if isinstance(times, TimeSequence) else times)
    if len(times) < 2:
        raise InvalidParams("need at least t_0 and t_1")
    grid = grid or CubeGrid(topology.params["d"])
    if not config.infected:
        return CouplingReport(True, 0, None, None, times)
    if result is None:
        result = run(topology, rates, wake_law, config, times[-1], seed=seed, record_history=True)
    if result.history is None or result.horizon < times[-1]:
        raise InvalidParams("run result must record its history up to the last time")
    if rates.delta > 0 or rates.recovery_law is not None:
        free = run(topology, rates.replace(delta=0.0, recovery_law=None), wake_law, config, times[1],
                   seed=seed, record_history=False)
        first = free.final_infected
    else:
        first = frozenset(config.infected) | frozenset(x for t, x, up in result.history if up and t <= times[1])
    bank = ClockBank(topology, rates, wake_law, seed, config.active)
    return _containment(topology, bank, grid, times, result.history, frozenset(config.infected), first)
