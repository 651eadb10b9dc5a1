"""Brute-force discrete-time approximation, used only to cross-check the engine.

Time advances in steps of ``dt``.  In each step every Poisson clock rings
with probability ``rate * dt`` and renewal clocks ring when their next
(pre-sampled) point falls in the step.  Within a step symbols act in the
order recovery, sleep, wake, then infection edge by edge, each edge reading
the state left by the previous one.  Bias is O(dt).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..errors import InvalidStep
from ..renewal import InterarrivalLaw
from ..topology import Topology
from .core import Checkpoint, Configuration, Rates, RunResult


@dataclass(frozen=True)
class OracleBatch:
    infected: np.ndarray          # (replicas, n) infected at the horizon
    extinction_time: np.ndarray   # nan where the infection survived
    counts: np.ndarray            # (replicas, len(checkpoints)) infected counts

    @property
    def replicas(self) -> int:
        return self.infected.shape[0]


def _advance_renewal(nxt: np.ndarray, fire_before: float, law: InterarrivalLaw,
                     rng: np.random.Generator) -> np.ndarray:
    """Mask of clocks with a point ``<= fire_before``; moves those past it."""
    fired = nxt <= fire_before
    if fired.any():
        pending = fired.copy()
        while pending.any():
            idx = np.nonzero(pending)
            nxt[idx] += law.sample(rng, idx[0].size)
            pending = nxt <= fire_before
    return fired


def oracle_batch(topology: Topology, rates: Rates, wake_law: InterarrivalLaw, config: Configuration,
                 dt: float, horizon: float, replicas: int, rng: np.random.Generator,
                 checkpoints: Sequence[float] = ()) -> OracleBatch:
    if not dt > 0:
        raise InvalidStep(f"dt must be positive, got {dt}")
    n, R = topology.n, replicas
    steps = int(math.ceil(horizon / dt - 1e-9))
    inf = np.zeros((R, n), dtype=bool)
    act = np.zeros((R, n), dtype=bool)
    inf[:, sorted(config.infected)] = True
    act[:, sorted(config.active)] = True
    shape = (R, n)
    next_wake = wake_law.sample(rng, R * n).reshape(shape)
    rec_law = rates.recovery_law
    next_rec = rec_law.sample(rng, R * n).reshape(shape) if rec_law is not None else None
    p_rec = rates.delta * dt
    p_sleep = rates.sigma * dt
    lam = rates.infection
    edges = [(int(u), int(v)) for u, v in topology.edges]
    live_types = [(k, lam[k] * dt, k < 2, k % 2 == 0) for k in range(4) if lam[k] > 0]
    ext = np.full(R, np.nan)
    ext[~inf.any(axis=1)] = 0.0
    cps = sorted(float(c) for c in checkpoints)
    counts = np.zeros((R, len(cps)), dtype=np.int64)
    cp_i = 0
    while cp_i < len(cps) and cps[cp_i] <= 0:
        counts[:, cp_i] = inf.sum(axis=1)
        cp_i += 1

    for k in range(steps):
        t_end = (k + 1) * dt
        if rec_law is not None:
            rec = _advance_renewal(next_rec, t_end, rec_law, rng)
        elif p_rec > 0:
            rec = rng.random(shape) < p_rec
        else:
            rec = None
        if rec is not None:
            inf &= ~(rec & act)
        if p_sleep > 0:
            act &= ~(rng.random(shape) < p_sleep)
        act |= _advance_renewal(next_wake, t_end, wake_law, rng)
        if live_types and edges:
            ring = rng.random((R, len(edges), len(live_types)))
            for j, (u, v) in enumerate(edges):
                for m, (_, p, src_active, dst_active) in enumerate(live_types):
                    hit = ring[:, j, m] < p
                    if not hit.any():
                        continue
                    iu, iv, au, av = inf[:, u], inf[:, v], act[:, u], act[:, v]
                    fwd = hit & iu & (au == src_active) & (av == dst_active)
                    bwd = hit & iv & (av == src_active) & (au == dst_active)
                    inf[:, v] |= fwd
                    inf[:, u] |= bwd
        newly_dead = np.isnan(ext) & ~inf.any(axis=1)
        ext[newly_dead] = t_end
        while cp_i < len(cps) and cps[cp_i] <= t_end + 1e-12:
            counts[:, cp_i] = inf.sum(axis=1)
            cp_i += 1
    return OracleBatch(inf, ext, counts)


def oracle_run(topology: Topology, rates: Rates, wake_law: InterarrivalLaw, config: Configuration,
               dt: float, horizon: float, rng: np.random.Generator,
               checkpoints: Sequence[float] = (), seed: int = 0) -> RunResult:
    """Single-replica oracle with the engine's result type."""
    b = oracle_batch(topology, rates, wake_law, config, dt, horizon, 1, rng, checkpoints)
    ext = None if math.isnan(b.extinction_time[0]) else float(b.extinction_time[0])
    cps = tuple(Checkpoint(float(c), int(b.counts[0, i]), None) for i, c in enumerate(sorted(checkpoints)))
    return RunResult(
        extinction_time=ext,
        horizon=float(horizon),
        checkpoints=cps,
        boundary_hit=False,
        seed=int(seed),
        final_infected=frozenset(int(x) for x in np.nonzero(b.infected[0])[0]),
    )
