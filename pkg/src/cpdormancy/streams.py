"""Counter-based random substreams.

Every random clock in a simulation is addressed by a tuple of integers
(root seed, clock kind, site or edge label, ...).  The tuple is hashed with
the splitmix64 finalizer into a 64-bit key, and uniforms are produced by
hashing ``(key, counter)``.  Two clocks never share state, so changing one
part of a model (say an infection rate) never perturbs the draws of another
(say a sleep clock), and any block of any clock can be regenerated on demand.
"""
from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
_TO_UNIT = 2.0 ** -53

# clock kinds
REC = 1
SLEEP = 2
WAKE = 3
INF = 4
REPLICA = 5
FIELD = 6
RACE = 7
SLEEP_DORMANT = 8


def mix64(x: int) -> int:
    """splitmix64 finalizer: a bijective avalanche on 64-bit integers."""
    z = (x + _GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def derive(root: int, *parts: int) -> int:
    """Key of the substream named by ``parts`` under ``root``."""
    key = mix64(root & MASK64)
    for p in parts:
        key = mix64(key ^ mix64((p * _GOLDEN) & MASK64))
    return key


def uniform(key: int, counter: int) -> float:
    """The ``counter``-th uniform of stream ``key``, in (0, 1]."""
    return ((mix64(key ^ ((counter * _M2) & MASK64)) >> 11) + 1) * _TO_UNIT


def generator(key: int) -> np.random.Generator:
    """A numpy generator for sequential (lazily extended) streams."""
    return np.random.default_rng(key & MASK64)


def replica_seed(root: int, replica: int) -> int:
    return derive(root, REPLICA, replica)
