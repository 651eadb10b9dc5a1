"""Point processes of the graphical construction and the activity they induce.

All clocks answer ``next_point(t, inclusive)``: the first point after ``t``
(at or after when ``inclusive``), or ``inf`` if there is none.
"""
from __future__ import annotations

import bisect
import math
from typing import Iterable

from .. import streams
from ..renewal import PointTrace

INF = math.inf
_BLOCK_MEAN = 4.0
_CACHE_BLOCKS = 8


class PoissonClock:
    """Homogeneous Poisson process with random access by time blocks.

    Time is cut into blocks of length ``4 / rate``; the points of block ``k``
    come from the counter stream ``(key, k)``, so any block can be produced
    without generating the ones before it.
    """

    __slots__ = ("key", "rate", "span", "_cache")

    def __init__(self, key: int, rate: float):
        self.key = key
        self.rate = rate
        self.span = _BLOCK_MEAN / rate if rate > 0 else INF
        self._cache: dict[int, list[float]] = {}

    def block(self, k: int) -> list[float]:
        pts = self._cache.get(k)
        if pts is not None:
            return pts
        key = streams.mix64(self.key ^ ((k * 0x2545F4914F6CDD1D) & streams.MASK64))
        lo = k * self.span
        hi = lo + self.span
        t = lo
        rate = self.rate
        pts = []
        i = 0
        while True:
            t -= math.log(streams.uniform(key, i)) / rate
            i += 1
            if t >= hi:
                break
            pts.append(t)
        if len(self._cache) >= _CACHE_BLOCKS:
            self._cache.clear()
        self._cache[k] = pts
        return pts

    def next_point(self, t: float, inclusive: bool = False) -> float:
        if self.rate <= 0:
            return INF
        k = int(t // self.span) if t > 0 else 0
        while True:
            pts = self.block(k)
            if pts:
                i = bisect.bisect_left(pts, t) if inclusive else bisect.bisect_right(pts, t)
                if i < len(pts):
                    return pts[i]
            k += 1

    def prev_point(self, t: float) -> float | None:
        """Last point ``<= t``, or None."""
        if self.rate <= 0 or t < 0:
            return None
        k = int(t // self.span)
        while k >= 0:
            pts = self.block(k)
            i = bisect.bisect_right(pts, t)
            if i:
                return pts[i - 1]
            k -= 1
        return None


class FixedClock:
    """A finite, explicitly given point set (scripted runs)."""

    __slots__ = ("times",)

    def __init__(self, times: Iterable[float] = ()):
        self.times = sorted(float(x) for x in times)

    def next_point(self, t: float, inclusive: bool = False) -> float:
        pts = self.times
        i = bisect.bisect_left(pts, t) if inclusive else bisect.bisect_right(pts, t)
        return pts[i] if i < len(pts) else INF

    def prev_point(self, t: float) -> float | None:
        i = bisect.bisect_right(self.times, t)
        return self.times[i - 1] if i else None


class TraceClock:
    """Adapter giving a lazily extended :class:`PointTrace` the clock interface."""

    __slots__ = ("trace",)

    def __init__(self, trace: PointTrace):
        self.trace = trace

    def next_point(self, t: float, inclusive: bool = False) -> float:
        return self.trace.next_point(t, inclusive)

    def prev_point(self, t: float) -> float | None:
        self.trace.next_point(t)
        i = bisect.bisect_right(self.trace.generated, t)
        return self.trace.generated[i - 1] if i else None


NEVER = FixedClock()


class ActivityTrack:
    """Activity trajectory of one site, built lazily from its wake and sleep clocks.

    A site is active iff its last wake point is later than its last sleep
    point, or it started active and neither clock has rung.  Equal wake and
    sleep times count as dormant.  ``switches`` holds the times at which the
    activity flips, starting from ``initial``.
    """

    __slots__ = ("initial", "wake", "sleep", "switches", "_done")

    def __init__(self, initial: bool, wake, sleep):
        self.initial = initial
        self.wake = wake
        self.sleep = sleep
        self.switches: list[float] = []
        self._done = False

    def _step(self):
        sw = self.switches
        active = self.initial if len(sw) % 2 == 0 else not self.initial
        if active:
            # right after a wake, a sleep at the same instant wins the tie
            nxt = self.sleep.next_point(sw[-1] if sw else 0.0, inclusive=bool(sw))
        else:
            nxt = self.wake.next_point(sw[-1] if sw else 0.0, inclusive=False)
        if nxt == INF:
            self._done = True
        else:
            sw.append(nxt)

    def state_at(self, t: float) -> tuple[bool, float]:
        """Activity at ``t`` (right-continuous) and the time of the next flip."""
        sw = self.switches
        while not self._done and (not sw or sw[-1] <= t):
            self._step()
        i = bisect.bisect_right(sw, t)
        active = self.initial if i % 2 == 0 else not self.initial
        return active, (sw[i] if i < len(sw) else INF)

    def active_at(self, t: float) -> bool:
        return self.state_at(t)[0]

    def last_wake(self, t: float) -> float | None:
        return self.wake.prev_point(t)

    def flips_until(self, t: float) -> tuple[float, ...]:
        self.state_at(t)
        return tuple(x for x in self.switches if x <= t)


class GapActivity:
    """Random-access activity of a site with a renewal wake clock and Poisson sleep clock.

    The wake points ``w_1 < w_2 < ...`` (with ``w_0 = 0``) cut time into
    gaps.  By memorylessness the first sleep point after ``w_j`` is
    ``w_j + E_j`` with ``E_j`` an exponential keyed by ``j``; it counts only
    if it comes before ``w_{j+1}``.  Further sleep points of a gap fall in a
    dormant stretch and are drawn from a separate Poisson clock by whoever
    needs them.  So the site is active at ``t`` iff ``E_J > t - w_J`` for the
    last wake ``w_J <= t`` (for ``J = 0`` only if it started active), and the
    state at any time costs one lookup instead of replaying the history.
    """

    __slots__ = ("initial", "wake", "key", "rate", "_off")

    def __init__(self, initial: bool, wake: TraceClock, key: int, rate: float):
        self.initial = initial
        self.wake = wake
        self.key = key
        self.rate = rate
        self._off: dict[int, float] = {}

    def offset(self, j: int) -> float:
        """Delay from the ``j``-th wake to the first sleep point after it."""
        off = self._off.get(j)
        if off is None:
            off = -math.log(streams.uniform(self.key, j)) / self.rate if self.rate > 0 else INF
            self._off[j] = off
        return off

    def _points(self, t: float) -> list[float]:
        trace = self.wake.trace
        trace.next_point(t)
        return trace.generated

    def state_at(self, t: float) -> tuple[bool, float]:
        pts = self._points(t)
        j = bisect.bisect_right(pts, t)
        if j == 0 and not self.initial:
            return False, pts[0]
        w = pts[j - 1] if j else 0.0
        end = w + self.offset(j)
        if end <= t:
            return False, pts[j]
        if end == INF:
            return True, INF
        # active: wakes before the sleep point are absorbed and start a new gap
        while True:
            if j == len(pts):
                pts = self._points(pts[-1])
            nxt = pts[j]
            if end < nxt:
                return True, end
            j += 1
            end = nxt + self.offset(j)

    def active_at(self, t: float) -> bool:
        return self.state_at(t)[0]

    def last_wake(self, t: float) -> float | None:
        pts = self._points(t)
        j = bisect.bisect_right(pts, t)
        return pts[j - 1] if j else None
