"""Interarrival laws, renewal traces and the limit law of the scaled excess time."""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from typing import Any, Iterable, Sequence

import numpy as np
from scipy import integrate, optimize, special

from .errors import EmptyReplicas, InvalidAlpha, InvalidLaw, NeedsExtension, TraceTooShort

__all__ = [
    "InterarrivalLaw",
    "Exponential",
    "ParetoTail",
    "LogPareto",
    "law_from_config",
    "sample_interarrival",
    "PointTrace",
    "RenewalStream",
    "simulate_trace",
    "current_excess",
    "dl_constant",
    "dl_cdf",
    "dl_quantile",
    "dl_empirical",
    "dl_ks_distance",
    "dl_sup_distance",
    "excess_ratios",
    "first_point_after",
    "gap_probe",
    "DEFAULT_DL_GRID",
]

_CHUNK = 64


class InterarrivalLaw:
    """Base class of the interarrival laws on (0, inf).

    Subclasses provide the survival function and its inverse; sampling is
    always by inversion of a uniform in (0, 1], so a given uniform maps to a
    fixed duration for every law.
    """

    kind: str = ""
    alpha: float | None = None

    def survival(self, t):
        raise NotImplementedError

    def inverse_survival(self, u):
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        u = 1.0 - rng.random(size)
        return np.asarray(self.inverse_survival(u), dtype=float)

    def to_config(self) -> dict[str, Any]:
        raise NotImplementedError

    @property
    def heavy_tailed(self) -> bool:
        return self.alpha is not None


@dataclass(frozen=True)
class Exponential(InterarrivalLaw):
    rate: float
    kind = "exponential"
    alpha = None

    def __post_init__(self):
        if not (self.rate > 0 and math.isfinite(self.rate)):
            raise InvalidLaw(f"exponential rate must be positive, got {self.rate}")

    def survival(self, t):
        t = np.asarray(t, dtype=float)
        return np.exp(-self.rate * np.maximum(t, 0.0))

    def inverse_survival(self, u):
        return -np.log(u) / self.rate

    def to_config(self):
        return {"kind": "exponential", "rate": self.rate}


@dataclass(frozen=True)
class ParetoTail(InterarrivalLaw):
    """Survival ``min(1, (xm / t) ** alpha)`` with ``alpha`` in (0, 1)."""

    alpha: float
    xm: float = 1.0
    kind = "pareto"

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise InvalidLaw(f"pareto alpha must lie in (0, 1), got {self.alpha}")
        if not self.xm > 0:
            raise InvalidLaw(f"pareto scale must be positive, got {self.xm}")

    def survival(self, t):
        t = np.asarray(t, dtype=float)
        with np.errstate(divide="ignore"):
            return np.minimum(1.0, (self.xm / t) ** self.alpha)

    def inverse_survival(self, u):
        return self.xm * np.asarray(u, dtype=float) ** (-1.0 / self.alpha)

    def to_config(self):
        return {"kind": "pareto", "alpha": self.alpha, "xm": self.xm}


@dataclass(frozen=True)
class LogPareto(InterarrivalLaw):
    """Pareto tail with a logarithmic slowly varying factor.

    The tail is ``f(t) = ln(e + t) ** logexp * t ** -alpha * scale``; the
    survival function is 1 up to the last crossing ``f = 1`` and ``f`` after.
    Construction fails if ``f`` is not decreasing past that crossing.
    """

    alpha: float
    logexp: float = 1.0
    scale: float = 1.0
    kind = "logpareto"

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise InvalidLaw(f"logpareto alpha must lie in (0, 1), got {self.alpha}")
        if not self.scale > 0:
            raise InvalidLaw(f"logpareto scale must be positive, got {self.scale}")
        ys = np.linspace(-30.0, 700.0, 20001)
        above = np.nonzero(self._log_f(ys) >= 0.0)[0]
        if above.size == 0:
            y0 = ys[0]
        else:
            i = above[-1]
            if i == ys.size - 1:
                raise InvalidLaw("logpareto tail never drops below 1")
            y0 = optimize.brentq(self._log_f, ys[i], ys[i + 1], xtol=1e-14)
        # f' < 0  <=>  logexp * t < alpha * (e + t) * ln(e + t); the right side minus
        # the left is convex in t, so checking its minimum on [t0, inf) suffices.
        t0 = math.exp(y0)
        if self.logexp > 0:
            tstar = max(t0, math.exp(self.logexp / self.alpha - 1.0) - math.e)
            h = self.alpha * (math.e + tstar) * math.log(math.e + tstar) - self.logexp * tstar
            if h <= 0:
                raise InvalidLaw("logpareto tail is not decreasing past its unit crossing")
        object.__setattr__(self, "_y0", float(y0))

    def _log_f(self, y):
        y = np.asarray(y, dtype=float)
        return self.logexp * np.log(np.logaddexp(1.0, y)) - self.alpha * y + math.log(self.scale)

    @property
    def t_start(self) -> float:
        return math.exp(self._y0)

    def survival(self, t):
        t = np.asarray(t, dtype=float)
        with np.errstate(divide="ignore"):
            y = np.log(np.maximum(t, 1e-300))
        return np.where(y <= self._y0, 1.0, np.exp(np.minimum(self._log_f(y), 0.0)))

    def inverse_survival(self, u):
        logu = np.log(np.asarray(u, dtype=float))
        lo = np.full(logu.shape, self._y0)
        hi = np.full(logu.shape, self._y0 + 1.0)
        for _ in range(200):
            short = self._log_f(hi) > logu
            if not short.any():
                break
            hi = np.where(short, lo + 2.0 * (hi - lo), hi)
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            above = self._log_f(mid) > logu
            lo = np.where(above, mid, lo)
            hi = np.where(above, hi, mid)
        with np.errstate(over="ignore"):
            return np.exp(hi)

    def to_config(self):
        return {"kind": "logpareto", "alpha": self.alpha, "logexp": self.logexp, "scale": self.scale}


def law_from_config(cfg: dict[str, Any]) -> InterarrivalLaw:
    """Build a law from a tagged record such as ``{"kind": "pareto", "alpha": 0.5, "xm": 1}``."""
    kind = cfg.get("kind")
    if kind == "exponential":
        return Exponential(float(cfg["rate"]))
    if kind == "pareto":
        return ParetoTail(float(cfg["alpha"]), float(cfg.get("xm", 1.0)))
    if kind == "logpareto":
        return LogPareto(float(cfg["alpha"]), float(cfg.get("logexp", 1.0)), float(cfg.get("scale", 1.0)))
    raise InvalidLaw(f"unknown law kind {kind!r}")


def sample_interarrival(law: InterarrivalLaw, rng: np.random.Generator) -> float:
    return float(law.sample(rng, 1)[0])


def _accumulate(base: float, steps: np.ndarray) -> np.ndarray:
    # sequential left-to-right sums, so chunk boundaries never change rounding
    return np.cumsum(np.concatenate(([base], steps)))[1:]


class PointTrace:
    """Renewal points ``S_1 < S_2 < ...`` of a non-delayed renewal process.

    ``times`` holds the points up to ``horizon``.  The generator also keeps
    the first point beyond the horizon so excess times are available for
    every ``t <= horizon``.  Points are drawn in fixed-size chunks from a
    stream owned by the trace, so extension is a deterministic continuation.
    A trace without a generator is fixed and cannot be extended.
    """

    def __init__(self, law: InterarrivalLaw | None, rng: np.random.Generator | None = None,
                 times: Iterable[float] = (), horizon: float = 0.0):
        self.law = law
        self._rng = rng
        self._pts: list[float] = [float(x) for x in times]
        if any(b <= a for a, b in zip(self._pts, self._pts[1:])) or (self._pts and self._pts[0] <= 0):
            raise ValueError("trace times must be positive and strictly increasing")
        self.horizon = float(horizon)

    @classmethod
    def from_times(cls, times: Iterable[float], horizon: float | None = None) -> "PointTrace":
        times = list(times)
        if horizon is None:
            horizon = times[-1] if times else 0.0
        return cls(None, None, times, horizon)

    @property
    def extendable(self) -> bool:
        return self._rng is not None

    @property
    def times(self) -> tuple[float, ...]:
        k = bisect.bisect_right(self._pts, self.horizon)
        return tuple(self._pts[:k])

    @property
    def generated(self) -> Sequence[float]:
        return self._pts

    def _grow(self):
        base = self._pts[-1] if self._pts else 0.0
        self._pts.extend(_accumulate(base, self.law.sample(self._rng, _CHUNK)).tolist())

    def extend(self, horizon: float) -> "PointTrace":
        if horizon > self.horizon:
            if self._rng is None:
                raise NeedsExtension(f"fixed trace cannot be extended to {horizon}")
            while not self._pts or self._pts[-1] <= horizon:
                self._grow()
            self.horizon = float(horizon)
        return self

    def next_point(self, t: float, inclusive: bool = False) -> float:
        """First point ``> t`` (or ``>= t`` if inclusive), extending as needed."""
        if self._rng is not None:
            while not self._pts or self._pts[-1] <= t:
                self._grow()
            if t > self.horizon:
                self.horizon = float(t)
        pts = self._pts
        i = bisect.bisect_left(pts, t) if inclusive else bisect.bisect_right(pts, t)
        if i == len(pts):
            raise NeedsExtension(f"no generated point after t={t}")
        return pts[i]

    def last_point(self, t: float) -> float:
        """Last point ``<= t`` with the origin ``S_0 = 0`` as fallback."""
        i = bisect.bisect_right(self._pts, t)
        return self._pts[i - 1] if i else 0.0

    def excess(self, t: float) -> float:
        return self.next_point(t) - t

    def current(self, t: float) -> float:
        return t - self.last_point(t)

    def has_point_in(self, a: float, b: float) -> bool:
        """Whether some point lies in the closed interval ``[a, b]``."""
        return self.next_point(a, inclusive=True) <= b

    def __len__(self):
        return len(self.times)

    def __repr__(self):
        return f"PointTrace(n={len(self)}, horizon={self.horizon}, law={self.law})"


class RenewalStream:
    """Forward-only renewal points for very long time ranges.

    Only the current chunk is kept in memory, so queries must come in
    nondecreasing time order.  ``max_time`` caps how far the stream may be
    generated; queries beyond it raise :class:`TraceTooShort`.
    """

    def __init__(self, law: InterarrivalLaw, rng: np.random.Generator, max_time: float = math.inf):
        self.law = law
        self._rng = rng
        self.max_time = max_time
        self._chunk = np.empty(0)
        self._base = 0.0
        self._size = 256
        self._last_query = -math.inf

    def next_point(self, t: float) -> float:
        if t < self._last_query:
            raise ValueError("RenewalStream queries must be nondecreasing in time")
        self._last_query = t
        if t >= self.max_time:
            raise TraceTooShort(f"query time {t:.6g} beyond stream cap {self.max_time:.6g}")
        while self._chunk.size == 0 or self._chunk[-1] <= t:
            base = self._chunk[-1] if self._chunk.size else self._base
            self._chunk = _accumulate(base, self.law.sample(self._rng, self._size))
            self._size = min(2 * self._size, 1 << 20)
        i = int(np.searchsorted(self._chunk, t, side="right"))
        return float(self._chunk[i])

    def excess(self, t: float) -> float:
        return self.next_point(t) - t


def simulate_trace(law: InterarrivalLaw, horizon: float, rng: np.random.Generator) -> PointTrace:
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    trace = PointTrace(law, rng)
    trace._grow()
    return trace.extend(horizon)


def current_excess(trace: PointTrace, t: float) -> tuple[float, float]:
    """Current and excess time of ``trace`` at ``t`` (no automatic extension)."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    pts = trace.generated
    i = bisect.bisect_right(pts, t)
    if i == len(pts):
        raise NeedsExtension(f"no generated point exceeds t={t}")
    last = pts[i - 1] if i else 0.0
    return t - last, pts[i] - t


# -- limit law of E(t)/t ----------------------------------------------------------

def _check_alpha(alpha: float):
    if not (0.0 < alpha < 1.0):
        raise InvalidAlpha(f"alpha must lie in (0, 1), got {alpha}")


def dl_constant(alpha: float) -> float:
    _check_alpha(alpha)
    return 1.0 / (special.gamma(alpha) * special.gamma(1.0 - alpha))


def _alg_integral(beta: float, z: float) -> float:
    """int_0^z s^-beta / (1 + s) ds for z in (0, 1]; singular weight handled by QUADPACK."""
    if z <= 0.0:
        return 0.0
    val, _ = integrate.quad(lambda s: 1.0 / (1.0 + s), 0.0, z, weight="alg", wvar=(-beta, 0.0),
                            epsabs=1e-13, epsrel=1e-12, limit=200)
    return val


def dl_cdf(alpha: float, x: float) -> float:
    """Limit law of ``E(t) / t``: integral of ``C / (y**alpha * (1 + y))`` over [0, x].

    The range is split at 1; beyond it ``y = 1/s`` maps the tail to another
    integral over (0, 1] with an algebraic endpoint weight.
    """
    _check_alpha(alpha)
    if x <= 0.0:
        return 0.0
    c = dl_constant(alpha)
    if x <= 1.0:
        return c * _alg_integral(alpha, x)
    head = _alg_integral(alpha, 1.0)
    tail = _alg_integral(1.0 - alpha, 1.0) - _alg_integral(1.0 - alpha, 1.0 / x)
    return min(1.0, c * (head + tail))


def dl_quantile(alpha: float, p: float) -> float:
    """Smallest ``x`` with ``dl_cdf(alpha, x) = p``."""
    _check_alpha(alpha)
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1)")
    hi = 1.0
    while dl_cdf(alpha, hi) < p:
        hi *= 10.0
    return optimize.brentq(lambda x: dl_cdf(alpha, x) - p, 0.0, hi, xtol=1e-15, rtol=1e-13)


DEFAULT_DL_GRID = tuple([0.0] + np.logspace(-4, 4, 81).tolist())


def first_point_after(law: InterarrivalLaw, t: float, n: int, rng: np.random.Generator,
                      inclusive: bool = False) -> np.ndarray:
    """First renewal point after ``t`` (at or after when ``inclusive``) in ``n`` independent traces."""
    pos = np.zeros(n)
    live = np.arange(n)
    while live.size:
        pos[live] += law.sample(rng, live.size)
        p = pos[live]
        live = live[(p < t) if inclusive else (p <= t)]
    return pos


def dl_empirical(law: InterarrivalLaw, t: float, n: int, grid: Sequence[float] = DEFAULT_DL_GRID,
                 rng: np.random.Generator | None = None) -> tuple[np.ndarray, float]:
    """Empirical CDF of ``E(t)/t`` over ``n`` replicas, and its sup distance to :func:`dl_cdf`."""
    if n <= 0:
        raise EmptyReplicas("dl_empirical needs at least one replica")
    if not law.heavy_tailed:
        raise InvalidLaw("the excess-ratio limit needs a Pareto-class law")
    if t <= 0:
        raise ValueError("t must be positive")
    rng = rng if rng is not None else np.random.default_rng()
    return dl_sup_distance(law.alpha, excess_ratios(law, t, n, rng), grid)


def excess_ratios(law: InterarrivalLaw, t: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` independent draws of ``E(t)/t``."""
    return (first_point_after(law, t, n, rng) - t) / t


def dl_ks_distance(alpha: float, ratios) -> float:
    """Exact sup distance between the empirical CDF of ``ratios`` and :func:`dl_cdf`.

    The empirical CDF jumps only at the samples, so checking both sides of
    each jump covers the whole line.
    """
    x = np.sort(np.asarray(ratios, dtype=float))
    n = x.size
    if n == 0:
        raise EmptyReplicas("no samples")
    uniq, last = np.unique(x[::-1], return_index=True)
    upper = (n - last) / n                     # F_n at each distinct sample
    lower = np.concatenate(([0.0], upper[:-1]))  # F_n just below it
    exact = np.array([dl_cdf(alpha, v) for v in uniq])
    return float(max(np.max(np.abs(upper - exact)), np.max(np.abs(exact - lower))))


def dl_sup_distance(alpha: float, ratios, grid: Sequence[float] = DEFAULT_DL_GRID) -> tuple[np.ndarray, float]:
    """Empirical CDF of ``ratios`` on ``grid`` and its largest gap to :func:`dl_cdf`."""
    ratio = np.sort(np.asarray(ratios, dtype=float))
    if ratio.size == 0:
        raise EmptyReplicas("no samples")
    grid = np.asarray(grid, dtype=float)
    emp = np.searchsorted(ratio, grid, side="right") / ratio.size
    exact = np.array([dl_cdf(alpha, x) for x in grid])
    return emp, float(np.max(np.abs(emp - exact)))


def gap_probe(law: InterarrivalLaw, t: float, eps: float, n: int,
              rng: np.random.Generator | None = None) -> tuple[float, float, bool]:
    """Monte Carlo check of the gap condition at a single time ``t``.

    Returns the estimated probability of a renewal point in ``[t, t + t**eps]``,
    the bound ``t**-eps`` and whether the estimate respects the bound.
    """
    if n <= 0:
        raise EmptyReplicas("gap_probe needs at least one replica")
    if t <= 0 or not 0 < eps < 1:
        raise ValueError("need t > 0 and eps in (0, 1)")
    rng = rng if rng is not None else np.random.default_rng()
    first = first_point_after(law, t, n, rng, inclusive=True)
    estimate = float(np.mean(first <= t + t ** eps))
    bound = t ** -eps
    return estimate, bound, estimate <= bound
