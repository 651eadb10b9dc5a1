"""Survival and extinction machinery on finite graphs.

Cardinality thresholds, the polynomially growing interval scheme with its
window events, the Galton-Watson offspring probability of the tree
coupling, the interval recursion driven by the wake clocks, and the lower
bound on the probability of an extinction-forcing interval.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from decimal import ROUND_CEILING, Decimal, localcontext
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from .errors import InvalidAlpha, InvalidEpsilon, InvalidParams, InvalidRates, TraceTooShort
from . import streams
from .renewal import InterarrivalLaw, RenewalStream
from .topology import EdgeSequence

__all__ = [
    "thresholds",
    "IntervalScheme",
    "interval_scheme",
    "EventWindow",
    "ExplicitTraces",
    "detect_events",
    "gw_offspring_prob",
    "gw_race_estimate",
    "RecursionStep",
    "ExtinctionRecursionState",
    "extinction_recursion",
    "recursion_streams",
    "bad_interval_prob_bound",
    "write_scheme_csv",
    "write_recursion_csv",
]


def thresholds(alpha: float) -> tuple[float, float]:
    """Vertex counts above which survival and below which extinction is guaranteed."""
    if not 0 < alpha < 1:
        raise InvalidAlpha(f"alpha must lie in (0, 1), got {alpha}")
    survive = 1 / (1 - alpha)
    die = 2 + (2 * alpha - 1) / ((1 - alpha) * (2 - alpha))
    return survive, die


@dataclass(frozen=True)
class IntervalScheme:
    """Window lengths ``b_n = gamma ln n`` and counts ``c_n = b_n**(1 + V (alpha + eps))``.

    The start times are ``t_n = t_hat_1 + offset_n`` with
    ``offset_n = sum_{j=n_0}^{n} (j**eps - c_j b_j)``.  Since ``n_0`` is
    typically far beyond float integer precision, indices are Python ints
    and offsets are kept apart from ``t_hat_1``.
    """

    gamma: float
    eps: float
    alpha: float
    V_size: int
    t_hat_1: float
    n_0: int
    rows: tuple[tuple[int, float, float, float], ...] = field(repr=False)  # (n, b_n, c_n, offset_n)

    @property
    def beta(self) -> float:
        return self.V_size * (1 - self.alpha - 3 * self.eps)

    @property
    def exponent(self) -> float:
        return 1 + self.V_size * (self.alpha + self.eps)

    def b(self, n: int) -> float:
        return self.gamma * math.log(n)

    def c(self, n: int) -> float:
        return self.b(n) ** self.exponent

    def span(self, n: int) -> float:
        """``n**eps``, the length of the interval started at ``t_{n-1}``."""
        return math.exp(self.eps * math.log(n))

    def offset(self, n: int) -> float:
        k = n - self.n_0
        if not 0 <= k < len(self.rows):
            raise IndexError(f"n={n} is not tabulated")
        return self.rows[k][3]

    def t(self, n: int) -> float:
        return self.t_hat_1 + self.offset(n)

    def exceeds_index(self, n: int) -> bool:
        """Exact test of ``t_n > n``."""
        return Fraction(self.t_hat_1) + Fraction(self.offset(n)) > n

    def window(self, n: int) -> "EventWindow":
        return EventWindow(self.t(n), self.b(n), self.c(n), self.span(n + 1))


def _n0(gamma: float, eps: float, power: float) -> int:
    """First ``n`` from which ``b_n**power <= n**eps / 2`` holds for every larger ``n``.

    In ``L = ln n`` the condition reads ``g(L) = eps L - ln 2 - power ln(gamma L) >= 0``
    with ``g`` convex, so it holds exactly beyond the larger root.  ``n`` can have
    hundreds of digits, so the root is polished and the integer located in decimal
    arithmetic carrying more digits than ``n`` itself.
    """
    def g(L):
        return eps * L - math.log(2) - power * math.log(gamma * L)

    L_min = power / eps
    if g(L_min) >= 0:
        return 2
    hi = 2 * L_min
    while g(hi) < 0:
        hi *= 2
    root = brentq(g, L_min, hi, xtol=1e-12, rtol=1e-15)
    with localcontext() as ctx:
        ctx.prec = int(root / math.log(10)) + 40
        e, p, gm, two = Decimal(eps), Decimal(power), Decimal(gamma), Decimal(2)

        def gd(L):
            return e * L - two.ln() - p * (gm * L).ln()

        def ok(n):
            return gd(Decimal(n).ln()) >= 0

        L = Decimal(root)
        tol = Decimal(10) ** (10 - ctx.prec)
        for _ in range(100):
            step = gd(L) / (e - p / L)
            L -= step
            if abs(step) <= tol * L:
                break
        n = max(int(L.exp().to_integral_value(rounding=ROUND_CEILING)), 2)
        while not ok(n):
            n += 1
        while n > 2 and ok(n - 1):
            n -= 1
    return n


def interval_scheme(gamma: float, eps: float, alpha: float, V_size: int, t_hat_1: float = 1.0,
                    n_max: int | None = None, rows: int = 100) -> IntervalScheme:
    """Tabulate the scheme from ``n_0`` to ``n_max`` (or for ``rows`` indices when ``n_max`` is None)."""
    if not 0 < alpha < 1:
        raise InvalidAlpha(f"alpha must lie in (0, 1), got {alpha}")
    if not eps > 0:
        raise InvalidEpsilon("eps must be positive")
    beta = V_size * (1 - alpha - 3 * eps)
    if not beta > 1:
        raise InvalidEpsilon(f"beta = V (1 - alpha - 3 eps) = {beta:.6g} must exceed 1")
    if not gamma > 0 or not t_hat_1 > 0:
        raise InvalidParams("gamma and t_hat_1 must be positive")
    exponent = 1 + V_size * (alpha + eps)
    n_0 = _n0(gamma, eps, 1 + exponent)
    count = rows if n_max is None else n_max - n_0 + 1
    if count < 0:
        count = 0
    table = []
    offset = 0.0
    for k in range(count):
        n = n_0 + k
        b = gamma * math.log(n)
        c = b ** exponent
        offset += math.exp(eps * math.log(n)) - c * b
        table.append((n, b, c, offset))
    scheme = IntervalScheme(gamma, eps, alpha, V_size, float(t_hat_1), n_0, tuple(table))
    for (n, b, c, off), (_, _, _, off2) in zip(table, table[1:]):
        step = off2 - off
        span = math.exp(eps * math.log(n + 1))
        if not (span / 2 <= step * (1 + 1e-12) and step <= span * (1 + 1e-12)):
            raise InvalidParams(f"scheme step at n={n} outside [span/2, span]")
    return scheme


@dataclass(frozen=True)
class EventWindow:
    """One scheme index: start ``t``, block length ``b``, block count ``c`` and interval length ``span``."""

    t: float
    b: float
    c: float
    span: float

    @property
    def blocks(self) -> int:
        """Number of integers ``j`` in ``[0, c)``."""
        return max(0, math.ceil(self.c))

    @property
    def end(self) -> float:
        return max(self.t + self.span, self.t + self.blocks * self.b)


@dataclass
class ExplicitTraces:
    """Finite clock traces on ``[0, horizon]``.

    ``wake`` and ``sleep`` are indexed by vertex, ``infection`` by the
    endpoint pair ``(u, v)`` with ``u < v``.
    """

    wake: Sequence[Sequence[float]]
    sleep: Sequence[Sequence[float]]
    infection: dict[tuple[int, int], Sequence[float]]
    horizon: float

    @staticmethod
    def _after(pts, t):
        for x in sorted(pts):
            if x > t:
                return x
        return math.inf

    def next_wake(self, x, t):
        return self._after(self.wake[x], t)

    def next_sleep(self, x, t):
        return self._after(self.sleep[x], t)

    def next_infection(self, e, tau, t):
        return self._after(self.infection.get(e, ()), t)

    def edge_key(self, u, v):
        return (min(u, v), max(u, v))


def detect_events(traces, window: EventWindow, g: EdgeSequence, n_vertices: int | None = None,
                  tau: int = 3) -> tuple[bool, bool, bool, bool]:
    """Indicators of the four window events.

    * A: some vertex has no wake point in ``(t, t + span]``.
    * B: for some block ``j`` every vertex has no wake point in ``(t + j b, t + (j+1) b]``.
    * C: in the second half of every block the infection clocks (type ``tau``,
      dormant-dormant by default) carry a path along ``g`` within ``b/2``,
      each step measured from the absolute time reached by the previous one.
    * D: at the start of every block every vertex has a sleep point within ``b/2``.

    ``traces`` is an :class:`ExplicitTraces` or an engine ``ClockBank``.
    """
    n = n_vertices
    if n is None:
        n = len(traces.wake) if isinstance(traces, ExplicitTraces) else traces.topology.n
    if isinstance(traces, ExplicitTraces) and traces.horizon < window.end:
        raise TraceTooShort(f"traces cover [0, {traces.horizon}] but the window needs {window.end}")
    t, b, span = window.t, window.b, window.span
    J = window.blocks
    steps = g.steps if isinstance(g, EdgeSequence) else tuple(g)
    if isinstance(traces, ExplicitTraces):
        edges = [traces.edge_key(u, v) for u, v in steps]
    else:
        edges = [traces.topology.edge_index(u, v) for u, v in steps]

    def wake_excess(x, s):
        return traces.next_wake(x, s) - s

    A = any(wake_excess(x, t) > span for x in range(n))
    B = any(all(wake_excess(x, t + j * b) > b for x in range(n)) for j in range(J))

    def Y(start):
        y = 0.0
        for e in edges:
            y += traces.next_infection(e, tau, start + y) - (start + y)
            if y > b / 2:
                return y
        return y

    C = all(Y(t + (2 * j + 1) * b / 2) <= b / 2 for j in range(J))
    D = all(max(traces.next_sleep(x, t + j * b) - (t + j * b) for x in range(n)) <= b / 2 for j in range(J))
    return A, B, C, D


def gw_offspring_prob(lam: float, sigma: float, delta: float) -> float:
    """Probability that both tree edges fire before the sleep or recovery clock."""
    if not lam > 0 or sigma < 0 or delta < 0:
        raise InvalidRates("need lambda > 0 and sigma, delta >= 0")
    return 2 * lam / (2 * lam + sigma + delta) * lam / (lam + sigma + delta)


def gw_race_estimate(lam: float, sigma: float, delta: float, n: int,
                     rng: np.random.Generator, batch: int = 1 << 18) -> tuple[float, float]:
    """Monte Carlo race: both Exp(lam) edge clocks ring before min(Exp(sigma), Exp(delta)).

    Returns the estimate and its standard error.
    """
    if not lam > 0 or sigma < 0 or delta < 0:
        raise InvalidRates("need lambda > 0 and sigma, delta >= 0")
    if n < 1:
        raise InvalidParams("n must be positive")
    hits = 0
    done = 0
    while done < n:
        m = min(batch, n - done)
        e1 = rng.exponential(1 / lam, m)
        e2 = rng.exponential(1 / lam, m)
        stop = np.full(m, np.inf)
        if sigma > 0:
            stop = np.minimum(stop, rng.exponential(1 / sigma, m))
        if delta > 0:
            stop = np.minimum(stop, rng.exponential(1 / delta, m))
        hits += int(np.count_nonzero(np.maximum(e1, e2) < stop))
        done += m
    p = hits / n
    return p, math.sqrt(p * (1 - p) / n)


@dataclass(frozen=True)
class RecursionStep:
    n: int
    S: float
    X: float
    argmax: int
    X_site: tuple[float, ...]
    W_site: tuple[float, ...]


@dataclass
class ExtinctionRecursionState:
    t_hat: float
    steps: list[RecursionStep]
    truncated: bool = False

    @property
    def X(self) -> list[float]:
        return [s.X for s in self.steps]

    @property
    def S(self) -> list[float]:
        return [s.S for s in self.steps]

    def min_X(self) -> float:
        return min(self.X)


def extinction_recursion(wake, t_hat: float, v0: int = 0, n_max: int = 200) -> ExtinctionRecursionState:
    """Run the interval recursion on per-vertex wake clocks.

    ``wake[x].next_point(t)`` must return the first wake point of ``x``
    strictly after ``t``; queries per vertex come in nondecreasing time, so
    forward-only streams are fine.  If a stream runs past its time cap the
    state is returned with ``truncated`` set.
    """
    if not t_hat > 0:
        raise InvalidParams("t_hat must be positive")
    V = len(wake)
    if not 0 <= v0 < V:
        raise InvalidParams(f"v0={v0} is not a vertex")

    def excess(x, s):
        return wake[x].next_point(s) - s

    def record(n, S_prev, Xs):
        Xn = max(Xs)
        arg = Xs.index(Xn)  # lowest index among ties
        return RecursionStep(n, S_prev + Xn, Xn, arg, tuple(Xs), tuple(Xn - v for v in Xs))

    steps: list[RecursionStep] = []
    try:
        steps.append(record(1, 0.0, [excess(x, 0.0) if x == v0 else 0.0 for x in range(V)]))
        for n in range(1, n_max):
            prev = steps[-1]
            S = prev.S
            Xs = []
            for x in range(V):
                if x == prev.argmax:
                    Xs.append(0.0)
                elif prev.W_site[x] >= t_hat:
                    Xs.append(excess(x, S))
                else:
                    Xs.append(excess(x, S + t_hat) + t_hat)
            steps.append(record(n + 1, S, Xs))
    except TraceTooShort:
        return ExtinctionRecursionState(t_hat, steps, truncated=True)
    return ExtinctionRecursionState(t_hat, steps)


def recursion_streams(law: InterarrivalLaw, V_size: int, seed: int, max_time: float = 1e10):
    """Independent forward-only wake streams, one per vertex."""
    return [RenewalStream(law, streams.generator(streams.derive(seed, streams.WAKE, x)), max_time=max_time)
            for x in range(V_size)]


def bad_interval_prob_bound(lam: float, delta: float, sigma: float, m: float, V_size: int) -> float:
    """Lower bound on the chance that an interval of length below ``m`` forces extinction."""
    if min(lam, delta, sigma, m) < 0 or V_size < 1:
        raise InvalidRates("rates and m must be nonnegative and V_size positive")
    if delta + sigma <= 0:
        raise InvalidRates("delta + sigma must be positive")
    return math.exp(-lam * m * V_size) * (-math.expm1(-(delta + sigma))) ** V_size * delta / (delta + sigma)


def write_scheme_csv(path, scheme: IntervalScheme):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", "b_n", "c_n", "t_n"])
        for n, b, c, off in scheme.rows:
            w.writerow([n, repr(b), repr(c), repr(scheme.t_hat_1 + off)])


def write_recursion_csv(path, states: Sequence[ExtinctionRecursionState]):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["replica", "n", "S_n", "X_n", "x_n"])
        for rep, st in enumerate(states):
            for s in st.steps:
                w.writerow([rep, s.n, repr(s.S), repr(s.X), s.argmax])
