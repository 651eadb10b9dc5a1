import csv
import itertools
import math
from collections import deque

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import ndimage

from cpdormancy.engine import ClockBank, Rates, init, run
from cpdormancy.errors import (
    InvalidParams,
    PreconditionLambdaDD,
    TraceTooShort,
    WindowCapExceeded,
    WindowExhausted,
)
from cpdormancy.percolation import (
    CubeGrid,
    PercolationField,
    choose_s_sequence,
    classify_cube,
    cluster_closure,
    coupling_check,
    iterate,
    s_sequence_until,
    sample_field,
    time_sequence,
    write_radii_csv,
)
from cpdormancy.renewal import ParetoTail, PointTrace
from cpdormancy.topology import lattice_box

PARETO = ParetoTail(0.5, 1.0)
GROWTH_RATES = Rates(2.0, 2.0, 2.0, 0.0, delta=0.0, sigma=1.0)


def bfs_closure(open_, lo, A):
    """Breadth-first search over sup-norm neighbours, written independently of the library."""
    d = open_.ndim
    offs = [o for o in itertools.product((-1, 0, 1), repeat=d) if any(o)]
    out = {tuple(a) for a in A}
    queue = deque()
    for a in A:
        for o in offs:
            y = tuple(c + e for c, e in zip(a, o))
            idx = tuple(c - l for c, l in zip(y, lo))
            if all(0 <= i < s for i, s in zip(idx, open_.shape)) and open_[idx] and y not in out:
                out.add(y)
                queue.append(y)
    while queue:
        x = queue.popleft()
        for o in offs:
            y = tuple(c + e for c, e in zip(x, o))
            idx = tuple(c - l for c, l in zip(y, lo))
            if all(0 <= i < s for i, s in zip(idx, open_.shape)) and open_[idx] and y not in out:
                out.add(y)
                queue.append(y)
    return out


def full_field_step(member, p, rng):
    """One iteration on a fixed window: fresh full field, closure, then sup-norm dilation."""
    d = member.ndim
    struct = np.ones((3,) * d, dtype=bool)
    field_ = rng.random(member.shape) < p
    labels, _ = ndimage.label(field_, structure=struct)
    touch = ndimage.binary_dilation(member, structure=struct)
    hit = np.unique(labels[touch & field_])
    closure = member | np.isin(labels, hit[hit > 0])
    return ndimage.binary_dilation(closure, structure=struct)


class TestClosure:
    def test_all_closed(self):
        fld = PercolationField((-3, -3), np.zeros((7, 7), dtype=bool), 0.0)
        assert cluster_closure(fld, [(0, 0)]).tolist() == [[0, 0]]

    def test_hand_example(self):
        open_ = np.zeros((7, 7), dtype=bool)
        for x, y in [(1, 0), (1, 1)]:
            open_[x + 3, y + 3] = True
        fld = PercolationField((-3, -3), open_, 0.5)
        got = {tuple(r) for r in cluster_closure(fld, [(0, 0)]).tolist()}
        assert got == {(0, 0), (1, 0), (1, 1)}

    def test_empty_set(self):
        fld = sample_field((0, 0), (5, 5), 0.5, np.random.default_rng(0))
        assert len(cluster_closure(fld, [])) == 0

    def test_diagonal_adjacency(self):
        open_ = np.zeros((5, 5), dtype=bool)
        open_[3, 3] = open_[1, 3] = True
        fld = PercolationField((-2, -2), open_, 0.5)
        got = {tuple(r) for r in cluster_closure(fld, [(0, 0)]).tolist()}
        assert (1, 1) in got and (-1, 1) in got

    def test_window_exhausted(self):
        fld = PercolationField((-2, -2), np.ones((5, 5), dtype=bool), 1.0)
        with pytest.raises(WindowExhausted):
            cluster_closure(fld, [(0, 0)])

    @given(seed=st.integers(0, 10_000), p=st.floats(0.05, 0.5), d=st.sampled_from([1, 2, 3]))
    @settings(max_examples=60, deadline=None)
    def test_matches_bfs(self, seed, p, d):
        rng = np.random.default_rng(seed)
        shape = (9,) * d
        lo = (-4,) * d
        fld = sample_field(lo, shape, p, rng)
        A = [tuple(int(v) for v in rng.integers(-2, 3, d)) for _ in range(2)]
        want = bfs_closure(fld.open, lo, A)
        edge = any(any(c in (-4, 4) for c in s) for s in want - set(A))
        if edge:
            with pytest.raises(WindowExhausted):
                cluster_closure(fld, A)
        else:
            assert {tuple(r) for r in cluster_closure(fld, A).tolist()} == want


class TestIterate:
    def test_p_zero_is_ball(self):
        res = iterate([(0, 0)], 0.0, 3, np.random.default_rng(0), keep_sets=True)
        assert res.radii == [1, 2, 3]
        assert res.cells == [9, 25, 49]
        ball = {(x, y) for x in range(-3, 4) for y in range(-3, 4)}
        assert {tuple(r) for r in res.sets[-1].tolist()} == ball

    def test_supercritical_cap(self):
        with pytest.raises(WindowCapExceeded):
            iterate([(0, 0)], 0.99, 5, np.random.default_rng(0), cap=64)

    def test_invalid(self):
        with pytest.raises(InvalidParams):
            iterate([(0, 0)], 1.0, 3, np.random.default_rng(0))
        with pytest.raises(InvalidParams):
            iterate([], 0.1, 3, np.random.default_rng(0), d=2)

    @given(seed=st.integers(0, 10_000), p=st.floats(0.0, 0.3), n=st.integers(1, 12))
    @settings(max_examples=30, deadline=None)
    def test_monotone_growth(self, seed, p, n):
        C0 = [(0, 0), (2, 1)]
        res = iterate(C0, p, n, np.random.default_rng(seed), keep_sets=True)
        prev = {tuple(c) for c in C0}
        r0 = 2
        for k, s in enumerate(res.sets, 1):
            cur = {tuple(r) for r in s.tolist()}
            assert prev <= cur
            assert res.radii[k - 1] >= r0 + k
            assert res.radii[k - 1] == max(max(abs(a), abs(b)) for a, b in cur)
            assert res.cells[k - 1] == len(cur)
            prev = cur

    def test_matches_full_field_reference(self):
        # lazily sampled fields must give the same law as a full field per step
        p, n, reps = 0.25, 4, 400
        rng = np.random.default_rng(1)
        lazy = [iterate([(0, 0)], p, n, rng).cells[-1] for _ in range(reps)]
        ref = []
        for _ in range(reps):
            # wide enough that clusters are not clipped
            member = np.zeros((201, 201), dtype=bool)
            member[100, 100] = True
            for _ in range(n):
                member = full_field_step(member, p, rng)
            ref.append(int(member.sum()))
        se = math.sqrt(np.var(lazy) / reps + np.var(ref) / reps)
        assert abs(np.mean(lazy) - np.mean(ref)) <= 3 * se

    def test_fields_independent(self):
        rng = np.random.default_rng(2)
        a = np.array([sample_field((0,), (1,), 0.3, rng).open[0] for _ in range(10_000)], dtype=float)
        b = np.array([sample_field((0,), (1,), 0.3, rng).open[0] for _ in range(10_000)], dtype=float)
        r = np.corrcoef(a, b)[0, 1]
        assert abs(r) <= 3 / math.sqrt(10_000)

    def test_csv(self, tmp_path):
        res = [iterate([(0, 0)], 0.0, 2, np.random.default_rng(0))]
        p = tmp_path / "r.csv"
        write_radii_csv(p, res)
        rows = list(csv.reader(p.open()))
        assert rows == [["replica", "n", "R_n", "cells"], ["0", "1", "1", "9"], ["0", "2", "2", "25"]]


class TestCubes:
    def test_grid(self):
        g = CubeGrid(2)
        assert g.sites((1, -1)).tolist() == [[2, -2], [2, -1], [3, -2], [3, -1]]
        assert g.cube_of(np.array([[3, -1], [-1, 0]])).tolist() == [[1, -1], [-1, 0]]
        assert len(g.neighbours((0, 0))) == 8

    def test_tiling(self):
        g = CubeGrid(2)
        sites = np.array(list(itertools.product(range(-5, 6), repeat=2)))
        for s, c in zip(sites, g.cube_of(sites)):
            assert any((s == t).all() for t in g.sites(c))

    def test_bad_example(self):
        wake = [PointTrace.from_times([5, 50]), PointTrace.from_times([8, 45])]
        sleep = [PointTrace.from_times([12], 50), PointTrace.from_times([15], 50)]
        assert classify_cube(wake, sleep, 10, 20, 40) == "bad"

    def test_good_cases(self):
        sleep = [[12], [15]]
        assert classify_cube([[5, 50], [8, 30]], sleep, 10, 20, 40) == "good"
        assert classify_cube([[5, 50], [8, 45]], [[12], [25]], 10, 20, 40) == "good"
        # the wake window is closed on both ends
        assert classify_cube([[5, 40], [8, 45]], sleep, 10, 20, 40) == "good"

    def test_short_trace(self):
        with pytest.raises(TraceTooShort):
            classify_cube([PointTrace.from_times([5], 30)], [PointTrace.from_times([12], 30)], 10, 20, 40)

    def test_bad_cubes_are_dormant(self):
        top = lattice_box(2, 4)
        grid = CubeGrid(2)
        t_prev, t_cur, t_next = 20.0, 30.0, 45.0
        rng = np.random.default_rng(0)
        n_bad = 0
        for seed in range(12):
            bank = ClockBank(top, GROWTH_RATES, PARETO, seed)
            for i in itertools.product(range(-2, 2), repeat=2):
                xs = [top.vertex_at(s) for s in grid.sites(i)]
                wake = [bank.track(x).wake.trace for x in xs]
                sleep = []
                for x in xs:
                    pts, t = [], 0.0
                    while (t := bank.next_sleep(x, t)) <= t_next:
                        pts.append(t)
                    sleep.append(pts)
                if classify_cube(wake, sleep, t_prev, t_cur, t_next) == "bad":
                    n_bad += 1
                    for x in xs:
                        for s in np.concatenate(([t_cur, t_next], rng.uniform(t_cur, t_next, 50))):
                            assert not bank.track(x).active_at(s)
        assert n_bad > 0


class TestTimeSequences:
    def test_examples(self):
        assert time_sequence("S", 2, 10.0, c=3.0).times[2] == pytest.approx(40.0)
        assert time_sequence("G", 1, 100.0, eps_star=0.5).times[1] == pytest.approx(110.0)
        with pytest.raises(InvalidParams):
            time_sequence("S", 2, 0.0, c=1.0)
        with pytest.raises(InvalidParams):
            time_sequence("G", 2, 1.0, eps_star=1.5)
        with pytest.raises(InvalidParams):
            time_sequence("Q", 2, 1.0)

    @given(t0=st.floats(0.1, 1e4), c=st.floats(0.01, 5.0), k=st.integers(0, 40))
    @settings(max_examples=40, deadline=None)
    def test_s_formula(self, t0, c, k):
        ts = time_sequence("S", k, t0, c=c).times
        assert ts[k] == pytest.approx((1 + c) ** (k / 2) * t0, rel=1e-12)
        assert all(b > a for a, b in zip(ts, ts[1:]))

    def test_until(self):
        seq = s_sequence_until(10.0, 3.0, 100.0)
        assert seq.times == pytest.approx((10.0, 20.0, 40.0, 80.0))

    def test_choose_constants_closed_form(self):
        alpha, sigma, d, p_c = 0.5, 1.0, 2, 0.6
        got = choose_s_sequence(alpha, sigma, d, p_c)
        p1 = 1 - (1 - p_c / 2) ** (1 / 2 ** (d + 1))
        c = math.tan(math.pi * p1 / 4) ** 2   # (2/pi) atan(sqrt c) = p1 / 2
        t0 = math.log(1 / p1) / (sigma * (math.sqrt(1 + c) - 1))
        assert got["p1"] == pytest.approx(p1, rel=1e-12)
        assert got["c"] == pytest.approx(c, rel=1e-9)
        assert got["t0"] == pytest.approx(t0, rel=1e-8)
        assert got["p1"] == pytest.approx(0.04361, abs=5e-6)
        assert got["t0"] == pytest.approx(5339.07, abs=0.01)


class TestCoupling:
    def test_preconditions(self):
        top = lattice_box(2, 3)
        cfg = init(top, [top.origin])
        with pytest.raises(PreconditionLambdaDD):
            coupling_check(top, GROWTH_RATES.replace(lambda_dd=0.1), PARETO, cfg, [1.0, 2.0, 3.0])
        with pytest.raises(InvalidParams):
            torus = lattice_box(2, 3, "periodic")
            coupling_check(torus, GROWTH_RATES, PARETO, init(torus, [0]), [1.0, 2.0, 3.0])

    def test_vacuous(self):
        top = lattice_box(2, 3)
        assert coupling_check(top, GROWTH_RATES, PARETO, init(top, []), [1.0, 2.0, 3.0]).ok

    @pytest.mark.parametrize("seed", range(3))
    def test_holds_on_small_box(self, seed):
        top = lattice_box(2, 30)
        cfg = init(top, [top.origin])
        times = s_sequence_until(20.0, 0.5, 300.0)
        rep = coupling_check(top, GROWTH_RATES, PARETO, cfg, times, seed=seed)
        assert rep.ok

    def test_with_recoveries(self):
        top = lattice_box(2, 20)
        rates = GROWTH_RATES.replace(delta=0.5)
        cfg = init(top, [top.origin])
        times = s_sequence_until(10.0, 0.5, 100.0)
        assert coupling_check(top, rates, PARETO, cfg, times, seed=4).ok

    def test_detects_foreign_history(self):
        # a history from another realization is not contained in this realization's cube sets
        top = lattice_box(2, 20)
        rates = GROWTH_RATES.replace(delta=0.5)
        cfg = init(top, [top.origin])
        times = s_sequence_until(10.0, 0.5, 100.0)
        other = run(top, rates, PARETO, cfg, times[-1], seed=99, record_history=True)
        rep = coupling_check(top, rates, PARETO, cfg, times, seed=4, result=other)
        assert not rep.ok and rep.first_violation is not None

    def test_needs_history(self):
        top = lattice_box(2, 5)
        cfg = init(top, [top.origin])
        res = run(top, GROWTH_RATES, PARETO, cfg, 10.0, seed=0)
        with pytest.raises(InvalidParams):
            coupling_check(top, GROWTH_RATES, PARETO, cfg, [1.0, 2.0, 10.0], result=res)
