import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special

from cpdormancy.errors import EmptyReplicas, InvalidAlpha, InvalidLaw, NeedsExtension, TraceTooShort
from cpdormancy.renewal import (
    Exponential,
    LogPareto,
    ParetoTail,
    PointTrace,
    RenewalStream,
    current_excess,
    dl_cdf,
    dl_empirical,
    dl_ks_distance,
    dl_quantile,
    excess_ratios,
    gap_probe,
    law_from_config,
    sample_interarrival,
    simulate_trace,
)


def arcsine_cdf(x):
    return 2 / math.pi * math.atan(math.sqrt(x))


def hyp_cdf(alpha, x):
    """Closed form of the limit CDF through the Gauss hypergeometric function."""
    c = math.sin(math.pi * alpha) / math.pi
    return c * x ** (1 - alpha) / (1 - alpha) * special.hyp2f1(1, 1 - alpha, 2 - alpha, -x)


class TestLaws:
    def test_exponential_mean(self):
        x = Exponential(2.0).sample(np.random.default_rng(1), 100_000)
        assert x.mean() == pytest.approx(0.5, abs=0.01)

    def test_pareto_support(self):
        x = ParetoTail(0.5, 1.0).sample(np.random.default_rng(2), 10_000)
        assert (x >= 1.0).all()

    def test_pareto_inverse_cdf(self):
        assert float(ParetoTail(0.5, 1.0).inverse_survival(0.25)) == pytest.approx(16.0)

    def test_pareto_survival_fraction(self):
        law = ParetoTail(0.5, 2.0)
        n = 100_000
        x = law.sample(np.random.default_rng(3), n)
        t = 10 * law.xm
        p = (law.xm / t) ** law.alpha
        se = math.sqrt(p * (1 - p) / n)
        assert abs(np.mean(x >= t) - p) <= 3 * se

    def test_invalid_laws(self):
        with pytest.raises(InvalidLaw):
            ParetoTail(1.2)
        with pytest.raises(InvalidLaw):
            Exponential(0.0)
        with pytest.raises(InvalidLaw):
            law_from_config({"kind": "weibull"})

    def test_config_roundtrip(self):
        for law in (Exponential(3.0), ParetoTail(0.7, 2.0), LogPareto(0.6, 1.0, 1.0)):
            assert law_from_config(law.to_config()) == law

    def test_logpareto_inverse(self):
        law = LogPareto(0.6, 1.0, 1.0)
        u = np.array([0.9, 0.5, 1e-3, 1e-6])
        assert law.survival(law.inverse_survival(u)) == pytest.approx(u, rel=1e-9)

    def test_sample_interarrival_positive(self):
        assert sample_interarrival(ParetoTail(0.5), np.random.default_rng(0)) >= 1.0


class TestTraces:
    def test_empty_horizon(self):
        assert simulate_trace(Exponential(1.0), 0.0, np.random.default_rng(0)).times == ()

    def test_poisson_count(self):
        rng = np.random.default_rng(4)
        counts = [len(simulate_trace(Exponential(1.0), 10.0, rng)) for _ in range(10_000)]
        assert np.mean(counts) == pytest.approx(10.0, abs=0.1)

    @given(seed=st.integers(0, 2**32 - 1), horizon=st.floats(0.0, 500.0))
    @settings(max_examples=40, deadline=None)
    def test_contract(self, seed, horizon):
        tr = simulate_trace(ParetoTail(0.5), horizon, np.random.default_rng(seed))
        t = np.array(tr.times)
        assert (np.diff(t) > 0).all()
        assert (t <= horizon).all() and (t > 0).all()

    def test_current_excess_examples(self):
        tr = PointTrace.from_times([2.0, 5.0])
        assert current_excess(tr, 3.0) == (1.0, 2.0)
        assert current_excess(tr, 0.0) == (0.0, 2.0)
        with pytest.raises(NeedsExtension):
            current_excess(tr, 6.0)

    @given(seed=st.integers(0, 2**32 - 1), t=st.floats(0.0, 1000.0))
    @settings(max_examples=50, deadline=None)
    def test_current_plus_excess(self, seed, t):
        tr = simulate_trace(ParetoTail(0.4), t, np.random.default_rng(seed))
        c, e = current_excess(tr, t)
        nxt = tr.next_point(t)
        assert c + e == pytest.approx(nxt - tr.last_point(t), rel=1e-12, abs=1e-12)

    def test_replay(self):
        a = simulate_trace(ParetoTail(0.5), 1e4, np.random.default_rng(9))
        b = simulate_trace(ParetoTail(0.5), 1e4, np.random.default_rng(9))
        assert a.times == b.times

    def test_extension_preserves_prefix(self):
        tr = simulate_trace(Exponential(1.0), 50.0, np.random.default_rng(5))
        head = tr.times
        tr.extend(500.0)
        assert tr.times[:len(head)] == head
        fresh = simulate_trace(Exponential(1.0), 500.0, np.random.default_rng(5))
        assert tr.times == fresh.times

    def test_fixed_trace_cannot_extend(self):
        with pytest.raises(NeedsExtension):
            PointTrace.from_times([1.0]).extend(5.0)

    def test_stream_forward_only(self):
        s = RenewalStream(Exponential(1.0), np.random.default_rng(0), max_time=100.0)
        s.next_point(10.0)
        with pytest.raises(ValueError):
            s.next_point(5.0)
        with pytest.raises(TraceTooShort):
            s.next_point(100.0)

    def test_stream_points_increase(self):
        s = RenewalStream(ParetoTail(0.6), np.random.default_rng(11))
        pts, t = [], 0.0
        for _ in range(2000):
            t = s.next_point(t)
            pts.append(t)
        assert all(b > a for a, b in zip(pts, pts[1:]))
        assert s.excess(t) > 0


class TestLimitLaw:
    def test_examples(self):
        assert dl_cdf(0.5, 1.0) == pytest.approx(0.5, abs=1e-9)
        assert dl_cdf(0.5, 3.0) == pytest.approx(2 / 3, abs=1e-9)
        assert dl_cdf(0.3, 0.0) == 0.0

    @pytest.mark.parametrize("x", [1e-6, 1e-3, 0.2, 0.9, 1.0, 1.5, 7.0, 1e3, 1e6])
    def test_arcsine_closed_form(self, x):
        assert dl_cdf(0.5, x) == pytest.approx(arcsine_cdf(x), abs=1e-8)

    @pytest.mark.parametrize("alpha", [0.1, 0.3, 0.7, 0.9])
    @pytest.mark.parametrize("x", [1e-4, 0.3, 1.0, 2.5, 40.0])
    def test_hypergeometric_form(self, alpha, x):
        assert dl_cdf(alpha, x) == pytest.approx(hyp_cdf(alpha, x), abs=1e-8)

    @given(alpha=st.floats(0.02, 0.98), a=st.floats(0.0, 1e4), b=st.floats(0.0, 1e4))
    @settings(max_examples=60, deadline=None)
    def test_monotone(self, alpha, a, b):
        lo, hi = sorted((a, b))
        assert dl_cdf(alpha, lo) <= dl_cdf(alpha, hi) + 1e-12

    @pytest.mark.parametrize("alpha", [0.8, 0.9, 0.95])
    def test_normalization(self, alpha):
        assert dl_cdf(alpha, 1e8) >= 1 - 1e-6

    @pytest.mark.parametrize("alpha", [0.2, 0.5, 0.75])
    def test_tail_mass_at_large_x(self, alpha):
        # for small alpha the mass beyond 1e8 is ~ sin(pi a)/(pi a) * 1e8**-a, above 1e-6
        X = 1e8
        assert 1 - dl_cdf(alpha, X) == pytest.approx(1 - hyp_cdf(alpha, X), rel=1e-3)

    def test_invalid_alpha(self):
        with pytest.raises(InvalidAlpha):
            dl_cdf(1.0, 0.5)
        with pytest.raises(InvalidAlpha):
            dl_cdf(0.0, 0.5)

    def test_quantile_inverts_cdf(self):
        for p in (0.1, 0.5, 0.9):
            assert dl_cdf(0.5, dl_quantile(0.5, p)) == pytest.approx(p, abs=1e-10)


class TestEmpirical:
    def test_sup_distance(self):
        _, d = dl_empirical(ParetoTail(0.5), 1e4, 20_000, rng=np.random.default_rng(6))
        assert d < 0.02

    def test_errors(self):
        with pytest.raises(EmptyReplicas):
            dl_empirical(ParetoTail(0.5), 10.0, 0)
        with pytest.raises(InvalidLaw):
            dl_empirical(Exponential(1.0), 10.0, 10)
        with pytest.raises(EmptyReplicas):
            gap_probe(ParetoTail(0.5), 10.0, 0.5, 0)

    def test_grid_zero(self):
        emp, _ = dl_empirical(ParetoTail(0.5), 100.0, 500, grid=[0.0], rng=np.random.default_rng(0))
        assert emp[0] == 0.0

    def test_ks_distance_matches_scipy(self):
        from scipy import stats

        r = excess_ratios(ParetoTail(0.5), 1e3, 2000, np.random.default_rng(8))
        ref = stats.kstest(r, lambda v: np.array([arcsine_cdf(x) for x in np.atleast_1d(v)])).statistic
        assert dl_ks_distance(0.5, r) == pytest.approx(ref, abs=1e-8)

    def test_gap_exponential(self):
        est, bound, ok = gap_probe(Exponential(1.0), 100.0, 0.5, 10_000, np.random.default_rng(1))
        assert est == pytest.approx(1 - math.exp(-10), abs=1e-3)
        assert bound == pytest.approx(0.1)
        assert not ok

    def test_gap_pareto(self):
        est, bound, ok = gap_probe(ParetoTail(0.5), 1e4, 0.1, 100_000, np.random.default_rng(2))
        assert ok and est <= bound
