import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from edgespec import ValidationError
from edgespec.monitor import (
    EnvironmentMonitor, ParamEstimates, SlidingWindow, estimate_gamma, fit_alpha_beta, missing_probe_sizes,
    should_reschedule, should_retune_thresholds, update_window_n_hat,
)


def est(a, b, g):
    return ParamEstimates(a, b, g, 100, 100, 0.0)


class TestWindow:
    def test_bounded(self):
        w = SlidingWindow(3)
        for i in range(10):
            w.push(i)
            assert len(w) <= 3
        assert w.snapshot() == [7, 8, 9] and w.full

    @given(st.integers(1, 50), st.lists(st.integers(), max_size=200))
    def test_capacity_property(self, cap, items):
        w = SlidingWindow(cap)
        for x in items:
            w.push(x)
        assert w.snapshot() == items[-cap:] if items else w.snapshot() == []


class TestGamma:
    def test_examples(self):
        assert estimate_gamma([(4, 20.0)] * 3) == 5.0
        assert estimate_gamma([(1, 7.0)]) == 7.0
        assert estimate_gamma([(4, 20.0), (6, 35.0)]) == 5.5

    def test_empty(self):
        with pytest.raises(ValidationError):
            estimate_gamma([])


class TestFit:
    def test_exact(self):
        assert fit_alpha_beta([(n, 30 + 4 * n) for n in range(1, 9)]) == (pytest.approx(30), pytest.approx(4), 0.0)

    def test_single_size_rejected(self):
        with pytest.raises(ValidationError):
            fit_alpha_beta([(3, 10.0)] * 5)

    def test_per_size_averaging(self):
        recs = [(1, 10.0), (1, 14.0), (2, 16.0), (3, 20.0)]
        a, b, r = fit_alpha_beta(recs)
        assert (a, b, r) == (pytest.approx(8.0), pytest.approx(4.0), 0.0)

    @given(st.floats(0, 500), st.floats(0.01, 100), st.sets(st.integers(1, 64), min_size=2, max_size=10))
    @settings(max_examples=100)
    def test_noiseless_recovery(self, a, b, sizes):
        fa, fb, r = fit_alpha_beta([(n, a + b * n) for n in sizes])
        assert fa == pytest.approx(a, abs=1e-6 * max(1, a + b * 64))
        assert fb == pytest.approx(b, rel=1e-6)
        assert r == 0.0

    def test_missing_sizes(self):
        assert missing_probe_sizes([(2, 1.0), (3, 1.0), (3, 1.0)]) == [1, 4, 5, 6, 7, 8]
        assert missing_probe_sizes([(n, 1.0) for n in range(1, 12)]) == []


class TestChangeDetection:
    def test_retune(self):
        assert should_retune_thresholds(100, 125)
        assert not should_retune_thresholds(100, 119)
        assert not should_retune_thresholds(100, 120)
        assert should_retune_thresholds(100, 75)  # symmetric
        assert not should_retune_thresholds(100, 200, windows_full=False)

    def test_reschedule(self):
        assert should_reschedule(est(30, 4, 5), est(30, 4, 6.5))
        assert not should_reschedule(est(30, 4, 5), est(33, 4.4, 5.5))
        assert should_reschedule(est(30, 4, 5), est(30, 5, 5))
        assert should_reschedule(est(30, 4, 5), est(20, 4, 5))


class TestNHat:
    def test_examples(self):
        assert update_window_n_hat([]) == 20
        assert update_window_n_hat([6] * 100) == 6
        assert update_window_n_hat([3, 4]) == 4
        assert update_window_n_hat([1, 0]) == 1

    @given(st.lists(st.integers(0, 64), min_size=1, max_size=100))
    def test_half_up(self, xs):
        expected = max(1, int(np.floor(sum(xs) / len(xs) + 0.5)))
        assert update_window_n_hat(xs) == expected


class TestMonitor:
    def test_tpt_windows(self):
        m = EnvironmentMonitor()
        assert not m.add_accepted(100, 10_000.0)  # first full window sets the baseline
        assert not m.add_accepted(100, 11_000.0)
        assert m.add_accepted(100, 14_000.0)  # 27% slower than the previous window
        m.reset_tpt_baseline()
        assert not m.add_accepted(100, 30_000.0)

    def test_refresh_signals_dp(self):
        m = EnvironmentMonitor(window=8)
        m.bootstrap([(n, 30 + 4 * n) for n in range(1, 9)], 5.0)
        for n in range(1, 9):
            m.add_comm(n, 30 + 4 * n)
        assert m.comm_window_ready()
        _, changed = m.refresh()
        assert not changed
        for n in range(1, 9):
            m.add_comm(n, 60 + 4 * n)
        new, changed = m.refresh()
        assert changed and new.alpha == pytest.approx(60)

    def test_gamma_change(self):
        m = EnvironmentMonitor()
        m.bootstrap([(1, 5.0), (2, 6.0)], 50.0)
        m.add_generation(4, 200.0)
        assert not m.gamma_changed()
        for _ in range(50):
            m.add_generation(4, 400.0)
        assert m.gamma_changed() and m.estimates.gamma > 60

    def test_dump(self, tmp_path):
        m = EnvironmentMonitor()
        m.record(1.0, "tpt", 90.0)
        m.dump_csv(tmp_path / "m.csv")
        assert (tmp_path / "m.csv").read_text().splitlines() == ["timestamp_ms,metric,value", "1.0,tpt,90.0"]
