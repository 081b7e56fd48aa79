import pytest

from edgespec import load_scenario
from edgespec.sim import (
    ABLATION, METHODS, BandwidthSchedule, EventKind, EventQueue, SimOptions, SimulationError, bandwidth_schedule_step,
    ecs_from_transcripts, get_method, power_trace, read_transcripts, run_multi_client, run_session,
    write_transcripts,
)
from edgespec.sim.links import transfer_time
from edgespec.workload import TargetOracle, target_prefix


def lossless(res):
    return res.output == target_prefix(TargetOracle(res.seed, 32000), len(res.output))


class TestEventQueue:
    def test_order(self):
        q, seen = EventQueue(), []
        q.schedule(5, EventKind.TOKEN_GENERATED, seen.append, "tok")
        q.schedule(5, EventKind.BATCH_SEND_END, seen.append, "send-end")
        q.schedule(5, EventKind.NAV_END, seen.append, "nav-end")
        q.schedule(5, EventKind.BATCH_SEND_START, seen.append, "send-start")
        q.schedule(1, EventKind.BATCH_SEND_START, seen.append, "early")
        q.schedule(5, EventKind.TOKEN_GENERATED, seen.append, "tok2")
        while q.step():
            pass
        assert seen == ["early", "send-end", "nav-end", "tok", "tok2", "send-start"]

    def test_no_past(self):
        q = EventQueue()
        q.schedule(10, EventKind.NAV_START, lambda: None)
        q.step()
        with pytest.raises(ValueError):
            q.schedule(5, EventKind.NAV_START, lambda: None)


class TestLinks:
    def test_static(self):
        s = BandwidthSchedule(20e6)
        assert s.at(0) == s.at(10**12) == 20e6 and s.next_change(0) is None

    def test_random_schedule(self, scenario4):
        up = BandwidthSchedule(scenario4.uplink_bandwidth, seed=3, stream=0)
        down = BandwidthSchedule(scenario4.downlink_bandwidth, seed=3, stream=1)
        for t in range(0, 600_000_000, 7_000_000):
            u, d = bandwidth_schedule_step(up, down, t)
            assert 10e6 <= u <= 80e6 and 150e6 <= d <= 280e6
        assert up.at(19_900_000) == up.at(0)
        assert up.next_change(19_900_000) == 20_000_000
        values = {up.at(k * 20_000_000) for k in range(20)}
        assert len(values) > 1
        again = BandwidthSchedule(scenario4.uplink_bandwidth, seed=3, stream=0)
        assert [again.at(k * 20_000_000) for k in range(20)] == [up.at(k * 20_000_000) for k in range(20)]

    def test_list_schedule(self):
        s = BandwidthSchedule([[10, 1e6], [20, 2e6]])
        assert (s.at(0), s.at(10_000), s.at(30_000)) == (1e6, 2e6, 1e6)
        assert s.next_change(5_000) == 10_000

    def test_transfer_time(self):
        assert transfer_time(8 * 32000, 20e6) == 12_800
        assert transfer_time(0, 1.0) == 0


class TestMethods:
    def test_registry(self):
        assert set(ABLATION) <= set(METHODS)
        assert get_method("vanilla").n_fixed == 6
        assert get_method("hsl").r2 == 0.99
        with pytest.raises(Exception):
            get_method("nope")


class TestSession:
    def test_closed_form_degenerate(self):
        # no network, instant verification and drafts that never match: one target token per draft step
        sc = load_scenario("scenario1").with_overrides(
            uplink_bandwidth=1e18, downlink_bandwidth=1e18, comm_startup=0.0, downlink_startup=0.0,
            nav_base_latency=0.0, nav_per_token_latency=0.0, draft_hard_rate=0.0, draft_beta_a=1.0,
            draft_beta_b=50.0, draft_kappa=1e6,
        )
        m = get_method("vanilla").with_overrides(n_fixed=1)
        res = run_session(sc, m, 200, seed=1)
        assert res.metrics.tpt == sc.gamma_ms
        assert lossless(res)

    def test_deterministic(self, scenario1):
        a = run_session(scenario1, "pipesd", 300, 7)
        b = run_session(scenario1, "pipesd", 300, 7)
        assert [t.to_json() for t in a.transcripts] == [t.to_json() for t in b.transcripts]
        assert a.metrics == b.metrics

    @pytest.mark.parametrize("method", sorted(METHODS))
    @pytest.mark.parametrize("name", ["scenario1", "scenario3", "scenario4"])
    def test_lossless_and_structural_invariants(self, method, name):
        sc = load_scenario(name)
        res = run_session(sc, method, 250, 3)
        m = res.metrics
        assert lossless(res) and m.accepted_tokens >= 250
        assert m.tpt == m.total_time / 1000 / m.accepted_tokens
        # one batch at a time on the uplink
        spans = sorted((b.comm_start, b.comm_end) for b in res.uplink)
        assert all(s2 >= e1 for (_, e1), (s2, _) in zip(spans, spans[1:]))
        # at every trigger nothing unsent is left behind
        for rnd in res.transcripts:
            assert rnd.reason
            assert any(b.sealed and b.last == rnd.end and b.cut_time == rnd.trigger_time for b in rnd.batches)
            if rnd.nav_end >= 0:
                assert rnd.trigger_time <= rnd.request_arrival <= rnd.nav_start <= rnd.nav_end <= rnd.result_time

    def test_proactive_keep_rule(self, scenario1):
        res = run_session(scenario1, "pipesd", 600, 2)
        judged = [t for t in res.transcripts if t.kept is not None]
        assert any(t.kept for t in judged) and any(not t.kept for t in judged)
        for t in judged:
            if t.kept:
                assert t.n_accepted == t.n_submitted and t.bonus is not None
        for t in judged:
            if t.n_accepted < t.n_submitted:
                assert t.kept is False

    def test_energy_recomputed_from_transcript(self, scenario1, tmp_path):
        res = run_session(scenario1, "vanilla", 300, 5)
        m = res.metrics
        write_transcripts(tmp_path / "t.jsonl", res.transcripts)
        rows = read_transcripts(tmp_path / "t.jsonl")
        assert len(rows) == len(res.transcripts)
        again = ecs_from_transcripts(rows, m.total_time, m.accepted_tokens, scenario1)
        sample_j = scenario1.cloud_verify_power * scenario1.power_sample_interval / 1000
        assert abs(again - m.ecs) <= sample_j * 100 / m.accepted_tokens
        trace = power_trace([(0, 10_000)], 20_000, scenario1)
        assert [w for _, w in trace] == [250.0, 250.0, 80.0, 80.0]

    def test_time_guard(self, scenario1):
        with pytest.raises(SimulationError):
            run_session(scenario1, "vanilla", 1000, 0, SimOptions(max_sim_time_s=1.0))

    def test_overheads_charged(self, scenario1):
        m = run_session(scenario1, "pipesd", 1000, 1).metrics
        assert m.bo_time > 0 and m.dp_time > 0 and m.pm_time > 0
        assert (m.bo_time + m.dp_time + m.pm_time) < 0.02 * m.total_time
        assert run_session(scenario1, "vanilla", 200, 1).metrics.bo_time == 0


class TestMultiClient:
    def test_single_equals_session(self, scenario1):
        a = run_multi_client(scenario1, 1, "pipesd", 4, 300)[0]
        b = run_session(scenario1, "pipesd", 300, 4)
        assert a.metrics == b.metrics

    def test_queueing_only_hurts(self, scenario1):
        single = run_session(scenario1, "vanilla", 300, 4).metrics.tpt
        pair = run_multi_client(scenario1, 2, "vanilla", 4, 300, SimOptions(identical_clients=True))
        assert all(r.metrics.tpt >= single for r in pair)

    def test_clients_lossless(self, scenario4):
        for r in run_multi_client(scenario4, 4, "pipesd", 2, 200):
            assert lossless(r)
