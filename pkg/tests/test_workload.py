import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import special

from edgespec import ValidationError
from edgespec.verifier import CloudSession, ProtocolViolation, proactive_keep
from edgespec.workload import (
    DraftModel, DraftModelConfig, TargetOracle, _draft_from_uniforms, artificial_delay, draft_next, ecs,
    energy_integrate, sample_power_trace, target_next, target_prefix, verify,
)
from edgespec import VerificationResult


class TestOracle:
    def test_deterministic_and_random_access(self):
        o = TargetOracle(5)
        assert target_next(o, 17) == target_next(TargetOracle(5), 17)
        assert target_prefix(o, 20)[16] == target_next(o, 17)
        assert all(0 <= t < o.vocab_size for t in target_prefix(o, 500))

    def test_seeds_differ(self):
        same = sum(target_prefix(TargetOracle(s), 100) == target_prefix(TargetOracle(s + 1000), 100)
                   for s in range(1000))
        assert same == 0

    def test_rejects(self):
        with pytest.raises(ValidationError):
            target_next(TargetOracle(0), 0)
        with pytest.raises(ValidationError):
            TargetOracle(0, vocab_size=1)


class TestDraft:
    def test_calibration(self):
        cfg = DraftModelConfig(a=8, b=2, kappa=1.0)
        oracle = TargetOracle(1)
        rng = np.random.default_rng(0)
        n = 100_000
        hits = sum(draft_next(cfg, oracle, p, rng).token_id == target_next(oracle, p) for p in range(1, n + 1))
        expected = np.exp(special.betaln(9, 2) - special.betaln(8, 2))
        assert expected == pytest.approx(0.8)
        assert cfg.expected_acceptance() == pytest.approx(0.8)
        assert abs(hits / n - expected) < 0.01

    def test_degenerate_confidence_always_matches(self):
        cfg, oracle = DraftModelConfig(), TargetOracle(2)
        for pos in range(1, 200):
            tok = _draft_from_uniforms(cfg, oracle, pos, 1.0, 0.999999, 0.5)
            assert tok.confidence == 1.0 and tok.token_id == target_next(oracle, pos)

    def test_large_kappa_mismatches(self):
        cfg = DraftModelConfig(kappa=200.0)
        oracle = TargetOracle(3)
        rng = np.random.default_rng(1)
        hits = sum(draft_next(cfg, oracle, p, rng).token_id == target_next(oracle, p) for p in range(1, 2001))
        assert hits / 2000 < 0.05

    def test_mismatch_is_different_token(self):
        oracle = TargetOracle(4)
        for pos in range(1, 300):
            tok = _draft_from_uniforms(DraftModelConfig(), oracle, pos, 0.5, 0.999999999, pos / 300)
            assert tok.token_id != target_next(oracle, pos) and 0 <= tok.token_id < oracle.vocab_size

    def test_common_random_numbers(self):
        cfg = DraftModelConfig(seed=9, hard_rate=0.1)
        a, b = DraftModel(cfg, TargetOracle(9)), DraftModel(cfg, TargetOracle(9))
        first = [a.draft(p) for p in range(1, 50)]
        assert first == [b.draft(p) for p in range(1, 50)]
        # a redraft uses a fresh attempt index
        assert [a.draft(p) for p in range(1, 50)] != first

    def test_hard_spans(self):
        cfg = DraftModelConfig(seed=1, a=30, b=0.3, hard_rate=0.08, hard_span=3, hard_a=1, hard_b=4)
        m = DraftModel(cfg, TargetOracle(1))
        m.prepare()
        hard = [m.is_hard(p) for p in range(1, 20_001)]
        frac = sum(hard) / len(hard)
        # stationary share of a two-state chain: rate / (rate + 1/span)
        assert frac == pytest.approx(0.08 / (0.08 + 1 / 3), abs=0.02)
        conf_hard = np.mean([m.draft(p).confidence for p in range(1, 20_001) if hard[p - 1]])
        assert conf_hard == pytest.approx(0.2, abs=0.02)

    def test_config_validation(self):
        for kw in ({"a": 0}, {"kappa": 0}, {"hard_rate": 1.0}, {"hard_span": 0.5}):
            with pytest.raises(ValidationError):
                DraftModelConfig(**kw)


class TestVerify:
    oracle = TargetOracle(11)

    def truth(self, start, n):
        return [target_next(self.oracle, p) for p in range(start, start + n)]

    def test_all_match(self):
        r = verify(self.oracle, 5, self.truth(5, 4))
        assert (r.n_accepted, r.bonus) == (4, target_next(self.oracle, 9))

    def test_first_mismatch(self):
        toks = self.truth(5, 3)
        toks[0] += 1
        r = verify(self.oracle, 5, toks)
        assert (r.n_accepted, r.correction) == (0, target_next(self.oracle, 5))

    def test_middle_mismatch(self):
        toks = self.truth(1, 4)
        toks[2] += 1
        r = verify(self.oracle, 1, toks)
        assert r.n_accepted == 2 and r.correction == target_next(self.oracle, 3)

    def test_empty(self):
        r = verify(self.oracle, 1, [])
        assert r.n_accepted == 0 and r.bonus == target_next(self.oracle, 1)

    @given(st.integers(1, 1000), st.lists(st.integers(0, 31999), max_size=10))
    def test_idempotent(self, start, toks):
        assert verify(self.oracle, start, toks) == verify(self.oracle, start, toks)


class TestDelayAndEnergy:
    def test_delay(self):
        assert artificial_delay(100, 5.1, 2.5) == pytest.approx(104)
        assert artificial_delay(100, 5.1, 1.2) == pytest.approx(325)
        assert artificial_delay(100, 5.1, 5.1) == 0
        with pytest.raises(ValidationError):
            artificial_delay(100, 2.0, 3.0)

    def test_energy(self):
        trace = [(i * 0.005, 100.0) for i in range(200)]
        assert energy_integrate(trace, 1.0) == pytest.approx(100.0)
        trace = [(i * 0.005, 80.0 if i < 100 else 250.0) for i in range(200)]
        assert energy_integrate(trace, 1.0) == pytest.approx(165.0)
        assert energy_integrate([], 1.0) == 0.0

    def test_power_trace(self):
        trace = sample_power_trace([(10, 20)], 30, 5, 80.0, 250.0)
        assert [w for _, w in trace] == [80.0, 80.0, 250.0, 250.0, 80.0, 80.0]

    def test_ecs(self):
        assert ecs(50.0, 200) == 25.0
        with pytest.raises(ValidationError):
            ecs(1.0, 0)


class TestCloudSession:
    oracle = TargetOracle(21)

    def test_keep_rule(self):
        assert proactive_keep(VerificationResult(2, 2, bonus=7), 7) is True
        assert proactive_keep(VerificationResult(2, 2, bonus=7), 8) is False
        assert proactive_keep(VerificationResult(1, 2, correction=7), 7) is False
        assert proactive_keep(VerificationResult(2, 2, bonus=7), None) is None

    def test_round_with_kept_proactive(self):
        s = CloudSession(self.oracle)
        truth = target_prefix(self.oracle, 10)
        s.receive(0, 1, truth[:3])
        s.receive(0, 4, truth[3:6])  # proactive; first equals the bonus
        out = s.verify(1, 3, 0)
        assert out.kept is True and s.confirmed == 4
        # next round starts at the bonus position, which is already confirmed
        assert s.admissible(4, 6, 0)
        out = s.verify(4, 6, 0)
        assert out.verify_start == 5 and out.result.n_accepted == 2
        assert s.output == truth[:7]

    def test_partial_discards_and_bumps_epoch(self):
        s = CloudSession(self.oracle)
        truth = target_prefix(self.oracle, 6)
        s.receive(0, 1, [truth[0], truth[1] + 1, truth[2]])
        s.receive(0, 4, truth[3:5])
        out = s.verify(1, 3, 0)
        assert out.result.n_accepted == 1 and out.kept is False and s.epoch == 1
        s.receive(0, 3, [1, 2])  # stale lineage ignored
        assert not s.admissible(3, 4, 0)
        with pytest.raises(ProtocolViolation):
            s.verify(3, 3, 1)  # nothing received for the new epoch

    def test_missing_tokens(self):
        s = CloudSession(self.oracle)
        s.receive(0, 1, target_prefix(self.oracle, 2))
        with pytest.raises(ProtocolViolation):
            s.verify(1, 4, 0)
