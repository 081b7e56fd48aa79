import json

import pytest

from edgespec import (
    BatchingStrategy, PipelineParams, RunMetrics, ScenarioConfig, TriggerThresholds, ValidationError,
    VerificationResult, load_scenario,
)
from edgespec.core import PRESETS, DraftToken, ms_to_us, save_scenario, us_to_ms, validate_strategy


class TestValidateStrategy:
    def test_valid(self):
        assert validate_strategy((1, 2), 4) is None

    def test_first_boundary_not_one(self):
        msg = validate_strategy((2, 3), 4)
        assert msg is not None and "b₁" in msg

    def test_not_strictly_increasing(self):
        msg = validate_strategy((1, 3, 3), 4)
        assert msg is not None and "strictly increasing" in msg

    def test_past_window(self):
        assert validate_strategy((1, 5), 4) is not None

    def test_empty(self):
        assert validate_strategy((), 4) is not None

    def test_construction_rejects_invalid(self):
        with pytest.raises(ValidationError):
            BatchingStrategy((1, 3, 3), 4)

    def test_sizes_and_ends(self):
        s = BatchingStrategy((1, 2, 4), 6)
        assert s.batch_sizes() == [1, 2, 3]
        assert s.batch_ends() == [1, 3, 6]
        assert s.num_batches == 3


class TestPipelineParams:
    def test_from_ms_is_integer_us(self):
        p = PipelineParams.from_ms(10, 2, 5)
        assert (p.alpha, p.beta, p.gamma) == (10_000, 2_000, 5_000)
        assert p.as_ms() == (10.0, 2.0, 5.0)

    @pytest.mark.parametrize("a,b,g", [(-1, 1, 1), (0, 0, 1), (0, 1, 0)])
    def test_invariants(self, a, b, g):
        with pytest.raises(ValidationError):
            PipelineParams(a, b, g)

    def test_unit_helpers(self):
        assert ms_to_us(1.5) == 1500
        assert us_to_ms(2500) == 2.5


class TestValueTypes:
    def test_thresholds(self):
        TriggerThresholds(0.3, 0.7)
        for bad in [(0.0, 0.5), (0.5, 1.0)]:
            with pytest.raises(ValidationError):
                TriggerThresholds(*bad)
        with pytest.raises(ValidationError):
            TriggerThresholds(0.5, 0.5, max_draft_len=0)

    def test_draft_token(self):
        DraftToken(3, 1.0, 1)
        with pytest.raises(ValidationError):
            DraftToken(3, 0.0, 1)
        with pytest.raises(ValidationError):
            DraftToken(3, 0.5, 0)

    def test_verification_result_exactly_one(self):
        assert VerificationResult(2, 2, bonus=5).all_accepted
        assert VerificationResult(1, 2, correction=5).next_token == 5
        with pytest.raises(ValidationError):
            VerificationResult(1, 2)
        with pytest.raises(ValidationError):
            VerificationResult(1, 2, correction=1, bonus=2)
        with pytest.raises(ValidationError):
            VerificationResult(2, 2, correction=1)
        with pytest.raises(ValidationError):
            VerificationResult(3, 2, bonus=1)

    def test_run_metrics_tpt(self):
        m = RunMetrics(total_time=1_000_000, accepted_tokens=8, ecs=1.0, verification_frequency=0.1,
                       mean_draft_length=4, acceptance_rate=0.5)
        assert m.tpt == 125.0
        assert m.as_row()["total_time_ms"] == 1000.0
        with pytest.raises(ValidationError):
            RunMetrics(1, 1, 1.0, 0.1, 1, 1.5)
        with pytest.raises(ValidationError):
            RunMetrics(1, 0, 1.0, 0.1, 1, 0.5)


class TestScenario:
    @pytest.mark.parametrize("name", PRESETS)
    def test_presets_load(self, name):
        sc = load_scenario(name)
        assert sc.name == name
        assert sc.gamma_ms >= sc.base_token_gen_time

    def test_preset_bandwidths(self):
        sc = load_scenario("scenario1")
        assert sc.uplink_bandwidth == 20e6 and sc.downlink_bandwidth == 200e6
        s4 = load_scenario("scenario4")
        assert (s4.uplink_bandwidth["low"], s4.uplink_bandwidth["high"]) == (10e6, 80e6)
        assert (s4.downlink_bandwidth["low"], s4.downlink_bandwidth["high"]) == (150e6, 280e6)
        assert s4.uplink_bandwidth["interval_ms"] == 20_000

    def test_emulated_frequencies(self):
        assert load_scenario("scenario2").gamma_ms == pytest.approx(50 * 5.1 / 2.5)
        assert load_scenario("scenario3").gamma_ms == pytest.approx(50 * 5.1 / 1.2)

    def test_round_trip(self, tmp_path):
        sc = load_scenario("scenario4")
        path = tmp_path / "s.json"
        save_scenario(sc, path)
        assert load_scenario(path) == sc

    def test_rejects_unknown_keys(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"uplink": 1}))
        with pytest.raises(ValidationError):
            load_scenario(path)

    @pytest.mark.parametrize("changes", [
        {"uplink_bandwidth": 0}, {"uplink_bandwidth": []}, {"downlink_bandwidth": {"low": 1}},
        {"base_token_gen_time": 0}, {"edge_frequency_sim": 6.0}, {"cloud_verify_power": 10.0},
        {"comm_startup": -1.0}, {"uplink_bandwidth": [[0, 5]]},
    ])
    def test_invariants(self, changes):
        with pytest.raises(ValidationError):
            ScenarioConfig(**changes)
