"""Shared domain types for the edge/cloud speculative decoding lab.

Durations are carried as integer microseconds everywhere inside the
package; helpers convert to and from milliseconds at the edges (config
files, CSV output).
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from importlib import resources
from pathlib import Path
from typing import Any, Optional, Sequence, Union

US_PER_MS = 1000
US_PER_S = 1_000_000


class ValidationError(ValueError):
    """Raised when a domain value violates its invariants."""


def ms_to_us(value_ms: float) -> int:
    if not math.isfinite(value_ms):
        raise ValidationError(f"duration must be finite, got {value_ms!r}")
    return int(round(value_ms * US_PER_MS))


def us_to_ms(value_us: float) -> float:
    return value_us / US_PER_MS


@dataclass(frozen=True)
class PipelineParams:
    """Latency triple of the pipeline timing model, in integer microseconds.

    ``alpha`` is the per-batch startup overhead, ``beta`` the per-token
    transmission time and ``gamma`` the per-token draft generation time.
    """

    alpha: int
    beta: int
    gamma: int

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, int):
                raise ValidationError(f"{name} must be an integer number of microseconds, got {v!r}")
        if self.alpha < 0:
            raise ValidationError(f"alpha must be >= 0, got {self.alpha}")
        if self.beta <= 0:
            raise ValidationError(f"beta must be > 0, got {self.beta}")
        if self.gamma <= 0:
            raise ValidationError(f"gamma must be > 0, got {self.gamma}")

    @classmethod
    def from_ms(cls, alpha: float, beta: float, gamma: float) -> "PipelineParams":
        return cls(ms_to_us(alpha), ms_to_us(beta), ms_to_us(gamma))

    def as_ms(self) -> tuple[float, float, float]:
        return us_to_ms(self.alpha), us_to_ms(self.beta), us_to_ms(self.gamma)


def validate_strategy(boundaries: Sequence[int], n_hat: int) -> Optional[str]:
    """Check a batch-boundary sequence against window ``n_hat``.

    Returns ``None`` when the sequence is valid, otherwise a description of
    the first violated constraint.
    """
    if n_hat < 1:
        return f"window must be >= 1, got {n_hat}"
    if len(boundaries) == 0:
        return "empty strategy (K must be >= 1)"
    if boundaries[0] != 1:
        return "b₁ ≠ 1"
    for prev, cur in zip(boundaries, boundaries[1:]):
        if cur <= prev:
            return "not strictly increasing"
    if boundaries[-1] > n_hat:
        return f"b_K = {boundaries[-1]} exceeds window {n_hat}"
    return None


@dataclass(frozen=True)
class BatchingStrategy:
    """1-based start indices of each contiguous token batch."""

    boundaries: tuple[int, ...]
    n_hat: int

    def __post_init__(self):
        object.__setattr__(self, "boundaries", tuple(int(b) for b in self.boundaries))
        problem = validate_strategy(self.boundaries, self.n_hat)
        if problem is not None:
            raise ValidationError(problem)

    @property
    def num_batches(self) -> int:
        return len(self.boundaries)

    def batch_sizes(self) -> list[int]:
        ends = list(self.boundaries[1:]) + [self.n_hat + 1]
        return [e - b for b, e in zip(self.boundaries, ends)]

    def batch_ends(self) -> list[int]:
        """1-based index of the last token in each batch."""
        return [b - 1 for b in self.boundaries[1:]] + [self.n_hat]


@dataclass(frozen=True)
class TriggerThresholds:
    r1: float
    r2: float
    max_draft_len: int = 64

    def __post_init__(self):
        if not 0.0 < self.r1 < 1.0:
            raise ValidationError(f"r1 must lie in (0, 1), got {self.r1}")
        if not 0.0 < self.r2 < 1.0:
            raise ValidationError(f"r2 must lie in (0, 1), got {self.r2}")
        if self.max_draft_len < 1:
            raise ValidationError(f"max_draft_len must be >= 1, got {self.max_draft_len}")


@dataclass(frozen=True)
class DraftToken:
    token_id: int
    confidence: float
    position: int

    def __post_init__(self):
        if not 0.0 < self.confidence <= 1.0:
            raise ValidationError(f"confidence must lie in (0, 1], got {self.confidence}")
        if self.position < 1:
            raise ValidationError(f"position must be >= 1, got {self.position}")


@dataclass(frozen=True)
class VerificationResult:
    """Outcome of one verification pass over ``n_submitted`` draft tokens.

    Exactly one of ``correction`` (first mismatch replaced by the target
    token) and ``bonus`` (extra target token after a fully accepted draft)
    is set.
    """

    n_accepted: int
    n_submitted: int
    correction: Optional[int] = None
    bonus: Optional[int] = None

    def __post_init__(self):
        if not 0 <= self.n_accepted <= self.n_submitted:
            raise ValidationError(
                f"n_accepted={self.n_accepted} outside [0, {self.n_submitted}]"
            )
        if (self.correction is None) == (self.bonus is None):
            raise ValidationError("exactly one of correction/bonus must be present")
        if self.correction is not None and self.n_accepted == self.n_submitted:
            raise ValidationError("correction present although every token was accepted")
        if self.bonus is not None and self.n_accepted < self.n_submitted:
            raise ValidationError("bonus present although a token was rejected")

    @property
    def all_accepted(self) -> bool:
        return self.bonus is not None

    @property
    def next_token(self) -> int:
        return self.bonus if self.bonus is not None else self.correction  # type: ignore[return-value]


@dataclass(frozen=True)
class RunMetrics:
    """Per-session summary. ``total_time`` is in microseconds."""

    total_time: int
    accepted_tokens: int
    ecs: float
    verification_frequency: float
    mean_draft_length: float
    acceptance_rate: float
    nav_calls: int = 0
    drafted_tokens: int = 0
    bo_time: int = 0
    dp_time: int = 0
    pm_time: int = 0

    def __post_init__(self):
        if self.accepted_tokens <= 0:
            raise ValidationError("a session must accept at least one token")
        if not 0.0 <= self.acceptance_rate <= 1.0:
            raise ValidationError(f"acceptance_rate {self.acceptance_rate} outside [0, 1]")
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise ValidationError(f"{f.name} must be non-negative")

    @property
    def tpt(self) -> float:
        """Milliseconds per accepted token."""
        return us_to_ms(self.total_time) / self.accepted_tokens

    def as_row(self) -> dict[str, Any]:
        row = asdict(self)
        row["tpt"] = self.tpt
        row["total_time_ms"] = us_to_ms(self.total_time)
        return row


# ----------------------------------------------------------------------------
# Scenario configuration

Bandwidth = Union[float, list, dict]


def _check_bandwidth(name: str, spec: Bandwidth) -> None:
    if isinstance(spec, (int, float)) and not isinstance(spec, bool):
        if spec <= 0:
            raise ValidationError(f"{name} must be positive")
        return
    if isinstance(spec, list):
        if not spec:
            raise ValidationError(f"{name} schedule must be non-empty")
        for item in spec:
            if len(item) != 2 or item[0] <= 0 or item[1] <= 0:
                raise ValidationError(f"{name} schedule entries must be positive (interval_ms, bps) pairs")
        return
    if isinstance(spec, dict):
        low, high, interval = spec.get("low"), spec.get("high"), spec.get("interval_ms")
        if low is None or high is None or interval is None:
            raise ValidationError(f"{name} random schedule needs low, high and interval_ms")
        if not 0 < low <= high or interval <= 0:
            raise ValidationError(f"{name} random schedule must satisfy 0 < low <= high, interval > 0")
        return
    raise ValidationError(f"{name}: unsupported bandwidth specification {spec!r}")


@dataclass(frozen=True)
class ScenarioConfig:
    """Environment description for a simulated or emulated session.

    Bandwidths are bits/s, either a constant, a list of
    ``[interval_ms, bps]`` pairs (cycled), or a seeded random schedule
    ``{"low": bps, "high": bps, "interval_ms": ms}``.
    """

    name: str = "custom"
    uplink_bandwidth: Bandwidth = 20e6
    downlink_bandwidth: Bandwidth = 200e6
    edge_frequency_real: float = 5.1
    edge_frequency_sim: float = 5.1
    base_token_gen_time: float = 50.0
    token_payload_bytes: int = 2048
    result_payload_bytes: int = 64
    comm_startup: float = 40.0
    downlink_startup: float = 10.0
    nav_base_latency: float = 40.0
    nav_per_token_latency: float = 1.0
    cloud_idle_power: float = 80.0
    cloud_verify_power: float = 250.0
    power_sample_interval: float = 5.0
    vocab_size: int = 32000
    draft_beta_a: float = 8.0
    draft_beta_b: float = 2.0
    draft_kappa: float = 1.0
    draft_hard_rate: float = 0.0
    draft_hard_span: float = 4.0
    draft_hard_a: float = 2.0
    draft_hard_b: float = 2.0
    max_draft_len: int = 64
    n_hat_initial: int = 20
    seed: int = 0
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        _check_bandwidth("uplink_bandwidth", self.uplink_bandwidth)
        _check_bandwidth("downlink_bandwidth", self.downlink_bandwidth)
        positive = (
            "edge_frequency_real", "edge_frequency_sim", "base_token_gen_time",
            "token_payload_bytes", "result_payload_bytes", "cloud_idle_power",
            "cloud_verify_power", "power_sample_interval", "vocab_size",
            "draft_beta_a", "draft_beta_b", "draft_kappa", "draft_hard_span", "draft_hard_a",
            "draft_hard_b", "max_draft_len", "n_hat_initial",
        )
        for name in positive:
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be positive")
        non_negative = ("comm_startup", "downlink_startup", "nav_base_latency", "nav_per_token_latency")
        if not 0.0 <= self.draft_hard_rate < 1.0:
            raise ValidationError("draft_hard_rate must lie in [0, 1)")
        for name in non_negative:
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} must be non-negative")
        if self.edge_frequency_sim > self.edge_frequency_real:
            raise ValidationError("simulated edge frequency cannot exceed the real one")
        if self.cloud_verify_power < self.cloud_idle_power:
            raise ValidationError("verify power must be >= idle power")

    @property
    def gamma_ms(self) -> float:
        """Effective per-token generation time including emulation delay."""
        from .workload import artificial_delay

        return self.base_token_gen_time + artificial_delay(
            self.base_token_gen_time, self.edge_frequency_real, self.edge_frequency_sim
        )

    def with_overrides(self, **changes) -> "ScenarioConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        d = asdict(self)
        if not d["extra"]:
            d.pop("extra")
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValidationError(f"unknown scenario keys: {sorted(unknown)}")
        return cls(**data)


PRESETS = ("scenario1", "scenario2", "scenario3", "scenario4")


def load_scenario(source: Union[str, Path]) -> ScenarioConfig:
    """Load a scenario from a JSON file path or a bundled preset name."""
    text = None
    src = str(source)
    if src in PRESETS:
        text = resources.files("edgespec.scenarios").joinpath(f"{src}.json").read_text()
    else:
        text = Path(src).read_text()
    return ScenarioConfig.from_dict(json.loads(text))


def save_scenario(config: ScenarioConfig, path: Union[str, Path]) -> None:
    Path(path).write_text(json.dumps(config.to_dict(), indent=2) + "\n")
