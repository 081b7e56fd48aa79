"""Seeded stand-ins for the draft/target model pair and cloud hardware.

The target is a deterministic token stream (greedy decoding), so the
lossless property of speculative decoding becomes an exact equality: the
accepted output must equal the stream prefix. The draft model is
calibrated: a token drafted with confidence ``p`` matches the target with
probability ``p ** kappa``.
"""
from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np
from scipy import special, stats

from .core import DraftToken, ValidationError, VerificationResult

_U64 = float(1 << 64)
_PPF_GRID = 1 << 16


def _hash_u64s(*key: int, count: int = 1) -> tuple[int, ...]:
    digest = hashlib.blake2b(struct.pack(f">{len(key)}q", *key), digest_size=8 * count).digest()
    return struct.unpack(f">{count}Q", digest)


@dataclass(frozen=True)
class TargetOracle:
    seed: int
    vocab_size: int = 32000

    def __post_init__(self):
        if self.vocab_size < 2:
            raise ValidationError("vocabulary needs at least two tokens")


def target_next(oracle: TargetOracle, position: int) -> int:
    """Target token at 1-based ``position``; pure in ``(seed, position)``."""
    if position < 1:
        raise ValidationError(f"position must be >= 1, got {position}")
    return _hash_u64s(oracle.seed, position)[0] % oracle.vocab_size


def target_prefix(oracle: TargetOracle, length: int) -> list[int]:
    return [target_next(oracle, p) for p in range(1, length + 1)]


@dataclass(frozen=True)
class DraftModelConfig:
    """Confidence distribution of the draft model.

    With ``hard_rate > 0`` the text alternates between easy spans
    (confidence ~ Beta(a, b)) and hard spans (Beta(hard_a, hard_b)); a hard
    span starts at each easy position with probability ``hard_rate`` and
    ends at each hard position with probability ``1 / hard_span``. The
    span pattern is a property of the text position, not of the attempt.
    """

    a: float = 8.0
    b: float = 2.0
    kappa: float = 1.0
    seed: int = 0
    hard_rate: float = 0.0
    hard_span: float = 4.0
    hard_a: float = 2.0
    hard_b: float = 2.0

    def __post_init__(self):
        if self.a <= 0 or self.b <= 0 or self.hard_a <= 0 or self.hard_b <= 0:
            raise ValidationError("Beta parameters must be positive")
        if self.kappa <= 0:
            raise ValidationError("kappa must be positive")
        if not 0.0 <= self.hard_rate < 1.0:
            raise ValidationError("hard_rate must lie in [0, 1)")
        if self.hard_span < 1.0:
            raise ValidationError("hard_span must be >= 1")

    def expected_acceptance(self) -> float:
        """E[p**kappa] for p ~ Beta(a, b) (the easy-span distribution)."""
        return float(np.exp(special.betaln(self.a + self.kappa, self.b) - special.betaln(self.a, self.b)))


@lru_cache(maxsize=32)
def _beta_ppf_table(a: float, b: float) -> np.ndarray:
    grid = np.linspace(0.0, 1.0, _PPF_GRID + 1)
    return stats.beta.ppf(grid, a, b)


def _confidence_from_uniform(config: DraftModelConfig, u: float, hard: bool = False) -> float:
    table = _beta_ppf_table(config.hard_a, config.hard_b) if hard else _beta_ppf_table(config.a, config.b)
    x = u * _PPF_GRID
    i = int(x)
    if i >= _PPF_GRID:
        p = float(table[-1])
    else:
        frac = x - i
        p = float(table[i] * (1.0 - frac) + table[i + 1] * frac)
    # confidences live in (0, 1]
    return min(max(p, 1e-12), 1.0)


def _draft_from_uniforms(config, oracle, position, u_conf, u_match, u_token, hard=False) -> DraftToken:
    p = _confidence_from_uniform(config, u_conf, hard)
    truth = target_next(oracle, position)
    if u_match < p ** config.kappa:
        token = truth
    else:
        other = int(u_token * (oracle.vocab_size - 1))
        token = other if other < truth else other + 1
    return DraftToken(token, p, position)


def draft_next(config: DraftModelConfig, oracle: TargetOracle, position: int, rng: np.random.Generator) -> DraftToken:
    """Draft one token: ``p ~ Beta(a, b)``, matching the target w.p. ``p**kappa``."""
    u = rng.random(3)
    return _draft_from_uniforms(config, oracle, position, float(u[0]), float(u[1]), float(u[2]))


class DraftModel:
    """Draft source keyed by ``(seed, position, attempt)``.

    Redrafting a position after a rollback uses a fresh attempt index, so
    runs of different policies with the same seed share their random draws
    position by position (common random numbers).
    """

    def __init__(self, config: DraftModelConfig, oracle: TargetOracle):
        self.config = config
        self.oracle = oracle
        self._attempts: dict[int, int] = {}
        self._hard = [False]  # index 0 is the prompt

    def prepare(self) -> None:
        """Build the inverse-CDF tables now rather than on the first draft."""
        _beta_ppf_table(self.config.a, self.config.b)
        if self.config.hard_rate > 0:
            _beta_ppf_table(self.config.hard_a, self.config.hard_b)

    def is_hard(self, position: int) -> bool:
        cfg = self.config
        if cfg.hard_rate == 0.0:
            return False
        leave = 1.0 / cfg.hard_span
        while len(self._hard) <= position:
            pos = len(self._hard)
            u = _hash_u64s(cfg.seed, pos, -1, 0)[0] / _U64
            prev = self._hard[-1]
            self._hard.append(u >= leave if prev else u < cfg.hard_rate)
        return self._hard[position]

    def draft(self, position: int) -> DraftToken:
        attempt = self._attempts.get(position, 0)
        self._attempts[position] = attempt + 1
        h = _hash_u64s(self.config.seed, position, attempt, count=3)
        return _draft_from_uniforms(self.config, self.oracle, position,
                                    h[0] / _U64, h[1] / _U64, h[2] / _U64, self.is_hard(position))


def verify(oracle: TargetOracle, start_position: int, draft_tokens: Sequence[int]) -> VerificationResult:
    """Longest matching prefix against the target, plus correction or bonus."""
    n = len(draft_tokens)
    for i, tok in enumerate(draft_tokens):
        truth = target_next(oracle, start_position + i)
        if tok != truth:
            return VerificationResult(i, n, correction=truth)
    return VerificationResult(n, n, bonus=target_next(oracle, start_position + n))


def artificial_delay(base_gen_time: float, f_real: float, f_sim: float) -> float:
    """Extra per-token delay emulating a slower edge clock."""
    if f_real <= 0 or f_sim <= 0:
        raise ValidationError("frequencies must be positive")
    if f_sim > f_real:
        raise ValidationError("simulated frequency cannot exceed the real one")
    return base_gen_time * (f_real / f_sim - 1.0)


def sample_power_trace(busy: Iterable[tuple[int, int]], horizon: int, interval: int,
                       idle_power: float, busy_power: float) -> list[tuple[int, float]]:
    """Sample a two-level power signal every ``interval`` µs over ``[0, horizon)``.

    ``busy`` holds disjoint, sorted ``[start, end)`` verification intervals.
    """
    if interval <= 0:
        raise ValidationError("sample interval must be positive")
    spans = sorted(busy)
    trace = []
    k = 0
    for t in range(0, horizon, interval):
        while k < len(spans) and spans[k][1] <= t:
            k += 1
        on = k < len(spans) and spans[k][0] <= t < spans[k][1]
        trace.append((t, busy_power if on else idle_power))
    return trace


def energy_integrate(power_trace: Sequence[tuple[float, float]], horizon: float) -> float:
    """Left-Riemann integral (J) of a sampled power trace; times in seconds.

    Each sample holds until the next one; the last holds until ``horizon``.
    """
    energy = 0.0
    for i, (t, watts) in enumerate(power_trace):
        t_next = power_trace[i + 1][0] if i + 1 < len(power_trace) else horizon
        if t_next > t:
            energy += watts * (t_next - t)
    return energy


def ecs(energy_joules: float, accepted_tokens: int) -> float:
    """Energy per 100 accepted tokens."""
    if accepted_tokens <= 0:
        raise ValidationError("need at least one accepted token")
    return energy_joules * 100.0 / accepted_tokens
