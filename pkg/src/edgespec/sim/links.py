"""Piecewise-constant bandwidth schedules and link timing."""
from __future__ import annotations

import hashlib
import struct

from ..core import US_PER_MS, US_PER_S, ValidationError


def _unit(seed: int, stream: int, index: int) -> float:
    d = hashlib.blake2b(struct.pack(">3q", seed, stream, index), digest_size=8).digest()
    return struct.unpack(">Q", d)[0] / float(1 << 64)


class BandwidthSchedule:
    """Bandwidth (bits/s) as a function of simulated time (µs).

    Accepts a constant, a cycled list of ``[interval_ms, bps]`` pairs, or a
    random spec ``{"low", "high", "interval_ms"}`` redrawn uniformly at each
    interval from a seeded stream.
    """

    def __init__(self, spec, seed: int = 0, stream: int = 0):
        self.spec = spec
        self.seed = seed
        self.stream = stream
        if isinstance(spec, (int, float)):
            self.kind = "constant"
        elif isinstance(spec, list):
            self.kind = "list"
            self._cycle = sum(int(round(i * US_PER_MS)) for i, _ in spec)
        elif isinstance(spec, dict):
            self.kind = "random"
            self._interval = int(round(spec["interval_ms"] * US_PER_MS))
        else:
            raise ValidationError(f"unsupported bandwidth spec {spec!r}")

    def at(self, t: int) -> float:
        if self.kind == "constant":
            return float(self.spec)
        if self.kind == "random":
            idx = t // self._interval
            lo, hi = self.spec["low"], self.spec["high"]
            return lo + (hi - lo) * _unit(self.seed, self.stream, idx)
        t %= self._cycle
        for interval_ms, bps in self.spec:
            span = int(round(interval_ms * US_PER_MS))
            if t < span:
                return float(bps)
            t -= span
        return float(self.spec[-1][1])

    def next_change(self, t: int):
        """First change instant strictly after ``t`` (None if constant)."""
        if self.kind == "constant":
            return None
        if self.kind == "random":
            return (t // self._interval + 1) * self._interval
        base = t - t % self._cycle
        acc = base
        for interval_ms, _ in self.spec:
            acc += int(round(interval_ms * US_PER_MS))
            if acc > t:
                return acc
        return base + self._cycle


def bandwidth_schedule_step(uplink: BandwidthSchedule, downlink: BandwidthSchedule, t: int) -> tuple[float, float]:
    return uplink.at(t), downlink.at(t)


def transfer_time(payload_bits: float, bps: float) -> int:
    """Serialization time rounded to whole µs."""
    if payload_bits <= 0:
        return 0
    return int(round(payload_bits * US_PER_S / bps))
