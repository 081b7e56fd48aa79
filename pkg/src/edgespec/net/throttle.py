"""Application-level link shaping: a token bucket plus a per-message startup delay."""
from __future__ import annotations

import asyncio
import time
from typing import Optional


class TokenBucket:
    """Classic token bucket metered in bytes.

    ``rate_bps`` is the sustained rate in bits per second; ``burst`` is the
    bucket depth in bytes. ``delay_for`` reports how long a caller must wait
    before ``nbytes`` may leave, and debits the bucket (it may go negative,
    which is how queued demand is serialised).
    """

    def __init__(self, rate_bps: float, burst: int = 1500, clock=time.monotonic):
        if rate_bps <= 0:
            raise ValueError("rate must be positive")
        if burst < 1:
            raise ValueError("burst must be >= 1 byte")
        self.rate = rate_bps / 8.0
        self.burst = float(burst)
        self.clock = clock
        self.level = float(burst)
        self.stamp = clock()

    def _refill(self) -> None:
        now = self.clock()
        self.level = min(self.burst, self.level + (now - self.stamp) * self.rate)
        self.stamp = now

    def delay_for(self, nbytes: int) -> float:
        self._refill()
        self.level -= nbytes
        return 0.0 if self.level >= 0 else -self.level / self.rate


class Shaper:
    """Wraps a stream writer so each message pays ``startup_ms`` then the bucket rate."""

    def __init__(self, writer: asyncio.StreamWriter, rate_bps: Optional[float] = None,
                 startup_ms: float = 0.0, burst: int = 1500):
        self.writer = writer
        self.bucket = TokenBucket(rate_bps, burst) if rate_bps else None
        self.startup = startup_ms / 1000.0

    async def send(self, data: bytes) -> float:
        """Write one message; returns the elapsed wall time in ms."""
        t0 = time.perf_counter()
        if self.startup > 0:
            await asyncio.sleep(self.startup)
        if self.bucket is not None:
            wait = self.bucket.delay_for(len(data))
            if wait > 0:
                await asyncio.sleep(wait)
        self.writer.write(data)
        await self.writer.drain()
        return (time.perf_counter() - t0) * 1000.0
