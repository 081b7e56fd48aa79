"""Deterministic event queue.

Events are ordered by timestamp, then by a fixed per-kind priority, then by
insertion order, so simultaneous events always resolve the same way.
"""
from __future__ import annotations

import enum
import heapq
import itertools
from typing import Any, Callable


class EventKind(enum.IntEnum):
    # value doubles as the tie-break priority (lower first)
    BANDWIDTH_CHANGE = 0
    BATCH_SEND_END = 1
    NAV_END = 2
    RESULT_DELIVER_END = 3
    TOKEN_GENERATED = 4
    BATCH_SEND_START = 5
    NAV_START = 6
    CLIENT_REQUEST_START = 7


class EventQueue:
    def __init__(self):
        self._heap: list = []
        self._counter = itertools.count()
        self.now = 0
        self.processed = 0

    def schedule(self, time: int, kind: EventKind, handler: Callable[..., None], *args: Any) -> None:
        if time < self.now:
            raise ValueError(f"cannot schedule into the past ({time} < {self.now})")
        heapq.heappush(self._heap, (time, int(kind), next(self._counter), handler, args))

    def __len__(self) -> int:
        return len(self._heap)

    def step(self) -> bool:
        if not self._heap:
            return False
        time, _, _, handler, args = heapq.heappop(self._heap)
        self.now = time
        self.processed += 1
        handler(*args)
        return True
