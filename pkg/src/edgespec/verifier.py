"""Cloud-side per-session verification state.

Shared by the simulator's cloud and the network server. The edge tags
every batch and verification request with an epoch that it bumps after
each rollback; tokens and requests from an abandoned lineage are dropped.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

from .core import VerificationResult
from .workload import TargetOracle, target_next, verify


class ProtocolViolation(RuntimeError):
    pass


def proactive_keep(result: VerificationResult, first_proactive: Optional[int]) -> Optional[bool]:
    """Keep/discard rule for drafts produced while a verification was pending.

    Returns None when there is no proactive token to judge, True when every
    submitted token was accepted and the target's extra token equals the
    first proactive draft, False otherwise.
    """
    if first_proactive is None:
        return None
    return result.all_accepted and result.bonus == first_proactive


@dataclass
class NavOutcome:
    result: VerificationResult
    verify_start: int
    kept: Optional[bool]


class CloudSession:
    def __init__(self, oracle: TargetOracle):
        self.oracle = oracle
        self.confirmed = 0
        self.epoch = 0
        self._buffer: dict[int, tuple[int, int]] = {}
        self.verified_rounds = 0
        self.output: list[int] = []

    def receive(self, epoch: int, start: int, tokens: Sequence[int]) -> None:
        if epoch < self.epoch:
            return
        if epoch > self.epoch:
            self.epoch = epoch
        for i, tok in enumerate(tokens):
            pos = start + i
            if pos >= self.confirmed:
                self._buffer[pos] = (epoch, int(tok))

    def admissible(self, start: int, end: int, epoch: int) -> bool:
        """Whether a verification request still extends the confirmed output."""
        if epoch < self.epoch:
            return False
        if start == self.confirmed + 1:
            return True
        if start == self.confirmed and start >= 1:
            # first token was proactive: valid only if it equals the target's extra token
            held = self._buffer.get(start)
            return held is not None and held[0] == epoch and held[1] == target_next(self.oracle, start)
        return False

    def verify(self, start: int, end: int, epoch: int) -> NavOutcome:
        if not self.admissible(start, end, epoch):
            raise ProtocolViolation(f"request [{start}, {end}] does not extend confirmed prefix {self.confirmed}")
        v_start = max(start, self.confirmed + 1)
        tokens = []
        for pos in range(v_start, end + 1):
            held = self._buffer.get(pos)
            if held is None or held[0] != epoch:
                raise ProtocolViolation(f"token at position {pos} not received before verification")
            tokens.append(held[1])
        result = verify(self.oracle, v_start, tokens)
        self.output.extend(tokens[: result.n_accepted])
        self.output.append(result.next_token)
        self.confirmed = v_start + result.n_accepted
        proactive = [p for p in self._buffer if p > end and self._buffer[p][0] == epoch]
        if not result.all_accepted:
            # the edge abandons this lineage too; anything still queued from it is stale
            self.epoch = epoch + 1
            self._buffer = {}
            kept: Optional[bool] = False if proactive else None
        else:
            first = self._buffer.get(self.confirmed)
            kept = None
            if first is not None and first[0] == epoch:
                kept = first[1] == result.bonus
            if kept is False:
                self._buffer = {}
            else:
                self._buffer = {p: v for p, v in self._buffer.items() if p >= self.confirmed}
        self.verified_rounds += 1
        return NavOutcome(result, v_start, kept)
