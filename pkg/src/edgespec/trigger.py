"""Verification-trigger policies as pure incremental state machines.

Each ``*_observe`` function takes the current state and the confidence of
the token just drafted, and returns the next state plus a decision. The
token that fires a trigger belongs to the draft that gets verified.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

from .core import TriggerThresholds, ValidationError

THRESHOLD_EPS = 1e-6
DEFAULT_MAX_DRAFT_LEN = 64


class Reason(enum.Enum):
    SEQUENCE_THRESHOLD = "sequence"
    TOKEN_THRESHOLD = "token"
    FIXED_LENGTH = "fixed"
    SAFETY_CAP = "cap"


@dataclass(frozen=True)
class TriggerState:
    c1: float = 1.0
    tokens_since_nav: int = 0

    def __post_init__(self):
        if not 0.0 < self.c1 <= 1.0:
            raise ValidationError(f"c1 must lie in (0, 1], got {self.c1}")
        if self.tokens_since_nav < 0:
            raise ValidationError("tokens_since_nav must be >= 0")


INITIAL = TriggerState()


@dataclass(frozen=True)
class Decision:
    """``reason`` is None for Continue."""

    reason: Optional[Reason] = None
    c1_at_trigger: float = 1.0

    @property
    def fire(self) -> bool:
        return self.reason is not None


CONTINUE = Decision()


def _check_confidence(confidence: float) -> None:
    if not 0.0 < confidence <= 1.0:
        raise ValidationError(f"confidence must lie in (0, 1], got {confidence!r}")


def _threshold_observe(state, r1, r2, max_draft_len, confidence):
    _check_confidence(confidence)
    c1 = state.c1 * confidence
    count = state.tokens_since_nav + 1
    if r1 is not None and c1 <= r1:
        reason = Reason.SEQUENCE_THRESHOLD
    elif r2 is not None and confidence <= r2:
        reason = Reason.TOKEN_THRESHOLD
    elif count >= max_draft_len:
        reason = Reason.SAFETY_CAP
    else:
        # the running product may underflow to 0 on long low-confidence runs
        return TriggerState(max(c1, 5e-324), count), CONTINUE
    return INITIAL, Decision(reason, c1)


def dual_observe(state: TriggerState, thresholds: TriggerThresholds, confidence: float):
    return _threshold_observe(state, thresholds.r1, thresholds.r2, thresholds.max_draft_len, confidence)


def sequence_level_observe(state: TriggerState, r1: float, confidence: float,
                           max_draft_len: int = DEFAULT_MAX_DRAFT_LEN):
    return _threshold_observe(state, r1, None, max_draft_len, confidence)


def token_level_observe(state: TriggerState, r: float, confidence: float,
                        max_draft_len: int = DEFAULT_MAX_DRAFT_LEN):
    return _threshold_observe(state, None, r, max_draft_len, confidence)


def fixed_length_observe(state: TriggerState, n_fixed: int, confidence: float):
    if n_fixed < 1:
        raise ValidationError(f"n_fixed must be >= 1, got {n_fixed}")
    _check_confidence(confidence)
    c1 = state.c1 * confidence
    count = state.tokens_since_nav + 1
    if count >= n_fixed:
        return INITIAL, Decision(Reason.FIXED_LENGTH, c1)
    return TriggerState(max(c1, 5e-324), count), CONTINUE


def edgellm_update_threshold(r1: float, c1_at_nav: float, n_correct: int, n_hat: int) -> tuple[float, bool]:
    """Adaptive sequence-confidence threshold update applied after each NAV.

    Full acceptance halves the threshold; otherwise it is divided by
    ``c1 ** ((n_hat - n_correct) / n_hat)``. Returns ``(new_r1, clamped)``
    with the result held inside ``[1e-6, 1 - 1e-6]``.
    """
    if not 0.0 < c1_at_nav <= 1.0:
        raise ValidationError(f"c1_at_nav must lie in (0, 1], got {c1_at_nav}")
    if n_hat < 1 or not 0 <= n_correct <= n_hat:
        raise ValidationError(f"need 0 <= n_correct <= n_hat, got {n_correct}, {n_hat}")
    if n_correct == n_hat:
        raw = 0.5 * r1
    else:
        raw = r1 / c1_at_nav ** ((n_hat - n_correct) / n_hat)
    new = min(max(raw, THRESHOLD_EPS), 1.0 - THRESHOLD_EPS)
    return new, new != raw


class TriggerPolicy:
    """Stateful wrapper used by the simulator and the network edge."""

    def __init__(self, kind: str, r1: float = 0.5, r2: float = 0.5, n_fixed: int = 6,
                 max_draft_len: int = DEFAULT_MAX_DRAFT_LEN):
        if kind not in ("dual", "token", "sequence", "fixed", "edgellm"):
            raise ValidationError(f"unknown trigger kind {kind!r}")
        self.kind = kind
        self.r1 = r1
        self.r2 = r2
        self.n_fixed = n_fixed
        self.max_draft_len = max_draft_len
        self.state = INITIAL
        self.clamp_events = 0

    def set_thresholds(self, r1: Optional[float] = None, r2: Optional[float] = None) -> None:
        if r1 is not None:
            self.r1 = r1
        if r2 is not None:
            self.r2 = r2

    def observe(self, confidence: float) -> Decision:
        k = self.kind
        if k == "dual":
            self.state, d = _threshold_observe(self.state, self.r1, self.r2, self.max_draft_len, confidence)
        elif k in ("sequence", "edgellm"):
            self.state, d = _threshold_observe(self.state, self.r1, None, self.max_draft_len, confidence)
        elif k == "token":
            self.state, d = _threshold_observe(self.state, None, self.r2, self.max_draft_len, confidence)
        else:
            self.state, d = fixed_length_observe(self.state, self.n_fixed, confidence)
        return d

    def reset(self, confidences=()) -> None:
        """Rebuild state from the confidences of still-unverified open tokens."""
        c1 = 1.0
        for c in confidences:
            c1 *= c
        self.state = TriggerState(max(c1, 5e-324), len(confidences))

    def after_nav(self, c1_at_nav: float, n_correct: int, n_submitted: int) -> None:
        if self.kind != "edgellm" or n_submitted == 0:
            return
        self.r1, clamped = edgellm_update_threshold(self.r1, c1_at_nav, n_correct, n_submitted)
        self.clamp_events += int(clamped)
