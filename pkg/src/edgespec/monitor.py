"""Online estimation of (alpha, beta, gamma) and change detection."""
from __future__ import annotations

import csv
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .core import PipelineParams, ValidationError

WINDOW = 100
N_HAT_INITIAL = 20
PROBE_SIZES = tuple(range(1, 9))


class SlidingWindow:
    """Bounded FIFO of the most recent ``capacity`` measurements."""

    def __init__(self, capacity: int = WINDOW):
        if capacity < 1:
            raise ValidationError("capacity must be >= 1")
        self.capacity = capacity
        self._items: deque = deque(maxlen=capacity)

    def push(self, item) -> None:
        self._items.append(item)

    def clear(self) -> None:
        self._items.clear()

    @property
    def full(self) -> bool:
        return len(self._items) == self.capacity

    def snapshot(self) -> list:
        return list(self._items)

    def __len__(self) -> int:
        return len(self._items)

    def __iter__(self):
        return iter(list(self._items))


@dataclass(frozen=True)
class ParamEstimates:
    """Estimated latency triple (floating ms) plus provenance."""

    alpha: float
    beta: float
    gamma: float
    comm_samples: int = 0
    gen_samples: int = 0
    residual: float = 0.0

    def __post_init__(self):
        if self.residual < 0:
            raise ValidationError("residual must be non-negative")

    def to_params(self) -> PipelineParams:
        """Integer-µs triple, clamped into the scheduler's valid domain."""
        return PipelineParams(
            max(0, int(round(self.alpha * 1000))),
            max(1, int(round(self.beta * 1000))),
            max(1, int(round(self.gamma * 1000))),
        )


def estimate_gamma(records: Iterable[tuple[int, float]]) -> float:
    """Per-token generation time from ``(tokens, generation_time)`` batch records."""
    tokens = 0
    total = 0.0
    for n, t in records:
        tokens += n
        total += t
    if tokens == 0:
        raise ValidationError("need at least one generated token")
    return total / tokens


def fit_alpha_beta(records: Iterable[tuple[int, float]]) -> tuple[float, float, float]:
    """Least-squares line through per-size mean communication times.

    ``records`` are ``(batch_size, comm_time)`` pairs. Returns
    ``(intercept, slope, residual)`` with the residual as the RMS error of
    the size means around the fitted line.
    """
    groups: dict[int, list[float]] = {}
    for size, t in records:
        groups.setdefault(int(size), []).append(float(t))
    if len(groups) < 2:
        raise ValidationError(
            f"need at least 2 distinct batch sizes to separate startup from per-token cost, got {len(groups)}"
        )
    sizes = np.array(sorted(groups), dtype=float)
    means = np.array([np.mean(groups[int(s)]) for s in sizes])
    design = np.column_stack([np.ones_like(sizes), sizes])
    (alpha, beta), *_ = np.linalg.lstsq(design, means, rcond=None)
    resid = means - (alpha + beta * sizes)
    residual = float(np.sqrt(np.mean(resid ** 2)))
    # exact data should report an exact zero
    if residual < 1e-9 * max(1.0, float(np.abs(means).max())):
        residual = 0.0
    return float(alpha), float(beta), residual


def missing_probe_sizes(records: Iterable[tuple[int, float]], target: int = 8) -> list[int]:
    """Smallest unseen batch sizes needed to reach ``target`` distinct sizes."""
    seen = {int(s) for s, _ in records}
    need = max(0, target - len(seen))
    out = []
    size = 1
    while len(out) < need:
        if size not in seen:
            out.append(size)
        size += 1
    return out


def relative_change(old: float, new: float) -> float:
    if old == 0:
        return float("inf") if new != 0 else 0.0
    return abs(new - old) / abs(old)


def should_retune_thresholds(tpt_old: float, tpt_new: float, delta1: float = 0.2,
                             windows_full: bool = True) -> bool:
    return windows_full and relative_change(tpt_old, tpt_new) > delta1


def should_reschedule(old: ParamEstimates, new: ParamEstimates, delta2: float = 0.2,
                      delta3: float = 0.2) -> bool:
    return (
        relative_change(old.gamma, new.gamma) > delta2
        or relative_change(old.alpha, new.alpha) > delta3
        or relative_change(old.beta, new.beta) > delta3
    )


def update_window_n_hat(recent_draft_lengths: Sequence[int], current: int = N_HAT_INITIAL) -> int:
    """Moving-average window size, rounded half up, at least 1."""
    if len(recent_draft_lengths) == 0:
        return current
    total = sum(recent_draft_lengths)
    count = len(recent_draft_lengths)
    # integer half-up rounding of total / count
    return max(1, (2 * total + count) // (2 * count))


class EnvironmentMonitor:
    """Sliding-window tracker feeding the scheduler and the autotuner.

    Times are accepted in ms. The monitor only decides; callers perform
    the re-tuning and re-scheduling it signals.
    """

    def __init__(self, window: int = WINDOW, delta1: float = 0.2, delta2: float = 0.2,
                 delta3: float = 0.2, n_hat_initial: int = N_HAT_INITIAL):
        self.delta1, self.delta2, self.delta3 = delta1, delta2, delta3
        self.gen = SlidingWindow(window)
        self.comm = SlidingWindow(window)
        self.draft_lengths = SlidingWindow(window)
        self.tpt_tokens = SlidingWindow(window)
        self.n_hat = n_hat_initial
        self.estimates: Optional[ParamEstimates] = None
        self._comm_since_fit = 0
        self._tpt_old: Optional[float] = None
        self._tokens_since_tpt = 0
        self.log: list[tuple[float, str, float]] = []

    def record(self, now_ms: float, metric: str, value: float) -> None:
        self.log.append((now_ms, metric, value))

    def add_generation(self, tokens: int, elapsed_ms: float) -> None:
        self.gen.push((tokens, elapsed_ms))

    def add_draft_length(self, length: int) -> int:
        self.draft_lengths.push(length)
        self.n_hat = update_window_n_hat(self.draft_lengths.snapshot(), self.n_hat)
        return self.n_hat

    def add_comm(self, size: int, elapsed_ms: float) -> None:
        self.comm.push((size, elapsed_ms))
        self._comm_since_fit += 1

    def bootstrap(self, probes: Sequence[tuple[int, float]], gamma_ms: float) -> ParamEstimates:
        alpha, beta, residual = fit_alpha_beta(probes)
        self.estimates = ParamEstimates(alpha, beta, gamma_ms, len(probes), 0, residual)
        return self.estimates

    def comm_window_ready(self) -> bool:
        """True once a fresh full window of transmitted batches is available."""
        return self.comm.full and self._comm_since_fit >= self.comm.capacity

    def refresh(self, extra_probes: Sequence[tuple[int, float]] = ()) -> tuple[ParamEstimates, bool]:
        """Re-estimate the triple; returns the new estimates and whether to re-run the DP."""
        records = self.comm.snapshot() + list(extra_probes)
        alpha, beta, residual = fit_alpha_beta(records)
        gamma = estimate_gamma(self.gen.snapshot()) if len(self.gen) else self.estimates.gamma
        self._comm_since_fit = 0
        new = ParamEstimates(alpha, beta, gamma, len(records), len(self.gen), residual)
        changed = self.estimates is None or should_reschedule(self.estimates, new, self.delta2, self.delta3)
        if changed:
            self.estimates = new
        return new, changed

    def gamma_changed(self) -> bool:
        if self.estimates is None or not len(self.gen):
            return False
        gamma = estimate_gamma(self.gen.snapshot())
        if relative_change(self.estimates.gamma, gamma) > self.delta2:
            e = self.estimates
            self.estimates = ParamEstimates(e.alpha, e.beta, gamma, e.comm_samples, len(self.gen), e.residual)
            return True
        return False

    def add_accepted(self, tokens: int, elapsed_ms: float) -> bool:
        """Feed accepted tokens with the wall time they took; True means re-tune."""
        per = elapsed_ms / tokens
        for _ in range(tokens):
            self.tpt_tokens.push(per)
        self._tokens_since_tpt += tokens
        if not self.tpt_tokens.full or self._tokens_since_tpt < self.tpt_tokens.capacity:
            return False
        self._tokens_since_tpt = 0
        current = sum(self.tpt_tokens.snapshot()) / len(self.tpt_tokens)
        old = self._tpt_old
        self._tpt_old = current
        if old is None:
            return False
        return should_retune_thresholds(old, current, self.delta1, True)

    def reset_tpt_baseline(self) -> None:
        self._tpt_old = None
        self._tokens_since_tpt = 0
        self.tpt_tokens.clear()

    def dump_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["timestamp_ms", "metric", "value"])
            w.writerows(self.log)
