"""Token-batch pipeline scheduling.

A draft window of ``n`` tokens is generated back to back (``gamma`` per
token) and shipped in contiguous batches over a single uplink. A batch of
``m`` tokens occupies the link for ``alpha + beta * m`` and may start only
once its last token exists and the previous batch has left the link. The
quantity minimised is the completion time of the last batch.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from ..core import BatchingStrategy, PipelineParams, ValidationError, validate_strategy
from ._backend import kernels

BRUTE_FORCE_LIMIT = 16


@dataclass(frozen=True)
class BatchRecord:
    first_token: int
    last_token: int
    gen_start: int
    gen_end: int
    comm_start: int
    comm_end: int

    @property
    def size(self) -> int:
        return self.last_token - self.first_token + 1


@dataclass(frozen=True)
class BatchTimeline:
    batches: tuple[BatchRecord, ...]

    @property
    def total_time(self) -> int:
        return self.batches[-1].comm_end - self.batches[0].gen_start

    @property
    def boundaries(self) -> tuple[int, ...]:
        return tuple(b.first_token for b in self.batches)


@dataclass(frozen=True)
class DpResult:
    strategy: BatchingStrategy
    total_time: int
    table: tuple[int, ...]
    prev: tuple[int, ...]
    ops: int


def _records(bounds: Sequence[int], n: int, raw) -> BatchTimeline:
    ends = [b - 1 for b in bounds[1:]] + [n]
    return BatchTimeline(tuple(
        BatchRecord(b, e, *r) for b, e, r in zip(bounds, ends, raw)
    ))


def evaluate_timeline(strategy: BatchingStrategy | Sequence[int], params: PipelineParams, n: int) -> BatchTimeline:
    bounds = strategy.boundaries if isinstance(strategy, BatchingStrategy) else tuple(strategy)
    problem = validate_strategy(bounds, n)
    if problem is not None:
        raise ValidationError(problem)
    raw = kernels.timeline(list(bounds), n, params.alpha, params.beta, params.gamma)
    return _records(bounds, n, raw)


def dp_optimal_batching(n_hat: int, params: PipelineParams) -> DpResult:
    """Optimal contiguous batching of an ``n_hat``-token window, O(n_hat²)."""
    if n_hat < 1:
        raise ValidationError(f"window must be >= 1, got {n_hat}")
    dp, prev, ops = kernels.dp_table(n_hat, params.alpha, params.beta, params.gamma)
    bounds = []
    p = n_hat
    while p > 0:
        q = prev[p]
        bounds.append(q + 1)
        p = q
    bounds.reverse()
    return DpResult(
        strategy=BatchingStrategy(tuple(bounds), n_hat),
        total_time=int(dp[n_hat]),
        table=tuple(int(v) for v in dp),
        prev=tuple(prev),
        ops=int(ops),
    )


def brute_force_batching(n_hat: int, params: PipelineParams) -> tuple[BatchingStrategy, int]:
    """Enumerate every partition; reference oracle for the DP."""
    if n_hat < 1:
        raise ValidationError(f"window must be >= 1, got {n_hat}")
    if n_hat > BRUTE_FORCE_LIMIT:
        raise ValidationError(
            f"brute force limited to windows <= {BRUTE_FORCE_LIMIT} (2^(n-1) partitions), got {n_hat}"
        )
    bounds, total = kernels.brute_force(n_hat, params.alpha, params.beta, params.gamma)
    return BatchingStrategy(bounds, n_hat), int(total)


def greedy_timeline(params: PipelineParams, n: int) -> BatchTimeline:
    if n < 1:
        raise ValidationError(f"n must be >= 1, got {n}")
    bounds, raw = kernels.greedy(n, params.alpha, params.beta, params.gamma)
    return _records(bounds, n, raw)


def immediate_send_timeline(params: PipelineParams, n: int) -> int:
    if n < 1:
        raise ValidationError(f"n must be >= 1, got {n}")
    return evaluate_timeline(tuple(range(1, n + 1)), params, n).total_time


def no_early_upload_timeline(params: PipelineParams, n: int) -> int:
    if n < 1:
        raise ValidationError(f"n must be >= 1, got {n}")
    return params.gamma * n + params.alpha + params.beta * n


def window_cut_points(strategy: BatchingStrategy) -> frozenset[int]:
    """Window-relative token indices after which a batch is released."""
    return frozenset(strategy.batch_ends())
